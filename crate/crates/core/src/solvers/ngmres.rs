use std::collections::VecDeque;

use super::anderson::combine;
use super::{
    eval_failure, report, Counted, DVec, EvalError, JfmConfig, Monitor, RestartType, SelectType,
    SolveOutcome, SolveReport,
};

/// Nonlinear GMRES. Each iteration takes a fixed-point candidate `x_M`,
/// combines it with the stored history into `x_A`, then picks between them
/// by the difference criteria or by a basic line search toward `x_A`.
pub fn solve_ngmres<F>(f: F, x0: DVec, cfg: &JfmConfig) -> SolveReport
where
    F: FnMut(&DVec) -> Result<DVec, EvalError>,
{
    let n = x0.len();
    let p = &cfg.ngmres;
    let mut f = Counted::new(f);
    let mut x = x0;
    let mut r = match f.eval(&x) {
        Ok(r) => r,
        Err(e) => return eval_failure(x, n, 0, f.evals, e),
    };
    let mon = Monitor::new(cfg, &r);
    let mut fnorm = r.norm();
    let mut fmin = fnorm;
    let mut hist: VecDeque<(DVec, DVec)> = VecDeque::with_capacity(p.m);
    hist.push_back((r.clone(), x.clone()));
    let mut k_restart = 1usize;
    let mut restart_count = 0usize;
    let mut it = 0;
    loop {
        if mon.converged(&r, &x) {
            return report(x, r, SolveOutcome::Converged, it, f.evals, None);
        }
        if mon.diverged(&r) {
            return report(x, r, SolveOutcome::Diverged, it, f.evals, None);
        }
        if it == cfg.max_it {
            return report(x, r, SolveOutcome::MaxIterations, it, f.evals, None);
        }
        it += 1;

        // Candidate from one fixed-point sweep.
        let xm = &x - &r;
        let fm = match f.eval(&xm) {
            Ok(v) => v,
            Err(e) => return eval_failure(x, n, it, f.evals, e),
        };
        let fm_norm = fm.norm();
        let (xa, fa) = match combine(&mut f, &fm, &xm, &hist) {
            Ok(v) => v,
            Err(e) => return eval_failure(x, n, it, f.evals, e),
        };
        let fa_norm = fa.norm();
        fmin = fmin.min(fm_norm);
        let dnorm = (&xa - &xm).norm();
        let dmin = hist
            .iter()
            .map(|(_, xd)| (xd - &xa).norm())
            .fold(f64::INFINITY, f64::min);

        match p.select_type {
            SelectType::LineSearch => {
                // Basic line search from x_M along x_A - x_M.
                let lambda = p.ls_damping;
                let xn = &xm + (&xa - &xm) * lambda;
                let fnew = match f.eval(&xn) {
                    Ok(v) => v,
                    Err(e) => return eval_failure(x, n, it, f.evals, e),
                };
                fnorm = fnew.norm();
                x = xn;
                r = fnew;
            }
            SelectType::Difference => {
                let crit_a = fa_norm < p.gamma_a * fmin;
                let crit_b = p.epsilon_b * dnorm < dmin || fnorm.sqrt() < p.delta_b * fmin.sqrt();
                if crit_a && crit_b {
                    x = xa.clone();
                    r = fa.clone();
                    fnorm = fa_norm;
                } else {
                    x = xm.clone();
                    r = fm.clone();
                    fnorm = fm_norm;
                }
            }
        }

        match p.restart_type {
            RestartType::Difference => {
                let stagnant =
                    p.epsilon_b * dnorm > dmin && fa_norm.sqrt() > p.delta_b * fmin.sqrt();
                let rising = fa_norm.sqrt() > p.gamma_c * fmin.sqrt();
                if stagnant || rising {
                    restart_count += 1;
                } else {
                    restart_count = 0;
                }
            }
            RestartType::Periodic if k_restart > p.restart => restart_count = p.restart_it,
            _ => {}
        }
        if restart_count >= p.restart_it && p.restart_type != RestartType::None {
            restart_count = 0;
            k_restart = 1;
            hist.clear();
            hist.push_back((fm, xm));
        } else {
            if hist.len() == p.m {
                hist.pop_front();
            }
            k_restart += 1;
            fmin = fmin.min(fnorm);
            hist.push_back((r.clone(), x.clone()));
        }
    }
}
