use std::collections::VecDeque;

use super::lstsq::min_residual_combination;
use super::{
    eval_failure, report, Counted, DVec, EvalError, JfmConfig, Monitor, RestartType, SolveOutcome,
    SolveReport,
};

/// Anderson mixing with a window of `m` past (residual, mixed iterate)
/// pairs. One evaluation per iteration.
pub fn solve_anderson<F>(f: F, x0: DVec, cfg: &JfmConfig) -> SolveReport
where
    F: FnMut(&DVec) -> Result<DVec, EvalError>,
{
    let n = x0.len();
    let p = &cfg.anderson;
    let mut f = Counted::new(f);
    let mut x = x0;
    let mut r = match f.eval(&x) {
        Ok(r) => r,
        Err(e) => return eval_failure(x, n, 0, f.evals, e),
    };
    let mon = Monitor::new(cfg, &r);
    let mut fmin = r.norm();
    // (F_i, X_i - beta F_i), oldest first.
    let mut hist: VecDeque<(DVec, DVec)> = VecDeque::with_capacity(p.m);
    let mut k_restart = 0usize;
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

        let fm = r.clone();
        let xm = &x - &fm * p.beta;
        let (xa, fa) = match combine(&mut f, &fm, &xm, &hist) {
            Ok(v) => v,
            Err(e) => return eval_failure(x, n, it, f.evals, e),
        };
        let fa_norm = fa.norm();

        match p.restart_type {
            RestartType::Difference => {
                let dnorm = (&xa - &xm).norm();
                let dmin = hist
                    .iter()
                    .map(|(_, xd)| (xd - &xa).norm())
                    .fold(f64::INFINITY, f64::min);
                let dmin = if hist.is_empty() { 0.0 } else { dmin };
                let stagnant = cfg.ngmres.epsilon_b * dnorm > dmin
                    && fa_norm.sqrt() > cfg.ngmres.delta_b * fmin.sqrt()
                    && !hist.is_empty();
                let rising = fa_norm.sqrt() > cfg.ngmres.gamma_c * fmin.sqrt();
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
            k_restart = 0;
            hist.clear();
        } else {
            if hist.len() == p.m {
                hist.pop_front();
            }
            hist.push_back((fm, xm));
            k_restart += 1;
        }
        fmin = fmin.min(fa_norm);
        x = xa;
        r = fa;
    }
}

/// Minimum-residual combination of `(fm, xm)` with the history, then one
/// evaluation at the combined point.
pub(super) fn combine<F>(
    f: &mut Counted<F>,
    fm: &DVec,
    xm: &DVec,
    hist: &VecDeque<(DVec, DVec)>,
) -> Result<(DVec, DVec), EvalError>
where
    F: FnMut(&DVec) -> Result<DVec, EvalError>,
{
    let fdots: Vec<&DVec> = hist.iter().map(|(fd, _)| fd).collect();
    let alpha = min_residual_combination(fm, &fdots);
    let mut xa = xm.clone();
    for (a, (_, xd)) in alpha.iter().zip(hist) {
        if *a != 0.0 {
            xa += (xd - xm) * *a;
        }
    }
    let fa = f.eval(&xa)?;
    Ok((xa, fa))
}
