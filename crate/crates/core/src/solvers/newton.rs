use super::jvp::{jvp_fd, JvpError};
use super::{
    eval_failure, gmres, report, Counted, DVec, EvalError, JfmConfig, LineSearchOrder, Monitor,
    NewtonParams, SolveOutcome, SolveReport,
};

/// Matrix-free Newton: solve `J y = F` with GMRES on finite-difference
/// products, then `x <- x - lambda y` with a backtracking line search on
/// `|F|²`.
pub fn solve_newton_ls<F>(f: F, x0: DVec, cfg: &JfmConfig) -> SolveReport
where
    F: FnMut(&DVec) -> Result<DVec, EvalError>,
{
    let n = x0.len();
    let p = &cfg.newton;
    let mut f = Counted::new(f);
    let mut x = x0;
    let mut r = match f.eval(&x) {
        Ok(r) => r,
        Err(e) => return eval_failure(x, n, 0, f.evals, e),
    };
    let mon = Monitor::new(cfg, &r);
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

        let lin = {
            let (xr, rr) = (&x, &r);
            let mut g = |x: &DVec| f.eval(x);
            gmres(
                |v: &DVec| jvp_fd(&mut g, xr, v, rr, p.fd_h_scale),
                &r,
                p.gmres_restart,
                p.gmres_rtol,
                p.gmres_max_it,
            )
        };
        let y = match lin {
            Ok(l) if l.converged => l.x,
            Ok(_) | Err(JvpError::ZeroDirection) => {
                return report(x, r, SolveOutcome::LinearSolveFailure, it, f.evals, None);
            }
            Err(JvpError::Eval(e)) => return eval_failure(x, n, it, f.evals, e),
        };

        match line_search(&mut f, &x, &r, y, p) {
            Ok(Some((xn, rn))) => {
                x = xn;
                r = rn;
            }
            Ok(None) => return report(x, r, SolveOutcome::LineSearchFailure, it, f.evals, None),
            Err(e) => return eval_failure(x, n, it, f.evals, e),
        }
    }
}

/// Backtracking along `x - lambda y`. Returns the accepted point and its
/// residual, or `None` when lambda falls below `min_lambda`.
fn line_search<F>(
    f: &mut Counted<F>,
    x: &DVec,
    fx: &DVec,
    mut y: DVec,
    p: &NewtonParams,
) -> Result<Option<(DVec, DVec)>, EvalError>
where
    F: FnMut(&DVec) -> Result<DVec, EvalError>,
{
    let mut ynorm = y.norm();
    let xnorm = x.norm();
    if ynorm == 0.0 {
        return Ok(None);
    }
    if ynorm > p.max_step {
        y *= p.max_step / ynorm;
        ynorm = p.max_step;
    }
    let fnorm = fx.norm();
    let fval = fnorm * fnorm;
    // Slope of |F|² along -y from the Jacobian action.
    let jy = {
        let mut g = |z: &DVec| f.eval(z);
        match jvp_fd(&mut g, x, &y, fx, p.fd_h_scale) {
            Ok(v) => v,
            Err(JvpError::Eval(e)) => return Err(e),
            Err(JvpError::ZeroDirection) => return Ok(None),
        }
    };
    let mut initslope = fx.dot(&jy);
    if initslope > 0.0 {
        initslope = -initslope;
    }
    if initslope == 0.0 {
        initslope = -1.0;
    }

    let mut lambda = p.damping;
    let (mut w, mut g, mut gval);
    loop {
        w = x - &y * lambda;
        g = f.eval(&w)?;
        let gn = g.norm();
        gval = gn * gn;
        if gval.is_finite() {
            break;
        }
        if lambda <= p.min_lambda {
            return Ok(None);
        }
        lambda *= 0.5;
    }
    let sufficient =
        |gval: f64, lambda: f64| 0.5 * gval <= 0.5 * fval + lambda * p.alpha * initslope;
    if sufficient(gval, lambda) {
        return Ok(Some((w, g)));
    }
    if p.stol * xnorm > ynorm {
        // Tiny step without decrease: take it and let the outer test decide.
        return Ok(Some((w, g)));
    }
    let mut lambdaprev = lambda;
    let mut gprev = gval;
    if p.ls_order != LineSearchOrder::Linear {
        let lt = -initslope / (gval - fval - 2.0 * lambda * initslope);
        lambda = clamp_lambda(lt, lambda);
        w = x - &y * lambda;
        g = f.eval(&w)?;
        let gn = g.norm();
        gval = gn * gn;
        if !gval.is_finite() {
            return Ok(None);
        }
        if 0.5 * gval < 0.5 * fval + lambda * p.alpha * initslope {
            return Ok(Some((w, g)));
        }
    }
    for _ in 0..p.ls_max_it {
        if lambda <= p.min_lambda {
            return Ok(None);
        }
        let lt = match p.ls_order {
            LineSearchOrder::Cubic => {
                let t1 = 0.5 * (gval - fval) - lambda * initslope;
                let t2 = 0.5 * (gprev - fval) - lambdaprev * initslope;
                let a = (t1 / (lambda * lambda) - t2 / (lambdaprev * lambdaprev))
                    / (lambda - lambdaprev);
                let b = (-lambdaprev * t1 / (lambda * lambda)
                    + lambda * t2 / (lambdaprev * lambdaprev))
                    / (lambda - lambdaprev);
                let d = (b * b - 3.0 * a * initslope).max(0.0);
                if a == 0.0 {
                    -initslope / (2.0 * b)
                } else {
                    (-b + d.sqrt()) / (3.0 * a)
                }
            }
            LineSearchOrder::Quadratic => -initslope / (gval - fval - 2.0 * initslope),
            LineSearchOrder::Linear => 0.5 * lambda,
        };
        lambdaprev = lambda;
        gprev = gval;
        lambda = clamp_lambda(lt, lambda);
        w = x - &y * lambda;
        g = f.eval(&w)?;
        let gn = g.norm();
        gval = gn * gn;
        if !gval.is_finite() {
            return Ok(None);
        }
        if 0.5 * gval < 0.5 * fval + lambda * p.alpha * initslope {
            break;
        }
    }
    // Like the reference implementation, an exhausted search keeps the last
    // trial point.
    Ok(Some((w, g)))
}

/// Keep the new trial within `[0.1, 0.5]` of the previous lambda.
fn clamp_lambda(candidate: f64, lambda: f64) -> f64 {
    let c = if candidate > 0.5 * lambda {
        0.5 * lambda
    } else {
        candidate
    };
    if c <= 0.1 * lambda || c.is_nan() {
        0.1 * lambda
    } else {
        c
    }
}
