use super::{
    eval_failure, report, Counted, DVec, EvalError, JfmConfig, Monitor, SolveOutcome, SolveReport,
};

/// Plain fixed-point iteration `x <- x - F(x)`.
///
/// Costs one evaluation per iteration plus the initial one.
pub fn solve_fixed_point<F>(f: F, x0: DVec, cfg: &JfmConfig) -> SolveReport
where
    F: FnMut(&DVec) -> Result<DVec, EvalError>,
{
    let n = x0.len();
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
        x -= &r;
        it += 1;
        r = match f.eval(&x) {
            Ok(r) => r,
            Err(e) => return eval_failure(x, n, it, f.evals, e),
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::test_util::{contraction, linear, scalar};
    use crate::solvers::SolverMethod;

    fn cfg() -> JfmConfig {
        JfmConfig::new(SolverMethod::FixedPoint)
    }

    #[test]
    fn constant_map_converges_in_one_iteration() {
        let c = DVec::from_vec(vec![3.0, -1.0]);
        let cc = c.clone();
        let r = solve_fixed_point(move |x: &DVec| Ok(x - &cc), DVec::zeros(2), &cfg());
        assert_eq!(r.stats.outcome, SolveOutcome::Converged);
        assert_eq!(r.stats.iterations, 1);
        assert_eq!(r.stats.residual_evals, 2);
        assert_eq!(r.x, c);
    }

    #[test]
    fn halving_map_needs_geometric_iterations() {
        // Ψ(x) = x/2: the residual x/2 must drop below 1e-4 (abs + rel parts).
        let r = solve_fixed_point(scalar(0.5), DVec::from_element(1, 1.0), &cfg());
        assert_eq!(r.stats.outcome, SolveOutcome::Converged);
        // 0.5^(k+1) < 1e-4 (1 + 0.5^k)  =>  k = 13
        let mut k = 0;
        while 0.5f64.powi(k + 1) >= 1e-4 * (1.0 + 0.5f64.powi(k)) {
            k += 1;
        }
        assert_eq!(r.stats.iterations, k as usize);
        assert_eq!(r.stats.residual_evals, r.stats.iterations + 1);
    }

    #[test]
    fn non_contraction_fails() {
        // Ψ(x) = 1.25 x
        let r = solve_fixed_point(
            scalar(-0.25),
            DVec::from_element(1, 1.0),
            &cfg().with_max_it(500),
        );
        assert_eq!(r.stats.outcome, SolveOutcome::Diverged);
        let r = solve_fixed_point(scalar(-0.25), DVec::from_element(1, 1.0), &cfg());
        assert!(!r.stats.outcome.is_converged());
    }

    #[test]
    fn linear_contraction_converges() {
        let (b, c) = contraction(4, 0.7, 3);
        let r = solve_fixed_point(
            linear(b.clone(), c.clone()),
            DVec::zeros(4),
            &cfg().with_max_it(200),
        );
        assert_eq!(r.stats.outcome, SolveOutcome::Converged);
        let exact = b.lu().solve(&c).unwrap();
        assert!((r.x - exact).norm() < 1e-3);
    }

    #[test]
    fn failing_evaluation_is_reported() {
        let mut calls = 0;
        let r = solve_fixed_point(
            |x: &DVec| {
                calls += 1;
                if calls > 2 {
                    Err(EvalError("boom".into()))
                } else {
                    Ok(x * 0.5)
                }
            },
            DVec::from_element(1, 1.0),
            &cfg(),
        );
        assert_eq!(r.stats.outcome, SolveOutcome::EvaluationFailure);
        assert_eq!(r.stats.residual_evals, 3);
        assert_eq!(r.error.unwrap().0, "boom");
    }
}
