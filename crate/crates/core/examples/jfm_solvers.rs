//! The nonlinear solvers on their own, on a small nonlinear system
//! `F(x) = x - Ψ(x)` where Ψ is not a contraction.

use ifosmondi::solvers::{solve, DVec, JfmConfig, SolverMethod};

fn main() {
    // Ψ(x) = (1.4 cos(x1) - 1.2 x1 + 0.3, -1.3 x0 + 0.1 sin(x0))
    let f = |x: &DVec| {
        let psi = DVec::from_vec(vec![
            1.4 * x[1].cos() - 1.2 * x[1] + 0.3,
            -1.3 * x[0] + 0.1 * x[0].sin(),
        ]);
        Ok(x - psi)
    };
    for method in SolverMethod::ALL {
        let cfg = JfmConfig::new(method).with_eps(1e-10).with_max_it(200);
        let r = solve(f, DVec::zeros(2), &cfg);
        println!(
            "{:<12} {:<20} iterations {:>3}  evaluations {:>4}  |F| {:.1e}",
            method.name(),
            r.stats.outcome.name(),
            r.stats.iterations,
            r.stats.residual_evals,
            r.stats.final_residual_norm
        );
    }

    // Options use the PETSc spelling.
    let mut cfg = JfmConfig::new(SolverMethod::Anderson);
    cfg.apply_override("-snes_anderson_m", "3").unwrap();
    cfg.apply_override("snes_anderson_beta", "0.8").unwrap();
    let r = solve(f, DVec::zeros(2), &cfg.with_eps(1e-10));
    println!(
        "anderson m=3 beta=0.8: {} after {} iterations",
        r.stats.outcome.name(),
        r.stats.iterations
    );
}
