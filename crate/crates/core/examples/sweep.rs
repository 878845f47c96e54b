//! Error and cost across the spectral radius, as the `sweep-rho` command
//! does, printed instead of written to CSV.

use ifosmondi::experiment::{simulate, ExperimentConfig};
use ifosmondi::solvers::SolverMethod;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig {
        dt_ref: 1e-2,
        ..ExperimentConfig::default()
    };
    println!(
        "{:>7} {:>6} {:<12} {:>11} {:>13} {:>10}",
        "D_D", "rho", "method", "iterations", "integrations", "error"
    );
    for &d_d in &cfg.d_ds {
        for method in [
            SolverMethod::FixedPoint,
            SolverMethod::NewtonLs,
            SolverMethod::Anderson,
            SolverMethod::NgmresLs,
        ] {
            let run = simulate(&cfg, method, d_d, cfg.dt_ref)?;
            let error = run.error.map_or("-".to_string(), |e| format!("{e:.2e}"));
            println!(
                "{d_d:>7} {:>6.3} {:<12} {:>11} {:>13} {:>10}",
                (1.0 / d_d).sqrt(),
                method.name(),
                run.result.total_iterations(),
                run.result.total_residual_evals(),
                error
            );
        }
    }
    Ok(())
}
