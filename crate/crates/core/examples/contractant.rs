//! The benchmark with D_D = 4 (spectral radius 0.5): every method works,
//! including plain fixed-point iteration.

use ifosmondi::solvers::{JfmConfig, SolverMethod};
use ifosmondi::testbench::{default_slave_integrator, msd_cosimulation, run_error, MsdParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = MsdParams::with_d_d(4.0);
    println!(
        "{:<12} {:>8} {:>12} {:>14} {:>12}",
        "method", "steps", "iterations", "integrations", "error"
    );
    for method in SolverMethod::ALL {
        let mut cosim =
            msd_cosimulation(&p, JfmConfig::new(method), 0.05, default_slave_integrator())?;
        let r = cosim.run()?;
        println!(
            "{:<12} {:>8} {:>12} {:>14} {:>12.3e}",
            method.name(),
            r.records.len(),
            r.total_iterations(),
            r.total_residual_evals(),
            run_error(&p, &r)?
        );
    }
    Ok(())
}
