//! D_D = 0.64 puts the spectral radius at 1.25. Fixed-point iteration
//! cannot converge; the jacobian-free solvers still do.

use ifosmondi::orchestrator::RunStatus;
use ifosmondi::solvers::{JfmConfig, SolverMethod};
use ifosmondi::testbench::{
    default_slave_integrator, msd_cosimulation, run_error, spectral_radius, MsdParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = MsdParams::with_d_d(0.64);
    println!("rho = {}", spectral_radius(p.d_sd, p.d_d)?);
    for method in SolverMethod::ALL {
        let r =
            msd_cosimulation(&p, JfmConfig::new(method), 0.1, default_slave_integrator())?.run()?;
        match r.status {
            RunStatus::Completed => {
                println!("{method:<12} completed, error {:.2e}", run_error(&p, &r)?)
            }
            RunStatus::Aborted { t, last_outcome } => {
                println!(
                    "{method:<12} aborted at t = {t} (last outcome: {})",
                    last_outcome.name()
                )
            }
        }
    }
    Ok(())
}
