//! Each γ evaluation can integrate the systems on one thread each. The
//! result is bit-for-bit the sequential one.

use std::time::Instant;

use ifosmondi::solvers::{JfmConfig, SolverMethod};
use ifosmondi::testbench::{default_slave_integrator, msd_cosimulation, MsdParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = MsdParams::with_d_d(0.25);
    let mut results = Vec::new();
    for parallel in [false, true] {
        let start = Instant::now();
        let r = msd_cosimulation(
            &p,
            JfmConfig::new(SolverMethod::NewtonLs),
            0.01,
            default_slave_integrator(),
        )?
        .parallel(parallel)
        .run()?;
        println!(
            "parallel = {parallel:<5} {} steps in {:?}",
            r.records.len(),
            start.elapsed()
        );
        results.push(r);
    }
    println!("identical: {}", results[0] == results[1]);
    Ok(())
}
