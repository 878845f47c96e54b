//! Macro-step control: steps that fail to converge are halved, successful
//! ones grow by 30 % up to dt_ref. Here a stiff exchange makes fixed-point
//! iteration fail on long steps.

use ifosmondi::coupling::{CouplingGraph, SystemLayout};
use ifosmondi::integrator::IntegratorConfig;
use ifosmondi::orchestrator::Cosimulation;
use ifosmondi::slave::{OdeSpec, SlaveSystem};
use ifosmondi::solvers::{JfmConfig, SolverMethod};

/// `dx/dt = -k u`, `y = x`.
struct Leaky(f64, f64);

impl OdeSpec for Leaky {
    fn n_states(&self) -> usize {
        1
    }
    fn n_inputs(&self) -> usize {
        1
    }
    fn n_outputs(&self) -> usize {
        1
    }
    fn initial_state(&self) -> Vec<f64> {
        vec![self.1]
    }
    fn rhs(&self, _t: f64, _x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = -self.0 * u[0];
    }
    fn output(&self, _t: f64, x: &[f64], _u: &[f64], y: &mut [f64]) {
        y[0] = x[0];
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let graph = CouplingGraph::new(SystemLayout::new(vec![1, 1], vec![1, 1])?, [(0, 1), (1, 0)])?;
    let cfg = IntegratorConfig::rk4(1e-2);
    let slaves = vec![
        SlaveSystem::new(Box::new(Leaky(4.0, 1.0)), 0.0, cfg.clone())?,
        SlaveSystem::new(Box::new(Leaky(4.0, -0.5)), 0.0, cfg)?,
    ];
    let r = Cosimulation::new(graph, slaves, JfmConfig::new(SolverMethod::FixedPoint))?
        .t_end(3.0)
        .dt_ref(1.0)
        .run()?;
    for a in &r.attempts {
        println!(
            "[{:.4}, {:.4})  dt {:.4}  {:<16} iterations {}",
            a.start,
            a.start + a.dt,
            a.dt,
            a.outcome.name(),
            a.iterations
        );
    }
    Ok(())
}
