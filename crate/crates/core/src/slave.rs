//! Black-box slave systems: an ODE, its embedded integrator and a
//! commit/rollback snapshot.

use thiserror::Error;

use crate::coupling::GlobalPair;
use crate::integrator::{integrate, IntegrationError, IntegratorConfig};
use crate::polynomial::{InputPolynomial, Step};

/// An ODE `dx/dt = f(t, x, u)` with outputs `y = g(t, x, u)`.
///
/// Implementations must be pure: identical arguments give identical results.
pub trait OdeSpec: Send {
    fn n_states(&self) -> usize;
    fn n_inputs(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;
    fn rhs(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]);
    fn output(&self, t: f64, x: &[f64], u: &[f64], y: &mut [f64]);

    /// Analytic `dy/dt`. Return `false` to fall back on finite differences.
    fn output_derivative(
        &self,
        _t: f64,
        _x: &[f64],
        _dx: &[f64],
        _u: &[f64],
        _du: &[f64],
        _dy: &mut [f64],
    ) -> bool {
        false
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlaveError {
    #[error("integration failed: {0}")]
    IntegrationFailure(#[from] IntegrationError),
    #[error("slave sits at t = {actual} but the step starts at {expected}")]
    TimeMismatch { expected: f64, actual: f64 },
    #[error("expected {expected} input polynomials, got {actual}")]
    InputCount { expected: usize, actual: usize },
    #[error("initial state has {actual} entries, expected {expected}")]
    StateSize { expected: usize, actual: usize },
}

/// Current time and state plus the last committed snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaveState {
    pub t: f64,
    pub x: Vec<f64>,
    snapshot: (f64, Vec<f64>),
}

impl SlaveState {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self {
            t,
            snapshot: (t, x.clone()),
            x,
        }
    }

    pub fn committed(&self) -> (f64, &[f64]) {
        (self.snapshot.0, &self.snapshot.1)
    }

    pub fn commit(&mut self) {
        self.snapshot.0 = self.t;
        self.snapshot.1.clone_from(&self.x);
    }

    pub fn rollback(&mut self) {
        self.t = self.snapshot.0;
        self.x.clone_from(&self.snapshot.1);
    }
}

/// Backward-difference output derivative over a window `w`.
pub fn output_derivative_fd(
    spec: &dyn OdeSpec,
    t: f64,
    x: &[f64],
    dx: &[f64],
    u: &[f64],
    du: &[f64],
    w: f64,
) -> Vec<f64> {
    let n = spec.n_outputs();
    let mut y1 = vec![0.0; n];
    let mut y0 = vec![0.0; n];
    spec.output(t, x, u, &mut y1);
    let xb: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a - w * b).collect();
    let ub: Vec<f64> = u.iter().zip(du).map(|(a, b)| a - w * b).collect();
    spec.output(t - w, &xb, &ub, &mut y0);
    y1.iter().zip(&y0).map(|(a, b)| (a - b) / w).collect()
}

/// A slave: ODE definition, integrator settings and owned state.
pub struct SlaveSystem {
    spec: Box<dyn OdeSpec>,
    state: SlaveState,
    cfg: IntegratorConfig,
}

impl std::fmt::Debug for SlaveSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlaveSystem")
            .field("n_states", &self.spec.n_states())
            .field("n_inputs", &self.spec.n_inputs())
            .field("n_outputs", &self.spec.n_outputs())
            .field("state", &self.state)
            .finish()
    }
}

impl SlaveSystem {
    pub fn new(
        spec: Box<dyn OdeSpec>,
        t_init: f64,
        cfg: IntegratorConfig,
    ) -> Result<Self, SlaveError> {
        cfg.validate()?;
        let x = spec.initial_state();
        if x.len() != spec.n_states() {
            return Err(SlaveError::StateSize {
                expected: spec.n_states(),
                actual: x.len(),
            });
        }
        Ok(Self {
            spec,
            state: SlaveState::new(t_init, x),
            cfg,
        })
    }

    pub fn spec(&self) -> &dyn OdeSpec {
        self.spec.as_ref()
    }

    pub fn state(&self) -> &SlaveState {
        &self.state
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    pub fn n_inputs(&self) -> usize {
        self.spec.n_inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.spec.n_outputs()
    }

    /// Outputs at the current state with the given inputs.
    pub fn outputs_at(&self, u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.spec.n_outputs()];
        self.spec.output(self.state.t, &self.state.x, u, &mut y);
        y
    }

    /// Integrate over `step` with polynomial inputs and return the outputs
    /// and their derivatives at the step end. The snapshot is untouched; on
    /// failure the slave is rolled back.
    pub fn integrate_extended(
        &mut self,
        step: Step,
        inputs: &[InputPolynomial],
    ) -> Result<GlobalPair, SlaveError> {
        let n_in = self.spec.n_inputs();
        if inputs.len() != n_in {
            return Err(SlaveError::InputCount {
                expected: n_in,
                actual: inputs.len(),
            });
        }
        let tol = 1e-12 * step.start.abs().max(step.size());
        if (self.state.t - step.start).abs() > tol {
            return Err(SlaveError::TimeMismatch {
                expected: step.start,
                actual: self.state.t,
            });
        }
        let result = self.advance(step, inputs);
        if result.is_err() {
            self.state.rollback();
        }
        result
    }

    fn advance(
        &mut self,
        step: Step,
        inputs: &[InputPolynomial],
    ) -> Result<GlobalPair, SlaveError> {
        let spec = self.spec.as_ref();
        let mut u = vec![0.0; inputs.len()];
        integrate(
            |t, x, dx| {
                for (ui, p) in u.iter_mut().zip(inputs) {
                    *ui = p.eval(t);
                }
                spec.rhs(t, x, &u, dx);
            },
            step.start,
            step.end,
            &mut self.state.x,
            &self.cfg,
        )?;
        self.state.t = step.end;

        let t = step.end;
        let x = &self.state.x;
        let u: Vec<f64> = inputs.iter().map(|p| p.eval(t)).collect();
        let du: Vec<f64> = inputs.iter().map(|p| p.derivative(t)).collect();
        let mut dx = vec![0.0; x.len()];
        spec.rhs(t, x, &u, &mut dx);
        let mut y = vec![0.0; spec.n_outputs()];
        spec.output(t, x, &u, &mut y);
        let mut dy = vec![0.0; spec.n_outputs()];
        if !spec.output_derivative(t, x, &dx, &u, &du, &mut dy) {
            let w = self.cfg.fd_derivative_dt.unwrap_or(1e-6 * step.size());
            dy = output_derivative_fd(spec, t, x, &dx, &u, &du, w);
        }
        if y.iter().chain(&dy).any(|v| !v.is_finite()) {
            return Err(IntegrationError::NonFinite { t }.into());
        }
        Ok(GlobalPair {
            values: y,
            derivatives: dy,
        })
    }

    pub fn commit(&mut self) {
        self.state.commit();
    }

    pub fn rollback(&mut self) {
        self.state.rollback();
    }
}
