//! The two-system mass-spring-damper benchmark.
//!
//! `S1` is a body of mass `M_L` pushed by a force `f_L` and tied to a plate
//! through a spring and a damper. `S2` is the plate, held by a damper `D_D`.
//! Both have direct feedthrough, so the coupled problem is an algebraic loop
//! whose fixed-point map has spectral radius `sqrt(D_SD / D_D)`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::coupling::{CouplingError, CouplingGraph, SystemLayout};
use crate::integrator::{integrate, IntegrationError, IntegratorConfig};
use crate::orchestrator::{CosimError, CosimResult, Cosimulation};
use crate::polynomial::Step;
use crate::slave::{OdeSpec, SlaveSystem};
use crate::solvers::JfmConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestbenchError {
    #[error("parameter {0} must be positive")]
    NonPositiveParameter(&'static str),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("trajectories have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("reference {0} has zero norm")]
    ZeroReferenceNorm(&'static str),
    #[error("reference integration failed: {0}")]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Cosim(#[from] CosimError),
}

/// Benchmark parameters. Defaults: unit mass, spring and damper, `D_D = 4`,
/// everything at rest at `t = 0`, run to `t = 10`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdParams {
    pub m_l: f64,
    pub k_sd: f64,
    pub d_sd: f64,
    pub d_d: f64,
    pub x_l0: f64,
    pub v_l0: f64,
    pub x_d0: f64,
    pub t_init: f64,
    pub t_end: f64,
}

impl Default for MsdParams {
    fn default() -> Self {
        Self {
            m_l: 1.0,
            k_sd: 1.0,
            d_sd: 1.0,
            d_d: 4.0,
            x_l0: 0.0,
            v_l0: 0.0,
            x_d0: 0.0,
            t_init: 0.0,
            t_end: 10.0,
        }
    }
}

impl MsdParams {
    pub fn with_d_d(d_d: f64) -> Self {
        Self {
            d_d,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TestbenchError> {
        for (name, v) in [
            ("M_L", self.m_l),
            ("K_SD", self.k_sd),
            ("D_SD", self.d_sd),
            ("D_D", self.d_d),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TestbenchError::NonPositiveParameter(name));
            }
        }
        if !(self.t_end > self.t_init) {
            return Err(TestbenchError::NonPositiveParameter("t_end - t_init"));
        }
        Ok(())
    }

    /// Coupling force `f_C` of the uncoupled model, the coupling loop solved.
    pub fn coupling_force(&self, v_l: f64, x_l: f64, x_d: f64) -> f64 {
        (self.d_sd * v_l - self.k_sd * (x_d - x_l)) / (1.0 + self.d_sd / self.d_d)
    }
}

/// Smooth force pulse: 5 N at `t = 0`, identically zero from `t = 2`.
pub fn f_l(t: f64) -> f64 {
    if t < 2.0 {
        let s = t / 2.0;
        5.0 * std::f64::consts::E * (1.0 / (s * s - 1.0)).exp()
    } else {
        0.0
    }
}

/// `S1`: states `(v_L, x_L)`, inputs `(v_C, x_C)`, output `f_C`.
#[derive(Debug, Clone)]
pub struct BodySystem(pub MsdParams);

impl OdeSpec for BodySystem {
    fn n_states(&self) -> usize {
        2
    }
    fn n_inputs(&self) -> usize {
        2
    }
    fn n_outputs(&self) -> usize {
        1
    }
    fn initial_state(&self) -> Vec<f64> {
        vec![self.0.v_l0, self.0.x_l0]
    }
    fn rhs(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let p = &self.0;
        let f_sd = p.d_sd * (u[0] - x[0]) + p.k_sd * (u[1] - x[1]);
        dx[0] = (f_l(t) + f_sd) / p.m_l;
        dx[1] = x[0];
    }
    fn output(&self, _t: f64, x: &[f64], u: &[f64], y: &mut [f64]) {
        let p = &self.0;
        y[0] = p.d_sd * (x[0] - u[0]) + p.k_sd * (x[1] - u[1]);
    }
    fn output_derivative(
        &self,
        _t: f64,
        _x: &[f64],
        dx: &[f64],
        _u: &[f64],
        du: &[f64],
        dy: &mut [f64],
    ) -> bool {
        let p = &self.0;
        dy[0] = p.d_sd * (dx[0] - du[0]) + p.k_sd * (dx[1] - du[1]);
        true
    }
}

/// `S2`: state `x_D`, input `f_C`, outputs `(v_C, x_C)`.
#[derive(Debug, Clone)]
pub struct PlateSystem(pub MsdParams);

impl OdeSpec for PlateSystem {
    fn n_states(&self) -> usize {
        1
    }
    fn n_inputs(&self) -> usize {
        1
    }
    fn n_outputs(&self) -> usize {
        2
    }
    fn initial_state(&self) -> Vec<f64> {
        vec![self.0.x_d0]
    }
    fn rhs(&self, _t: f64, _x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = u[0] / self.0.d_d;
    }
    fn output(&self, _t: f64, x: &[f64], u: &[f64], y: &mut [f64]) {
        y[0] = u[0] / self.0.d_d;
        y[1] = x[0];
    }
    fn output_derivative(
        &self,
        _t: f64,
        _x: &[f64],
        dx: &[f64],
        _u: &[f64],
        du: &[f64],
        dy: &mut [f64],
    ) -> bool {
        dy[0] = du[0] / self.0.d_d;
        dy[1] = dx[0];
        true
    }
}

pub fn build_s1(p: &MsdParams) -> Result<Box<dyn OdeSpec>, TestbenchError> {
    p.validate()?;
    Ok(Box::new(BodySystem(p.clone())))
}

pub fn build_s2(p: &MsdParams) -> Result<Box<dyn OdeSpec>, TestbenchError> {
    p.validate()?;
    Ok(Box::new(PlateSystem(p.clone())))
}

/// Outputs `(f_C | v_C, x_C)`, inputs `(v_C, x_C | f_C)`.
pub fn msd_graph() -> Result<CouplingGraph, CouplingError> {
    let layout = SystemLayout::new(vec![2, 1], vec![1, 2])?;
    CouplingGraph::new(layout, [(0, 2), (1, 0), (2, 1)])
}

/// Integrator used inside the benchmark slaves: RK4 with a 1 ms micro-step.
///
/// A fixed scheme keeps γ a smooth function of its argument, which the
/// finite-difference products of the Newton solver rely on.
pub fn default_slave_integrator() -> IntegratorConfig {
    IntegratorConfig::rk4(1e-3)
}

/// Assemble the co-simulation of the benchmark.
pub fn msd_cosimulation(
    p: &MsdParams,
    solver: JfmConfig,
    dt_ref: f64,
    integrator: IntegratorConfig,
) -> Result<Cosimulation, TestbenchError> {
    let slaves = vec![
        SlaveSystem::new(build_s1(p)?, p.t_init, integrator.clone())
            .map_err(|err| CosimError::Slave { k: 0, err })?,
        SlaveSystem::new(build_s2(p)?, p.t_init, integrator)
            .map_err(|err| CosimError::Slave { k: 1, err })?,
    ];
    Ok(
        Cosimulation::new(msd_graph().map_err(CosimError::from)?, slaves, solver)?
            .t_end(p.t_end)
            .dt_ref(dt_ref),
    )
}

/// Samples of `(v_L, x_L, x_D)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<[f64; 3]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// States at the committed step ends of a benchmark run.
    pub fn from_cosim(result: &CosimResult) -> Self {
        let mut tr = Self::default();
        for r in &result.records {
            tr.t.push(r.t);
            tr.states
                .push([r.states[0][0], r.states[0][1], r.states[1][0]]);
        }
        tr
    }
}

/// Monolithic solution of the uncoupled model on `grid` (increasing times
/// not before `t_init`).
pub fn monolithic_reference(p: &MsdParams, grid: &[f64]) -> Result<Trajectory, TestbenchError> {
    monolithic_reference_tol(p, grid, 1e-10)
}

/// Same as [`monolithic_reference`] with a chosen relative tolerance.
pub fn monolithic_reference_tol(
    p: &MsdParams,
    grid: &[f64],
    rel_tol: f64,
) -> Result<Trajectory, TestbenchError> {
    p.validate()?;
    let cfg = IntegratorConfig {
        micro_step: 1e-3,
        ..IntegratorConfig::rk45(rel_tol, rel_tol * 1e-2)
    };
    let rhs = |t: f64, x: &[f64], dx: &mut [f64]| {
        let f_c = p.coupling_force(x[0], x[1], x[2]);
        dx[0] = (f_l(t) - f_c) / p.m_l;
        dx[1] = x[0];
        dx[2] = f_c / p.d_d;
    };
    let mut x = [p.v_l0, p.x_l0, p.x_d0];
    let mut t = p.t_init;
    let mut tr = Trajectory::default();
    for &tg in grid {
        integrate(rhs, t, tg, &mut x, &cfg)?;
        t = t.max(tg);
        tr.t.push(tg);
        tr.states.push(x);
    }
    Ok(tr)
}

/// Largest residual of the two systems' output equations along a
/// trajectory of the uncoupled model, with `f_C`, `v_C`, `x_C` rebuilt from
/// the states.
pub fn coupled_equation_residual(p: &MsdParams, tr: &Trajectory) -> f64 {
    let s1 = BodySystem(p.clone());
    let s2 = PlateSystem(p.clone());
    let mut worst = 0.0f64;
    for (&t, &[v_l, x_l, x_d]) in tr.t.iter().zip(&tr.states) {
        let f_c = p.coupling_force(v_l, x_l, x_d);
        let mut y2 = [0.0; 2];
        s2.output(t, &[x_d], &[f_c], &mut y2);
        let mut y1 = [0.0];
        s1.output(t, &[v_l, x_l], &y2, &mut y1);
        worst = worst.max((y1[0] - f_c).abs());
    }
    worst
}

/// `sqrt(D_SD / D_D)`, the modulus of the non-zero eigenvalues.
pub fn spectral_radius(d_sd: f64, d_d: f64) -> Result<f64, TestbenchError> {
    if !(d_sd > 0.0) {
        return Err(TestbenchError::NonPositiveParameter("D_SD"));
    }
    if !(d_d > 0.0) {
        return Err(TestbenchError::NonPositiveParameter("D_D"));
    }
    Ok((d_sd / d_d).sqrt())
}

/// Mean over `(v_L, x_L, x_D)` of `‖s - s_ref‖₂ / ‖s_ref‖₂`.
pub fn error_metric(cosim: &Trajectory, reference: &Trajectory) -> Result<f64, TestbenchError> {
    if cosim.is_empty() {
        return Err(TestbenchError::EmptyTrajectory);
    }
    if cosim.len() != reference.len() {
        return Err(TestbenchError::LengthMismatch(cosim.len(), reference.len()));
    }
    let mut total = 0.0;
    for (s, name) in ["v_L", "x_L", "x_D"].into_iter().enumerate() {
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in cosim.states.iter().zip(&reference.states) {
            num += (a[s] - b[s]).powi(2);
            den += b[s] * b[s];
        }
        if den == 0.0 {
            return Err(TestbenchError::ZeroReferenceNorm(name));
        }
        total += (num / den).sqrt();
    }
    Ok(total / 3.0)
}

/// Error of a benchmark run against the monolithic reference on its
/// committed times.
pub fn run_error(p: &MsdParams, result: &CosimResult) -> Result<f64, TestbenchError> {
    let tr = Trajectory::from_cosim(result);
    let reference = monolithic_reference(p, &tr.t)?;
    error_metric(&tr, &reference)
}

/// Finite-difference Jacobian of `Ψ(x) = x - γ(x)` on the first step
/// `[t_init, t_init + tau)`, around `base` (default: the inputs dispatched
/// by the priming call). Rows and columns follow the stacked global input
/// order `(v_C, x_C, f_C, v̇_C, ẋ_C, ḟ_C)`.
pub fn jacobian_numeric(
    p: &MsdParams,
    tau: f64,
    base: Option<&[f64]>,
) -> Result<DMatrix<f64>, TestbenchError> {
    let mut cosim = msd_cosimulation(p, JfmConfig::default(), tau, default_slave_integrator())?;
    let step = Step::new(p.t_init, p.t_init + tau).map_err(|err| CosimError::Poly { k: 0, err })?;
    let prime = cosim.gamma(step, None)?;
    let x0 = base.map_or(prime.dispatched, <[f64]>::to_vec);
    let psi0 = cosim.gamma(step, Some(&x0))?.dispatched;
    let n = x0.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = 1e-6 * (1.0 + x0[j].abs());
        let mut x = x0.clone();
        x[j] += h;
        let psi = cosim.gamma(step, Some(&x))?.dispatched;
        for i in 0..n {
            jac[(i, j)] = (psi[i] - psi0[i]) / h;
        }
    }
    Ok(jac)
}

/// Largest eigenvalue modulus of [`jacobian_numeric`].
pub fn estimate_rho_numeric(
    p: &MsdParams,
    tau: f64,
    base: Option<&[f64]>,
) -> Result<f64, TestbenchError> {
    let jac = jacobian_numeric(p, tau, base)?;
    Ok(jac
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Entries `(i, j)` where input `i` is fed by a system that does not own
/// input `j`. They vanish identically: a system's outputs never depend on
/// another system's inputs.
pub fn by_design_zeros(graph: &CouplingGraph) -> Vec<(usize, usize)> {
    let layout = graph.layout();
    let n = layout.n_in_tot();
    let owner_of_source = |i: usize| graph.source_of(i).and_then(|o| layout.output_owner(o));
    let mut out = Vec::new();
    for bi in 0..2 {
        for i in 0..n {
            for bj in 0..2 {
                for j in 0..n {
                    if owner_of_source(i) != layout.input_owner(j) {
                        out.push((bi * n + i, bj * n + j));
                    }
                }
            }
        }
    }
    out
}
