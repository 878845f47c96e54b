//! Jacobian-free nonlinear solvers for `F(x) = 0` on an opaque residual.
//!
//! Every solver takes a closure `FnMut(&DVector<f64>) -> Result<DVector<f64>, EvalError>`
//! and counts its calls exactly; the count is reported as `residual_evals`.
//! Parameter names follow the usual PETSc option spellings so that
//! [`JfmConfig::apply_override`] accepts keys such as `linesearch_alpha` or
//! `ngmres_gammaA`.

mod anderson;
mod fixed_point;
mod gmres;
mod jvp;
mod lstsq;
mod newton;
mod ngmres;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use thiserror::Error;

pub use anderson::solve_anderson;
pub use fixed_point::solve_fixed_point;
pub use gmres::{gmres, GmresReport};
pub use jvp::{jvp_fd, JvpError};
pub use lstsq::min_residual_combination;
pub use newton::solve_newton_ls;
pub use ngmres::solve_ngmres;

pub type DVec = DVector<f64>;

/// Failure of one residual evaluation (for instance a slave that could not
/// integrate its step).
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct EvalError(pub String);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown solver method `{0}`")]
    UnknownMethod(String),
    #[error("unknown solver option `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("invalid solver configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverMethod {
    FixedPoint,
    NewtonLs,
    Anderson,
    Ngmres,
    NgmresLs,
}

impl SolverMethod {
    pub const ALL: [SolverMethod; 5] = [
        SolverMethod::FixedPoint,
        SolverMethod::NewtonLs,
        SolverMethod::Anderson,
        SolverMethod::Ngmres,
        SolverMethod::NgmresLs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverMethod::FixedPoint => "fixed-point",
            SolverMethod::NewtonLs => "newtonls",
            SolverMethod::Anderson => "anderson",
            SolverMethod::Ngmres => "ngmres",
            SolverMethod::NgmresLs => "ngmres-ls",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            SolverMethod::FixedPoint => "plain fixed-point iteration x <- x - F(x)",
            SolverMethod::NewtonLs => "matrix-free Newton, cubic backtracking, inner GMRES",
            SolverMethod::Anderson => "Anderson mixing over a window of past iterates",
            SolverMethod::Ngmres => "nonlinear GMRES, difference-based selection",
            SolverMethod::NgmresLs => "nonlinear GMRES, line-search selection",
        }
    }
}

impl fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverMethod {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        match key.as_str() {
            "fixed-point" | "fixedpoint" | "picard" => Ok(SolverMethod::FixedPoint),
            "newtonls" | "newton-ls" | "newton" => Ok(SolverMethod::NewtonLs),
            "anderson" => Ok(SolverMethod::Anderson),
            "ngmres" => Ok(SolverMethod::Ngmres),
            "ngmres-ls" | "ngmresls" => Ok(SolverMethod::NgmresLs),
            _ => Err(ConfigError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineSearchOrder {
    Linear,
    Quadratic,
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartType {
    None,
    Difference,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectType {
    Difference,
    LineSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonParams {
    pub ls_order: LineSearchOrder,
    pub alpha: f64,
    pub max_step: f64,
    pub min_lambda: f64,
    pub damping: f64,
    pub ls_rtol: f64,
    pub ls_atol: f64,
    pub ls_ltol: f64,
    pub ls_max_it: usize,
    /// Relative step tolerance: a full step shorter than `stol * |x|` is
    /// accepted even without sufficient decrease.
    pub stol: f64,
    pub gmres_restart: usize,
    pub gmres_rtol: f64,
    pub gmres_max_it: usize,
    pub fd_h_scale: f64,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self {
            ls_order: LineSearchOrder::Cubic,
            alpha: 1e-4,
            max_step: 1e8,
            min_lambda: 1e-12,
            damping: 1.0,
            ls_rtol: 1e-8,
            ls_atol: 1e-15,
            ls_ltol: 1e-8,
            ls_max_it: 40,
            stol: 1e-8,
            gmres_restart: 30,
            gmres_rtol: 1e-4,
            gmres_max_it: 100,
            fd_h_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AndersonParams {
    pub m: usize,
    pub beta: f64,
    pub restart_type: RestartType,
    pub restart_it: usize,
    /// Period of `Periodic` restarts.
    pub restart: usize,
}

impl Default for AndersonParams {
    fn default() -> Self {
        Self {
            m: 30,
            beta: 1.0,
            restart_type: RestartType::None,
            restart_it: 2,
            restart: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgmresParams {
    pub m: usize,
    pub gamma_a: f64,
    pub gamma_c: f64,
    pub epsilon_b: f64,
    pub delta_b: f64,
    pub select_type: SelectType,
    pub restart_type: RestartType,
    pub restart_it: usize,
    pub restart: usize,
    pub single_reduction: bool,
    /// Damping of the basic line search used by `LineSearch` selection.
    pub ls_damping: f64,
    pub ls_max_it: usize,
}

impl Default for NgmresParams {
    fn default() -> Self {
        Self {
            m: 30,
            gamma_a: 2.0,
            gamma_c: 2.0,
            epsilon_b: 0.1,
            delta_b: 0.9,
            select_type: SelectType::Difference,
            restart_type: RestartType::Difference,
            restart_it: 2,
            restart: 30,
            single_reduction: false,
            ls_damping: 1.0,
            ls_max_it: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JfmConfig {
    pub method: SolverMethod,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_it: usize,
    /// A residual norm this many times above the initial one is divergence.
    pub divergence_factor: f64,
    pub newton: NewtonParams,
    pub anderson: AndersonParams,
    pub ngmres: NgmresParams,
}

impl Default for JfmConfig {
    fn default() -> Self {
        Self::new(SolverMethod::FixedPoint)
    }
}

impl JfmConfig {
    /// Defaults for `method`. `NgmresLs` is NGMRES with line-search selection.
    pub fn new(method: SolverMethod) -> Self {
        let mut ngmres = NgmresParams::default();
        if method == SolverMethod::NgmresLs {
            ngmres.select_type = SelectType::LineSearch;
        }
        Self {
            method,
            eps_abs: 1e-4,
            eps_rel: 1e-4,
            max_it: 50,
            divergence_factor: 1e6,
            newton: NewtonParams::default(),
            anderson: AndersonParams::default(),
            ngmres,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps_abs = eps;
        self.eps_rel = eps;
        self
    }

    pub fn with_max_it(mut self, max_it: usize) -> Self {
        self.max_it = max_it;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |what: &str| Err(ConfigError::Invalid(what.to_string()));
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.anderson.m == 0 || self.ngmres.m == 0 {
            return bad("window sizes must be at least 1");
        }
        if self.newton.gmres_restart == 0 {
            return bad("gmres restart must be at least 1");
        }
        if self.ngmres.single_reduction {
            return bad("single_reduction is not supported");
        }
        if !(self.divergence_factor > 1.0) {
            return bad("divergence factor must exceed 1");
        }
        Ok(())
    }

    /// Set one option by name. On error the configuration is unchanged.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut next = self.clone();
        next.apply_raw(key, value)?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    fn apply_raw(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
            })
        }
        fn flag(key: &str, value: &str) -> Result<bool, ConfigError> {
            match value.trim().to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(ConfigError::BadValue {
                    key: key.to_string(),
                    value: value.to_string(),
                }),
            }
        }
        fn restart(key: &str, value: &str) -> Result<RestartType, ConfigError> {
            match value.trim().to_ascii_lowercase().as_str() {
                "none" => Ok(RestartType::None),
                "difference" => Ok(RestartType::Difference),
                "periodic" => Ok(RestartType::Periodic),
                _ => Err(ConfigError::BadValue {
                    key: key.to_string(),
                    value: value.to_string(),
                }),
            }
        }
        let k = key
            .trim()
            .trim_start_matches('-')
            .trim_start_matches("snes_");
        let n = &mut self.newton;
        let a = &mut self.anderson;
        let g = &mut self.ngmres;
        match k {
            "method" | "type" => {
                let m: SolverMethod = value.parse()?;
                self.method = m;
                if m == SolverMethod::NgmresLs {
                    g.select_type = SelectType::LineSearch;
                }
            }
            "eps" => {
                let e = num(key, value)?;
                self.eps_abs = e;
                self.eps_rel = e;
            }
            "eps_abs" | "atol" => self.eps_abs = num(key, value)?,
            "eps_rel" | "rtol" => self.eps_rel = num(key, value)?,
            "max_it" => self.max_it = num(key, value)?,
            "divergence_factor" => self.divergence_factor = num(key, value)?,
            "linesearch_type" => {
                if !value.trim().eq_ignore_ascii_case("bt") {
                    return Err(ConfigError::BadValue {
                        key: key.to_string(),
                        value: value.to_string(),
                    });
                }
            }
            "linesearch_order" => {
                n.ls_order = match value.trim() {
                    "1" | "linear" => LineSearchOrder::Linear,
                    "2" | "quadratic" => LineSearchOrder::Quadratic,
                    "3" | "cubic" => LineSearchOrder::Cubic,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                        })
                    }
                }
            }
            "linesearch_alpha" => n.alpha = num(key, value)?,
            "linesearch_maxstep" => n.max_step = num(key, value)?,
            "linesearch_minlambda" => n.min_lambda = num(key, value)?,
            "linesearch_damping" => n.damping = num(key, value)?,
            "linesearch_rtol" => n.ls_rtol = num(key, value)?,
            "linesearch_atol" => n.ls_atol = num(key, value)?,
            "linesearch_ltol" => n.ls_ltol = num(key, value)?,
            "linesearch_max_it" => n.ls_max_it = num(key, value)?,
            "stol" => n.stol = num(key, value)?,
            "ksp_gmres_restart" | "gmres_restart" => n.gmres_restart = num(key, value)?,
            "ksp_rtol" | "gmres_rtol" => n.gmres_rtol = num(key, value)?,
            "ksp_max_it" | "gmres_max_it" => n.gmres_max_it = num(key, value)?,
            "mf_h_scale" | "fd_h_scale" => n.fd_h_scale = num(key, value)?,
            "anderson_m" => a.m = num(key, value)?,
            "anderson_beta" => a.beta = num(key, value)?,
            "anderson_restart_type" => a.restart_type = restart(key, value)?,
            "anderson_restart_it" => a.restart_it = num(key, value)?,
            "anderson_restart" => a.restart = num(key, value)?,
            "ngmres_m" => g.m = num(key, value)?,
            "ngmres_gammaA" | "ngmres_gammaa" => g.gamma_a = num(key, value)?,
            "ngmres_gammaC" | "ngmres_gammac" => g.gamma_c = num(key, value)?,
            "ngmres_epsilonB" | "ngmres_epsilonb" => g.epsilon_b = num(key, value)?,
            "ngmres_deltaB" | "ngmres_deltab" => g.delta_b = num(key, value)?,
            "ngmres_select_type" => {
                g.select_type = match value.trim().to_ascii_lowercase().as_str() {
                    "difference" => SelectType::Difference,
                    "linesearch" => SelectType::LineSearch,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                        })
                    }
                }
            }
            "ngmres_restart_type" => g.restart_type = restart(key, value)?,
            "ngmres_restart_it" => g.restart_it = num(key, value)?,
            "ngmres_restart" => g.restart = num(key, value)?,
            "ngmres_single_reduction" => g.single_reduction = flag(key, value)?,
            "ngmres_linesearch_damping" | "additive_linesearch_damping" => {
                g.ls_damping = num(key, value)?
            }
            "ngmres_linesearch_max_it" | "additive_linesearch_max_it" => {
                g.ls_max_it = num(key, value)?
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveOutcome {
    Converged,
    Diverged,
    MaxIterations,
    LineSearchFailure,
    LinearSolveFailure,
    /// A residual evaluation itself failed.
    EvaluationFailure,
}

impl SolveOutcome {
    pub fn name(self) -> &'static str {
        match self {
            SolveOutcome::Converged => "converged",
            SolveOutcome::Diverged => "diverged",
            SolveOutcome::MaxIterations => "max_iterations",
            SolveOutcome::LineSearchFailure => "line_search_failure",
            SolveOutcome::LinearSolveFailure => "linear_solve_failure",
            SolveOutcome::EvaluationFailure => "evaluation_failure",
        }
    }

    pub fn is_converged(self) -> bool {
        self == SolveOutcome::Converged
    }
}

impl fmt::Display for SolveOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub outcome: SolveOutcome,
    pub iterations: usize,
    pub residual_evals: usize,
    pub final_residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Last accepted iterate.
    pub x: DVec,
    /// Residual at `x`.
    pub residual: DVec,
    pub stats: SolveStats,
    /// Message of the failing evaluation, if any.
    pub error: Option<EvalError>,
}

/// Componentwise `|r_i| < |x_i| eps_rel + eps_abs`.
pub fn check_convergence(
    residual: &[f64],
    x: &[f64],
    eps_abs: f64,
    eps_rel: f64,
) -> Result<bool, ConfigError> {
    if residual.len() != x.len() {
        return Err(ConfigError::Invalid(format!(
            "length mismatch: residual {} vs iterate {}",
            residual.len(),
            x.len()
        )));
    }
    Ok(residual
        .iter()
        .zip(x)
        .all(|(r, xi)| r.abs() < xi.abs() * eps_rel + eps_abs))
}

/// Run the solver selected by `cfg.method`.
pub fn solve<F>(f: F, x0: DVec, cfg: &JfmConfig) -> SolveReport
where
    F: FnMut(&DVec) -> Result<DVec, EvalError>,
{
    match cfg.method {
        SolverMethod::FixedPoint => solve_fixed_point(f, x0, cfg),
        SolverMethod::NewtonLs => solve_newton_ls(f, x0, cfg),
        SolverMethod::Anderson => solve_anderson(f, x0, cfg),
        SolverMethod::Ngmres | SolverMethod::NgmresLs => solve_ngmres(f, x0, cfg),
    }
}

/// Residual wrapper counting calls.
pub(crate) struct Counted<F> {
    f: F,
    pub evals: usize,
}

impl<F> Counted<F>
where
    F: FnMut(&DVec) -> Result<DVec, EvalError>,
{
    pub fn new(f: F) -> Self {
        Self { f, evals: 0 }
    }

    pub fn eval(&mut self, x: &DVec) -> Result<DVec, EvalError> {
        self.evals += 1;
        (self.f)(x)
    }
}

/// Shared bookkeeping for the outer loops.
pub(crate) struct Monitor<'a> {
    cfg: &'a JfmConfig,
    f0_norm: f64,
}

impl<'a> Monitor<'a> {
    pub fn new(cfg: &'a JfmConfig, f0: &DVec) -> Self {
        Self {
            cfg,
            f0_norm: f0.norm(),
        }
    }

    pub fn converged(&self, f: &DVec, x: &DVec) -> bool {
        f.iter()
            .zip(x.iter())
            .all(|(r, xi)| r.abs() < xi.abs() * self.cfg.eps_rel + self.cfg.eps_abs)
    }

    pub fn diverged(&self, f: &DVec) -> bool {
        let n = f.norm();
        !n.is_finite() || n >= self.cfg.divergence_factor * self.f0_norm
    }
}

pub(crate) fn report(
    x: DVec,
    residual: DVec,
    outcome: SolveOutcome,
    iterations: usize,
    evals: usize,
    error: Option<EvalError>,
) -> SolveReport {
    let final_residual_norm = residual.norm();
    SolveReport {
        x,
        residual,
        stats: SolveStats {
            outcome,
            iterations,
            residual_evals: evals,
            final_residual_norm,
        },
        error,
    }
}

pub(crate) fn eval_failure(
    x: DVec,
    n: usize,
    iterations: usize,
    evals: usize,
    e: EvalError,
) -> SolveReport {
    report(
        x,
        DVec::from_element(n, f64::NAN),
        SolveOutcome::EvaluationFailure,
        iterations,
        evals,
        Some(e),
    )
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_check_examples() {
        assert!(check_convergence(&[0.0], &[5.0], 1e-4, 1e-4).unwrap());
        assert!(check_convergence(&[1e-5], &[1.0], 1e-4, 1e-4).unwrap());
        assert!(!check_convergence(&[1e-3], &[1.0], 1e-4, 1e-4).unwrap());
        assert!(check_convergence(&[1.0], &[], 1e-4, 1e-4).is_err());
    }

    #[test]
    fn convergence_check_is_componentwise() {
        // Norm-wise this would pass; componentwise the second entry fails.
        assert!(!check_convergence(&[0.0, 2e-4], &[10.0, 0.0], 1e-4, 1e-4).unwrap());
    }

    #[test]
    fn method_names_round_trip() {
        for m in SolverMethod::ALL {
            assert_eq!(m.name().parse::<SolverMethod>().unwrap(), m);
        }
        assert!("bogus".parse::<SolverMethod>().is_err());
    }

    #[test]
    fn defaults_match_parameter_tables() {
        let c = JfmConfig::new(SolverMethod::NewtonLs);
        assert_eq!(c.newton.ls_order, LineSearchOrder::Cubic);
        assert_eq!(c.newton.alpha, 1e-4);
        assert_eq!(c.newton.max_step, 1e8);
        assert_eq!(c.newton.min_lambda, 1e-12);
        assert_eq!(c.newton.damping, 1.0);
        assert_eq!(c.newton.ls_rtol, 1e-8);
        assert_eq!(c.newton.ls_atol, 1e-15);
        assert_eq!(c.newton.ls_ltol, 1e-8);
        assert_eq!(c.newton.ls_max_it, 40);
        assert_eq!(c.anderson.m, 30);
        assert_eq!(c.anderson.beta, 1.0);
        assert_eq!(c.anderson.restart_type, RestartType::None);
        assert_eq!(c.anderson.restart_it, 2);
        assert_eq!(c.anderson.restart, 30);
        assert_eq!(c.ngmres.m, 30);
        assert_eq!(c.ngmres.gamma_a, 2.0);
        assert_eq!(c.ngmres.gamma_c, 2.0);
        assert_eq!(c.ngmres.epsilon_b, 0.1);
        assert_eq!(c.ngmres.delta_b, 0.9);
        assert_eq!(c.ngmres.select_type, SelectType::Difference);
        assert_eq!(c.ngmres.restart_type, RestartType::Difference);
        assert_eq!(c.ngmres.restart_it, 2);
        assert!(!c.ngmres.single_reduction);
        let ls = JfmConfig::new(SolverMethod::NgmresLs);
        assert_eq!(ls.ngmres.select_type, SelectType::LineSearch);
        assert_eq!(ls.ngmres.ls_damping, 1.0);
        assert_eq!(ls.ngmres.ls_max_it, 1);
    }

    #[test]
    fn overrides_use_option_names() {
        let mut c = JfmConfig::default();
        c.apply_override("linesearch_alpha", "1e-3").unwrap();
        c.apply_override("-snes_ngmres_gammaA", "3").unwrap();
        c.apply_override("ngmres_select_type", "linesearch")
            .unwrap();
        c.apply_override("anderson_m", "5").unwrap();
        c.apply_override("eps", "1e-6").unwrap();
        c.apply_override("method", "anderson").unwrap();
        assert_eq!(c.newton.alpha, 1e-3);
        assert_eq!(c.ngmres.gamma_a, 3.0);
        assert_eq!(c.ngmres.select_type, SelectType::LineSearch);
        assert_eq!(c.anderson.m, 5);
        assert_eq!((c.eps_abs, c.eps_rel), (1e-6, 1e-6));
        assert_eq!(c.method, SolverMethod::Anderson);
        assert!(matches!(
            c.apply_override("nope", "1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            c.apply_override("anderson_m", "x"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(c.apply_override("anderson_m", "0").is_err());
        assert!(c.apply_override("ngmres_single_reduction", "true").is_err());
    }
}
