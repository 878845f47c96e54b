//! Experiment driver: single runs and parameter sweeps of the benchmark,
//! written out as CSV.
//!
//! Configuration files are TOML:
//!
//! ```toml
//! [model]
//! preset = "msd"
//! D_D = 0.64
//!
//! [solver]
//! method = "newtonls"
//! eps = 1e-4
//! options = { snes_linesearch_order = 3 }
//!
//! [sweep]
//! dt_ref = [0.2, 0.1, 0.05]
//! D_D = [4.0, 0.64]
//! methods = ["newtonls", "anderson"]
//!
//! [output]
//! dir = "out"
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use crate::orchestrator::{CosimResult, RunStatus};
use crate::solvers::{ConfigError, JfmConfig, SolverMethod};
use crate::testbench::{
    default_slave_integrator, msd_cosimulation, run_error, MsdParams, TestbenchError,
};

pub const DEFAULT_DT_GRID: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];
pub const DEFAULT_DD_GRID: [f64; 8] = [4.0, 2.5, 1.5625, 1.0, 0.64, 0.25, 0.04, 0.01];

/// Samples used by the error metric. Only one policy exists; it is written
/// to the CSV metadata so results say what they were measured on.
pub const SAMPLE_GRID: &str = "committed-steps";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] ConfigError),
    #[error(transparent)]
    Testbench(#[from] TestbenchError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl ExperimentError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        2
    }
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: String,
    pub params: MsdParams,
    pub method: SolverMethod,
    /// Solver options applied in order on top of the method defaults.
    pub solver_options: Vec<(String, String)>,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Step size of `run`.
    pub dt_ref: f64,
    pub dt_refs: Vec<f64>,
    pub d_ds: Vec<f64>,
    /// Methods covered by the sweeps.
    pub methods: Vec<SolverMethod>,
    pub out_dir: PathBuf,
    /// Reserved: every computation is deterministic.
    pub seed: u64,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: "msd".into(),
            params: MsdParams::default(),
            method: SolverMethod::NewtonLs,
            solver_options: Vec::new(),
            eps_abs: 1e-4,
            eps_rel: 1e-4,
            dt_ref: 0.1,
            dt_refs: DEFAULT_DT_GRID.to_vec(),
            d_ds: DEFAULT_DD_GRID.to_vec(),
            methods: SolverMethod::ALL.to_vec(),
            out_dir: PathBuf::from("."),
            seed: 0,
            parallel: false,
        }
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ExperimentError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(config_err(format!("{key}: expected a number"))),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, ExperimentError> {
    v.as_str()
        .ok_or_else(|| config_err(format!("{key}: expected a string")))
}

fn as_list<T>(
    key: &str,
    v: &Value,
    f: impl Fn(&Value) -> Result<T, ExperimentError>,
) -> Result<Vec<T>, ExperimentError> {
    v.as_array()
        .ok_or_else(|| config_err(format!("{key}: expected a list")))?
        .iter()
        .map(f)
        .collect()
}

fn section<'a>(root: &'a Table, name: &str) -> Result<Option<&'a Table>, ExperimentError> {
    match root.get(name) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(config_err(format!("[{name}] must be a table"))),
    }
}

impl ExperimentConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = Self::default();
        cfg.apply_toml(text)?;
        Ok(cfg)
    }

    /// Overlay the settings found in a TOML document.
    pub fn apply_toml(&mut self, text: &str) -> Result<(), ExperimentError> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        for key in root.keys() {
            if !["model", "solver", "sweep", "output"].contains(&key.as_str()) {
                return Err(config_err(format!("unknown section [{key}]")));
            }
        }
        if let Some(t) = section(&root, "model")? {
            // Preset first so explicit parameters override it.
            if let Some(v) = t.get("preset") {
                self.set_model(as_str("model.preset", v)?)?;
            }
            for (k, v) in t {
                let key = format!("model.{k}");
                let p = &mut self.params;
                let slot = match k.as_str() {
                    "preset" => continue,
                    "M_L" => &mut p.m_l,
                    "K_SD" => &mut p.k_sd,
                    "D_SD" => &mut p.d_sd,
                    "D_D" => &mut p.d_d,
                    "x_L0" => &mut p.x_l0,
                    "v_L0" => &mut p.v_l0,
                    "x_D0" => &mut p.x_d0,
                    "t_init" => &mut p.t_init,
                    "t_end" => &mut p.t_end,
                    _ => return Err(config_err(format!("unknown key {key}"))),
                };
                *slot = as_f64(&key, v)?;
            }
        }
        if let Some(t) = section(&root, "solver")? {
            for (k, v) in t {
                let key = format!("solver.{k}");
                match k.as_str() {
                    "method" => self.method = as_str(&key, v)?.parse()?,
                    "eps" => {
                        self.eps_abs = as_f64(&key, v)?;
                        self.eps_rel = self.eps_abs;
                    }
                    "eps_abs" => self.eps_abs = as_f64(&key, v)?,
                    "eps_rel" => self.eps_rel = as_f64(&key, v)?,
                    "dt_ref" => self.dt_ref = as_f64(&key, v)?,
                    "parallel" => {
                        self.parallel = v
                            .as_bool()
                            .ok_or_else(|| config_err(format!("{key}: expected a boolean")))?
                    }
                    "options" => {
                        let opts = v
                            .as_table()
                            .ok_or_else(|| config_err(format!("{key}: expected a table")))?;
                        for (name, value) in opts {
                            let value = match value {
                                Value::String(s) => s.clone(),
                                other => other.to_string(),
                            };
                            self.solver_options.push((name.clone(), value));
                        }
                    }
                    _ => return Err(config_err(format!("unknown key {key}"))),
                }
            }
        }
        if let Some(t) = section(&root, "sweep")? {
            for (k, v) in t {
                let key = format!("sweep.{k}");
                match k.as_str() {
                    "dt_ref" => self.dt_refs = as_list(&key, v, |x| as_f64(&key, x))?,
                    "D_D" => self.d_ds = as_list(&key, v, |x| as_f64(&key, x))?,
                    "methods" => {
                        self.methods =
                            as_list(&key, v, |x| Ok(as_str(&key, x)?.parse::<SolverMethod>()?))?;
                    }
                    "seed" => {
                        self.seed = v
                            .as_integer()
                            .and_then(|i| u64::try_from(i).ok())
                            .ok_or_else(|| {
                                config_err(format!("{key}: expected a non-negative integer"))
                            })?;
                    }
                    _ => return Err(config_err(format!("unknown key {key}"))),
                }
            }
        }
        if let Some(t) = section(&root, "output")? {
            for (k, v) in t {
                match k.as_str() {
                    "dir" => self.out_dir = PathBuf::from(as_str("output.dir", v)?),
                    _ => return Err(config_err(format!("unknown key output.{k}"))),
                }
            }
        }
        Ok(())
    }

    pub fn set_model(&mut self, name: &str) -> Result<(), ExperimentError> {
        match name {
            "msd" => {
                self.model = name.into();
                self.params = MsdParams::default();
                Ok(())
            }
            _ => Err(config_err(format!(
                "unknown model preset {name:?} (available: msd)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.params.validate()?;
        self.solver_config(self.method)?;
        if !(self.dt_ref > 0.0) || self.dt_refs.iter().any(|&d| !(d > 0.0)) {
            return Err(config_err("dt_ref values must be positive"));
        }
        if self.dt_refs.is_empty() || self.d_ds.is_empty() || self.methods.is_empty() {
            return Err(config_err("sweep lists must not be empty"));
        }
        for &d_d in &self.d_ds {
            MsdParams {
                d_d,
                ..self.params.clone()
            }
            .validate()?;
        }
        Ok(())
    }

    /// Solver configuration for `method` with the tolerances and options.
    pub fn solver_config(&self, method: SolverMethod) -> Result<JfmConfig, ExperimentError> {
        let mut cfg = JfmConfig::new(method);
        cfg.eps_abs = self.eps_abs;
        cfg.eps_rel = self.eps_rel;
        for (k, v) in &self.solver_options {
            cfg.apply_override(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stable text form, hashed into the CSV metadata.
    pub fn canonical(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = write!(
            s,
            "model={};M_L={:e};K_SD={:e};D_SD={:e};D_D={:e};x_L0={:e};v_L0={:e};x_D0={:e};t_init={:e};t_end={:e};",
            self.model, p.m_l, p.k_sd, p.d_sd, p.d_d, p.x_l0, p.v_l0, p.x_d0, p.t_init, p.t_end
        );
        let _ = write!(
            s,
            "method={};eps_abs={:e};eps_rel={:e};dt_ref={:e};",
            self.method, self.eps_abs, self.eps_rel, self.dt_ref
        );
        for (k, v) in &self.solver_options {
            let _ = write!(s, "opt:{k}={v};");
        }
        let _ = write!(s, "dt_refs={:?};D_D={:?};", self.dt_refs, self.d_ds);
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let _ = write!(
            s,
            "methods={};seed={};grid={SAMPLE_GRID}",
            methods.join(","),
            self.seed
        );
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn metadata(&self, extra: &str) -> String {
        format!(
            "# ifosmondi {} config_sha256={} eps_abs={:e} eps_rel={:e} sample_grid={SAMPLE_GRID}{extra}\n",
            env!("CARGO_PKG_VERSION"),
            self.hash(),
            self.eps_abs,
            self.eps_rel
        )
    }
}

/// One benchmark run and its error (when it completed).
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub method: SolverMethod,
    pub d_d: f64,
    pub dt_ref: f64,
    pub result: CosimResult,
    pub error: Option<f64>,
}

impl RunSummary {
    pub fn outcome(&self) -> String {
        match self.result.status {
            RunStatus::Completed => "converged".into(),
            RunStatus::Aborted { last_outcome, .. } => format!("diverged({})", last_outcome.name()),
        }
    }

    pub fn line(&self) -> String {
        let err = self.error.map_or("n/a".into(), |e| format!("{e:.6e}"));
        let status = match self.result.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Aborted { t, last_outcome } => {
                format!("diverged at t={t} ({})", last_outcome.name())
            }
        };
        format!(
            "method={} D_D={} dt_ref={} status={status} error={err} steps={} total_iterations={} total_integrations={}",
            self.method,
            self.d_d,
            self.dt_ref,
            self.result.records.len(),
            self.result.total_iterations(),
            self.result.total_residual_evals()
        )
    }
}

/// Run the benchmark once.
pub fn simulate(
    cfg: &ExperimentConfig,
    method: SolverMethod,
    d_d: f64,
    dt_ref: f64,
) -> Result<RunSummary, ExperimentError> {
    let params = MsdParams {
        d_d,
        ..cfg.params.clone()
    };
    let solver = cfg.solver_config(method)?;
    let mut cosim = msd_cosimulation(&params, solver, dt_ref, default_slave_integrator())?
        .parallel(cfg.parallel);
    let result = cosim.run().map_err(TestbenchError::from)?;
    let error = if result.completed() {
        Some(run_error(&params, &result)?)
    } else {
        None
    };
    Ok(RunSummary {
        method,
        d_d,
        dt_ref,
        result,
        error,
    })
}

fn create(path: &Path) -> Result<fs::File, ExperimentError> {
    fs::File::create(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a CSV file: a `#` metadata line, a header row, then `rows`.
fn write_csv(
    path: &Path,
    meta: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), ExperimentError> {
    let csv_err = |source| ExperimentError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut file = create(path)?;
    file.write_all(meta.as_bytes())
        .map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

fn ensure_dir(dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Result of a command: exit status and the lines printed on stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub exit_code: u8,
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

/// Single run: writes `trajectory.csv` and `steps.csv`. Exit status 1 when
/// the run aborts.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<CommandOutput, ExperimentError> {
    cfg.validate()?;
    ensure_dir(&cfg.out_dir)?;
    let run = simulate(cfg, cfg.method, cfg.params.d_d, cfg.dt_ref)?;
    let meta = cfg.metadata(&format!(
        " method={} D_D={:e} dt_ref={:e}",
        cfg.method, cfg.params.d_d, cfg.dt_ref
    ));

    let trajectory = cfg.out_dir.join("trajectory.csv");
    let header = [
        "t", "v_L", "x_L", "x_D", "u_v_C", "u_x_C", "u_f_C", "y_f_C", "y_v_C", "y_x_C",
    ];
    let rows: Vec<Vec<String>> = run
        .result
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                num(r.t),
                num(r.states[0][0]),
                num(r.states[0][1]),
                num(r.states[1][0]),
            ];
            row.extend(
                r.inputs
                    .values
                    .iter()
                    .chain(&r.outputs.values)
                    .map(|&v| num(v)),
            );
            row
        })
        .collect();
    write_csv(&trajectory, &meta, &header, &rows)?;

    let steps = cfg.out_dir.join("steps.csv");
    let header = ["N", "t_N", "dt", "iterations", "residual_evals", "outcome"];
    let rows: Vec<Vec<String>> = run
        .result
        .attempts
        .iter()
        .map(|a| {
            vec![
                a.n.to_string(),
                num(a.start),
                num(a.dt),
                a.iterations.to_string(),
                a.residual_evals.to_string(),
                a.outcome.name().to_string(),
            ]
        })
        .collect();
    write_csv(&steps, &meta, &header, &rows)?;

    Ok(CommandOutput {
        exit_code: if run.result.completed() { 0 } else { 1 },
        lines: vec![run.line()],
        files: vec![trajectory, steps],
    })
}

fn sweep(
    cfg: &ExperimentConfig,
    points: Vec<(SolverMethod, f64, f64)>,
) -> Result<Vec<RunSummary>, ExperimentError> {
    let run = |&(m, d_d, dt): &(SolverMethod, f64, f64)| simulate(cfg, m, d_d, dt);
    if cfg.parallel {
        // The runs themselves stay sequential inside; the points spread.
        let inner = ExperimentConfig {
            parallel: false,
            ..cfg.clone()
        };
        points
            .par_iter()
            .map(|&(m, d_d, dt)| simulate(&inner, m, d_d, dt))
            .collect()
    } else {
        points.iter().map(run).collect()
    }
}

/// Error against `dt_ref`, one row per (method, dt_ref).
pub fn cmd_sweep_dt(cfg: &ExperimentConfig) -> Result<CommandOutput, ExperimentError> {
    cfg.validate()?;
    if cfg.dt_refs.len() < 2 {
        return Err(config_err("sweep-dt needs at least two dt_ref values"));
    }
    ensure_dir(&cfg.out_dir)?;
    let d_d = cfg.params.d_d;
    let points = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.dt_refs.iter().map(move |&dt| (m, d_d, dt)))
        .collect();
    let runs = sweep(cfg, points)?;
    let path = cfg.out_dir.join("sweep_dt.csv");
    let meta = cfg.metadata(&format!(" D_D={d_d:e} dt_ref_grid={:?}", cfg.dt_refs));
    let header = [
        "method",
        "dt_ref",
        "error",
        "total_iterations",
        "total_integrations",
        "outcome",
    ];
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                num(r.dt_ref),
                opt_num(r.error),
                r.result.total_iterations().to_string(),
                r.result.total_residual_evals().to_string(),
                r.outcome(),
            ]
        })
        .collect();
    write_csv(&path, &meta, &header, &rows)?;
    Ok(CommandOutput {
        exit_code: 0,
        lines: runs.iter().map(RunSummary::line).collect(),
        files: vec![path],
    })
}

/// Iterations, integrations and error against the spectral radius, one row
/// per (D_D, method), at a single `dt_ref`.
pub fn cmd_sweep_rho(cfg: &ExperimentConfig) -> Result<CommandOutput, ExperimentError> {
    cfg.validate()?;
    ensure_dir(&cfg.out_dir)?;
    let dt = cfg.dt_ref;
    let points = cfg
        .d_ds
        .iter()
        .flat_map(|&d_d| cfg.methods.iter().map(move |&m| (m, d_d, dt)))
        .collect();
    let runs = sweep(cfg, points)?;
    let path = cfg.out_dir.join("sweep_rho.csv");
    let meta = cfg.metadata(&format!(" dt_ref={dt:e}"));
    let header = [
        "D_D",
        "rho",
        "method",
        "total_iterations",
        "total_integrations",
        "error",
        "outcome",
    ];
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                num(r.d_d),
                num((cfg.params.d_sd / r.d_d).sqrt()),
                r.method.to_string(),
                r.result.total_iterations().to_string(),
                r.result.total_residual_evals().to_string(),
                opt_num(r.error),
                r.outcome(),
            ]
        })
        .collect();
    write_csv(&path, &meta, &header, &rows)?;
    Ok(CommandOutput {
        exit_code: 0,
        lines: runs.iter().map(RunSummary::line).collect(),
        files: vec![path],
    })
}

pub fn list_methods() -> Vec<String> {
    SolverMethod::ALL
        .iter()
        .map(|m| format!("{:<12} {}", m.name(), m.description()))
        .collect()
}
