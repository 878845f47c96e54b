//! Command-line front end. Flags override the configuration file.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::experiment::{self, CommandOutput, ExperimentConfig, ExperimentError};
use crate::solvers::SolverMethod;

#[derive(Debug, Parser)]
#[command(
    name = "ifosmondi",
    version,
    about = "Co-simulation experiments on the mass-spring-damper benchmark"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One co-simulation; writes trajectory.csv and steps.csv.
    Run(Common),
    /// Error against dt_ref for each method; writes sweep_dt.csv.
    SweepDt(Common),
    /// Iterations and error against the spectral radius; writes sweep_rho.csv.
    SweepRho(Common),
    /// Print the available solver methods.
    ListMethods,
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model preset.
    #[arg(long)]
    pub model: Option<String>,
    /// Right damper rating D_D; a comma-separated list for sweep-rho.
    #[arg(long, value_delimiter = ',')]
    pub dd: Vec<f64>,
    /// Reference macro-step; a comma-separated list for sweep-dt.
    #[arg(long, value_delimiter = ',')]
    pub dt_ref: Vec<f64>,
    /// Absolute and relative convergence tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Solver method; a comma-separated list for the sweeps.
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<String>,
    /// Solver option as KEY=VALUE, e.g. snes_linesearch_order=2.
    #[arg(long = "solver-opt", value_name = "KEY=VALUE")]
    pub solver_opt: Vec<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Final time.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Evaluate systems (run) or sweep points (sweeps) in parallel.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Run,
    SweepDt,
    SweepRho,
}

fn single<T: Copy>(flag: &str, v: &[T]) -> Result<Option<T>, ExperimentError> {
    match v {
        [] => Ok(None),
        [x] => Ok(Some(*x)),
        _ => Err(ExperimentError::Config(format!(
            "--{flag} takes a single value here"
        ))),
    }
}

impl Common {
    fn config(&self, kind: Kind) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_toml_file(path)?,
            None => ExperimentConfig::default(),
        };
        if kind == Kind::SweepRho && self.config.is_none() {
            cfg.dt_ref = 1e-2;
        }
        if let Some(m) = &self.model {
            let d_d = cfg.params.d_d;
            cfg.set_model(m)?;
            cfg.params.d_d = d_d;
        }
        if let Some(e) = self.eps {
            cfg.eps_abs = e;
            cfg.eps_rel = e;
        }
        if let Some(t) = self.t_end {
            cfg.params.t_end = t;
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        cfg.parallel |= self.parallel;
        for kv in &self.solver_opt {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!("--solver-opt {kv:?}: expected KEY=VALUE"))
            })?;
            cfg.solver_options.push((k.trim().into(), v.trim().into()));
        }
        let methods = self
            .method
            .iter()
            .map(|m| m.parse::<SolverMethod>())
            .collect::<Result<Vec<_>, _>>()?;
        match kind {
            Kind::Run => {
                if let Some(m) = single("method", &methods)? {
                    cfg.method = m;
                }
                if let Some(d) = single("dd", &self.dd)? {
                    cfg.params.d_d = d;
                }
                if let Some(d) = single("dt-ref", &self.dt_ref)? {
                    cfg.dt_ref = d;
                }
            }
            Kind::SweepDt => {
                if !methods.is_empty() {
                    cfg.methods = methods;
                }
                if let Some(d) = single("dd", &self.dd)? {
                    cfg.params.d_d = d;
                }
                if !self.dt_ref.is_empty() {
                    cfg.dt_refs.clone_from(&self.dt_ref);
                }
            }
            Kind::SweepRho => {
                if !methods.is_empty() {
                    cfg.methods = methods;
                }
                if !self.dd.is_empty() {
                    cfg.d_ds.clone_from(&self.dd);
                }
                if let Some(d) = single("dt-ref", &self.dt_ref)? {
                    cfg.dt_ref = d;
                }
            }
        }
        Ok(cfg)
    }
}

/// Execute a parsed command.
pub fn execute(cli: &Cli) -> Result<CommandOutput, ExperimentError> {
    match &cli.command {
        Command::Run(c) => experiment::cmd_run(&c.config(Kind::Run)?),
        Command::SweepDt(c) => experiment::cmd_sweep_dt(&c.config(Kind::SweepDt)?),
        Command::SweepRho(c) => experiment::cmd_sweep_rho(&c.config(Kind::SweepRho)?),
        Command::ListMethods => Ok(CommandOutput {
            exit_code: 0,
            lines: experiment::list_methods(),
            files: Vec::new(),
        }),
    }
}

/// Parse, execute and print. Returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            for line in &out.lines {
                println!("{line}");
            }
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
