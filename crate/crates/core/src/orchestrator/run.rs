//! The macro-step loop.

use std::cell::RefCell;

use thiserror::Error;

use super::plan::{default_min_step, first_step, next_step, MacroStepPlan, NextStep};
use super::worker::{Backend, Order, Reply, Sequential, StepReply, Threaded, Worker};
use crate::coupling::{dispatch, rearrange_outputs, CouplingError, CouplingGraph, GlobalPair};
use crate::polynomial::{InputPolynomial, PolyError, Step, StepMode};
use crate::slave::{SlaveError, SlaveSystem};
use crate::solvers::{solve, ConfigError, DVec, EvalError, JfmConfig, SolveOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CosimError {
    #[error(transparent)]
    Graph(#[from] CouplingError),
    #[error(transparent)]
    Solver(#[from] ConfigError),
    #[error("system {k}: {err}")]
    Slave { k: usize, err: SlaveError },
    #[error("system {k}: {err}")]
    Poly { k: usize, err: PolyError },
    #[error("system {k} declares {actual} {what}, the layout expects {expected}")]
    LayoutMismatch {
        k: usize,
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("system {k} starts at t = {t}, not at t_init = {t_init}")]
    StartTime { k: usize, t: f64, t_init: f64 },
    #[error("invalid run settings: {0}")]
    Settings(String),
}

/// Result of one γ evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaOutput {
    /// `x - dispatched`, stacked values then derivatives. Empty for a
    /// priming call.
    pub residual: Vec<f64>,
    /// Inputs generated by the outputs, stacked.
    pub dispatched: Vec<f64>,
    pub outputs: GlobalPair,
    pub modes: Vec<StepMode>,
    pub polys: Vec<Vec<InputPolynomial>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    /// Index of the macro-step (number of steps committed before it).
    pub n: usize,
    pub start: f64,
    pub dt: f64,
    pub iterations: usize,
    /// γ evaluations, protocol calls included.
    pub residual_evals: usize,
    pub outcome: SolveOutcome,
    pub final_residual_norm: f64,
}

/// A committed macro-step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub n: usize,
    pub t: f64,
    pub dt: f64,
    pub inputs: GlobalPair,
    pub outputs: GlobalPair,
    /// Final residual of the coupling condition, stacked.
    pub residual: Vec<f64>,
    /// Committed state of each system at `t`.
    pub states: Vec<Vec<f64>>,
    /// Input polynomials of the final call, per system.
    pub polys: Vec<Vec<InputPolynomial>>,
    pub iterations: usize,
    pub residual_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Aborted { t: f64, last_outcome: SolveOutcome },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosimResult {
    pub t_init: f64,
    pub initial_states: Vec<Vec<f64>>,
    pub initial_inputs: Vec<f64>,
    pub records: Vec<StepRecord>,
    /// Every attempted step, rejected ones included.
    pub attempts: Vec<StepStats>,
    pub status: RunStatus,
}

impl CosimResult {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn total_iterations(&self) -> usize {
        self.attempts.iter().map(|a| a.iterations).sum()
    }

    pub fn total_residual_evals(&self) -> usize {
        self.attempts.iter().map(|a| a.residual_evals).sum()
    }

    /// Iterations of each committed step.
    pub fn m_max(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.iterations).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }
}

/// A configured co-simulation: coupling graph, slaves and solver.
#[derive(Debug)]
pub struct Cosimulation {
    graph: CouplingGraph,
    workers: Vec<Worker>,
    solver: JfmConfig,
    t_init: f64,
    t_end: f64,
    dt_ref: f64,
    min_step: Option<f64>,
    parallel: bool,
    u_init: Option<Vec<f64>>,
    initialized: bool,
}

impl Cosimulation {
    pub fn new(
        graph: CouplingGraph,
        slaves: Vec<SlaveSystem>,
        solver: JfmConfig,
    ) -> Result<Self, CosimError> {
        solver.validate()?;
        let layout = graph.layout();
        if slaves.len() != layout.n_sys() {
            return Err(CosimError::Settings(format!(
                "{} slaves for a layout of {} systems",
                slaves.len(),
                layout.n_sys()
            )));
        }
        let t_init = slaves[0].state().t;
        for (k, s) in slaves.iter().enumerate() {
            for (what, expected, actual) in [
                ("inputs", layout.in_sizes()[k], s.n_inputs()),
                ("outputs", layout.out_sizes()[k], s.n_outputs()),
            ] {
                if expected != actual {
                    return Err(CosimError::LayoutMismatch {
                        k,
                        what,
                        expected,
                        actual,
                    });
                }
            }
            if s.state().t != t_init {
                return Err(CosimError::StartTime {
                    k,
                    t: s.state().t,
                    t_init,
                });
            }
        }
        Ok(Self {
            workers: slaves.into_iter().map(|s| Worker::new(s, t_init)).collect(),
            graph,
            solver,
            t_init,
            t_end: t_init + 1.0,
            dt_ref: 0.1,
            min_step: None,
            parallel: false,
            u_init: None,
            initialized: false,
        })
    }

    pub fn t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn dt_ref(mut self, dt_ref: f64) -> Self {
        self.dt_ref = dt_ref;
        self
    }

    pub fn min_step(mut self, min_step: f64) -> Self {
        self.min_step = Some(min_step);
        self
    }

    /// Run each γ evaluation's integrations on one thread per system.
    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    /// Override the initial inputs (global layout). By default they are the
    /// dispatched outputs at `t_init` with zero inputs.
    pub fn initial_inputs(mut self, u: Vec<f64>) -> Self {
        self.u_init = Some(u);
        self
    }

    pub fn graph(&self) -> &CouplingGraph {
        &self.graph
    }

    pub fn workers(&self) -> &[Worker] {
        &self.workers
    }

    pub fn solver(&self) -> &JfmConfig {
        &self.solver
    }

    pub fn t_init(&self) -> f64 {
        self.t_init
    }

    fn check_settings(&self) -> Result<f64, CosimError> {
        if !(self.dt_ref > 0.0 && self.dt_ref.is_finite()) {
            return Err(CosimError::Settings("dt_ref must be positive".into()));
        }
        if !(self.t_end > self.t_init) {
            return Err(CosimError::Settings("t_end must exceed t_init".into()));
        }
        let min_step = self
            .min_step
            .unwrap_or_else(|| default_min_step(self.dt_ref));
        if !(min_step > 0.0) {
            return Err(CosimError::Settings("min_step must be positive".into()));
        }
        Ok(min_step)
    }

    /// Evaluate γ on `step` with the sequential backend. `x = None` is a
    /// priming call (moving-on or first-step inputs).
    pub fn gamma(&mut self, step: Step, x: Option<&[f64]>) -> Result<GammaOutput, CosimError> {
        let mut backend = Sequential {
            workers: &mut self.workers,
        };
        let ctx = Ctx {
            graph: &self.graph,
            u_init: self.u_init.as_deref(),
        };
        if !self.initialized {
            ctx.initialize(&mut backend)?;
            self.initialized = true;
        }
        match ctx.gamma(&mut backend, step, x)? {
            Ok(out) => Ok(out),
            Err((k, err)) => Err(CosimError::Slave { k, err }),
        }
    }

    /// Run from `t_init` to `t_end`. Consumes the slaves' state; build a new
    /// `Cosimulation` for another run.
    pub fn run(&mut self) -> Result<CosimResult, CosimError> {
        let min_step = self.check_settings()?;
        let ctx = Ctx {
            graph: &self.graph,
            u_init: self.u_init.as_deref(),
        };
        let (solver, t_init, t_end, dt_ref) = (&self.solver, self.t_init, self.t_end, self.dt_ref);
        let initialized = self.initialized;
        let initial_states: Vec<Vec<f64>> = self
            .workers
            .iter()
            .map(|w| w.slave.state().x.clone())
            .collect();
        if self.parallel {
            std::thread::scope(|scope| {
                let mut backend = Threaded::spawn(scope, &mut self.workers);
                let out = drive(
                    &ctx,
                    &mut backend,
                    solver,
                    t_init,
                    t_end,
                    dt_ref,
                    min_step,
                    initialized,
                    initial_states,
                );
                backend.stop();
                out
            })
        } else {
            let mut backend = Sequential {
                workers: &mut self.workers,
            };
            drive(
                &ctx,
                &mut backend,
                solver,
                t_init,
                t_end,
                dt_ref,
                min_step,
                initialized,
                initial_states,
            )
        }
    }
}

struct Ctx<'a> {
    graph: &'a CouplingGraph,
    u_init: Option<&'a [f64]>,
}

type SlaveFailure = (usize, SlaveError);

impl Ctx<'_> {
    fn n_sys(&self) -> usize {
        self.graph.layout().n_sys()
    }

    /// Compute (or take) the initial inputs and hand them to the workers.
    fn initialize(&self, backend: &mut dyn Backend) -> Result<Vec<f64>, CosimError> {
        let layout = self.graph.layout();
        let u = match self.u_init {
            Some(u) => {
                if u.len() != layout.n_in_tot() {
                    return Err(CouplingError::LengthMismatch {
                        expected: layout.n_in_tot(),
                        actual: u.len(),
                    }
                    .into());
                }
                u.to_vec()
            }
            None => {
                let replies = backend.scatter_gather(vec![Order::InitialOutputs; self.n_sys()]);
                let mut y = Vec::with_capacity(layout.n_out_tot());
                for r in replies {
                    match r {
                        Reply::Outputs(v) => y.extend(v),
                        other => unreachable!("unexpected reply {other:?}"),
                    }
                }
                self.graph.dispatch_values(&y)?
            }
        };
        let orders = (0..self.n_sys())
            .map(|k| Order::SetInitialInputs(u[layout.in_range(k).expect("valid system")].to_vec()))
            .collect();
        backend.scatter_gather(orders);
        Ok(u)
    }

    /// One γ evaluation. Slave integration failures come back as the inner
    /// error so the caller can reject the step; anything else is fatal.
    fn gamma(
        &self,
        backend: &mut dyn Backend,
        step: Step,
        x: Option<&[f64]>,
    ) -> Result<Result<GammaOutput, SlaveFailure>, CosimError> {
        let layout = self.graph.layout();
        let n_in = layout.n_in_tot();
        if let Some(x) = x {
            if x.len() != 2 * n_in {
                return Err(CouplingError::LengthMismatch {
                    expected: 2 * n_in,
                    actual: x.len(),
                }
                .into());
            }
        }
        let orders = (0..self.n_sys())
            .map(|k| {
                let right = x.map(|x| {
                    let r = layout.in_range(k).expect("valid system");
                    let v = x[r.clone()].to_vec();
                    let d = x[n_in + r.start..n_in + r.end].to_vec();
                    (v, d)
                });
                Order::Step { step, right }
            })
            .collect();
        let replies = backend.scatter_gather(orders);
        let mut blocks = Vec::with_capacity(replies.len());
        let mut modes = Vec::with_capacity(replies.len());
        let mut polys = Vec::with_capacity(replies.len());
        let mut failure = None;
        for (k, r) in replies.into_iter().enumerate() {
            match r {
                Reply::Step(StepReply {
                    outputs,
                    mode,
                    polys: p,
                }) => {
                    blocks.push(outputs);
                    modes.push(mode);
                    polys.push(p);
                }
                Reply::SlaveFailure(err @ SlaveError::IntegrationFailure(_)) => {
                    failure.get_or_insert((k, err));
                }
                Reply::SlaveFailure(err) => return Err(CosimError::Slave { k, err }),
                Reply::PolyFailure(err) => return Err(CosimError::Poly { k, err }),
                other => unreachable!("unexpected reply {other:?}"),
            }
        }
        if let Some(f) = failure {
            return Ok(Err(f));
        }
        let outputs = rearrange_outputs(layout, &blocks)?;
        let dispatched = dispatch(self.graph, &outputs)?.stacked();
        let residual = x
            .map(|x| x.iter().zip(&dispatched).map(|(a, b)| a - b).collect())
            .unwrap_or_default();
        Ok(Ok(GammaOutput {
            residual,
            dispatched,
            outputs,
            modes,
            polys,
        }))
    }
}

struct Attempt {
    converged: bool,
    outcome: SolveOutcome,
    iterations: usize,
    evals: usize,
    final_residual_norm: f64,
    /// Converged iterate and the final call's output.
    solution: Option<(Vec<f64>, GammaOutput)>,
}

fn attempt(
    ctx: &Ctx,
    backend: &mut dyn Backend,
    solver: &JfmConfig,
    step: Step,
) -> Result<Attempt, CosimError> {
    let failed = |evals: usize, iterations: usize, outcome| Attempt {
        converged: false,
        outcome,
        iterations,
        evals,
        final_residual_norm: f64::NAN,
        solution: None,
    };
    let prime = match ctx.gamma(backend, step, None)? {
        Ok(p) => p,
        Err(_) => return Ok(failed(1, 0, SolveOutcome::EvaluationFailure)),
    };
    if ctx.graph.layout().n_in_tot() == 0 {
        return Ok(Attempt {
            converged: true,
            outcome: SolveOutcome::Converged,
            iterations: 0,
            evals: 1,
            final_residual_norm: 0.0,
            solution: Some((Vec::new(), prime)),
        });
    }
    let x0 = DVec::from_vec(prime.dispatched.clone());
    let fatal: RefCell<Option<CosimError>> = RefCell::new(None);
    let report = {
        solve(
            |x: &DVec| match ctx.gamma(&mut *backend, step, Some(x.as_slice())) {
                Ok(Ok(out)) => Ok(DVec::from_vec(out.residual)),
                Ok(Err((k, err))) => Err(EvalError(format!("system {k}: {err}"))),
                Err(e) => {
                    let msg = e.to_string();
                    fatal.borrow_mut().get_or_insert(e);
                    Err(EvalError(msg))
                }
            },
            x0,
            solver,
        )
    };
    if let Some(e) = fatal.into_inner() {
        return Err(e);
    }
    let stats = report.stats;
    if !stats.outcome.is_converged() {
        return Ok(failed(
            stats.residual_evals + 1,
            stats.iterations,
            stats.outcome,
        ));
    }
    let x = report.x.as_slice().to_vec();
    let fin = match ctx.gamma(backend, step, Some(&x))? {
        Ok(f) => f,
        Err(_) => {
            return Ok(failed(
                stats.residual_evals + 2,
                stats.iterations,
                SolveOutcome::EvaluationFailure,
            ));
        }
    };
    Ok(Attempt {
        converged: true,
        outcome: stats.outcome,
        iterations: stats.iterations,
        evals: stats.residual_evals + 2,
        final_residual_norm: stats.final_residual_norm,
        solution: Some((x, fin)),
    })
}

#[allow(clippy::too_many_arguments)]
fn drive(
    ctx: &Ctx,
    backend: &mut dyn Backend,
    solver: &JfmConfig,
    t_init: f64,
    t_end: f64,
    dt_ref: f64,
    min_step: f64,
    initialized: bool,
    initial_states: Vec<Vec<f64>>,
) -> Result<CosimResult, CosimError> {
    let initial_inputs = if initialized {
        return Err(CosimError::Settings(
            "run() needs a fresh Cosimulation".into(),
        ));
    } else {
        ctx.initialize(backend)?
    };
    let n_in = ctx.graph.layout().n_in_tot();
    let mut result = CosimResult {
        t_init,
        initial_states,
        initial_inputs,
        records: Vec::new(),
        attempts: Vec::new(),
        status: RunStatus::Completed,
    };
    let Some(mut plan): Option<MacroStepPlan> = first_step(t_init, t_end, dt_ref, min_step) else {
        return Ok(result);
    };
    loop {
        let step = plan.step;
        let a = attempt(ctx, backend, solver, step)?;
        result.attempts.push(StepStats {
            n: result.records.len(),
            start: step.start,
            dt: step.size(),
            iterations: a.iterations,
            residual_evals: a.evals,
            outcome: a.outcome,
            final_residual_norm: a.final_residual_norm,
        });
        if let Some((x, fin)) = a.solution {
            let replies = backend.scatter_gather(vec![Order::Commit; ctx.n_sys()]);
            let states = replies
                .into_iter()
                .map(|r| match r {
                    Reply::Committed(x) => x,
                    other => unreachable!("unexpected reply {other:?}"),
                })
                .collect();
            let inputs = if n_in == 0 {
                GlobalPair::default()
            } else {
                GlobalPair::from_stacked(&x)?
            };
            result.records.push(StepRecord {
                n: result.records.len(),
                t: step.end,
                dt: step.size(),
                inputs,
                outputs: fin.outputs,
                residual: fin.residual,
                states,
                polys: fin.polys,
                iterations: a.iterations,
                residual_evals: a.evals,
            });
        }
        match next_step(&plan, a.converged, t_end) {
            NextStep::Continue(p) => plan = p,
            NextStep::Finished => return Ok(result),
            NextStep::Abort { t, .. } => {
                result.status = RunStatus::Aborted {
                    t,
                    last_outcome: a.outcome,
                };
                return Ok(result);
            }
        }
    }
}
