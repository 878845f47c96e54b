//! Macro-step loop, step-size control and the worker layer.

mod plan;
mod run;
mod worker;

pub use plan::{
    default_min_step, first_step, next_step, MacroStepPlan, NextStep, PlanStatus, GROWTH,
};
pub use run::{
    CosimError, CosimResult, Cosimulation, GammaOutput, RunStatus, StepRecord, StepStats,
};
pub use worker::Worker;
