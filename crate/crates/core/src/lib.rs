//! Co-simulation master for coupled black-box ODE systems.
//!
//! Inputs are exchanged as C¹-smooth polynomials over adaptive macro-steps and
//! the coupling condition of each step is solved by a jacobian-free nonlinear
//! solver. Start with `cargo run --example contractant` and browse
//! `examples/` for one program per capability.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coupling;
pub mod experiment;
pub mod integrator;
pub mod orchestrator;
pub mod polynomial;
pub mod slave;
pub mod solvers;
pub mod testbench;
