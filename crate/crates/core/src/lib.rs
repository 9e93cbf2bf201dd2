//! Learning model predictive control for systems whose state and input can
//! be rebuilt from short windows of outputs.
//!
//! Closed-loop data from past iterations is stored as output windows. Their
//! convex hull serves as terminal set and barycentric interpolation of the
//! stored costs-to-go serves as terminal cost. Each iteration can only
//! improve on the last.
//!
//! Entry points:
//! - [`system`]: the [`system::LiftedSystem`] trait, windows and shifts.
//! - [`cases`]: the PWA, DC motor and unicycle benchmarks.
//! - [`safe_set`]: stored windows and the terminal-cost LP.
//! - [`controller`]: the horizon problem and its solvers.
//! - [`closed_loop`]: iterations, campaigns and their checks.
//! - [`qp`], [`sqp`]: the numerical back ends.
//! - [`validation`]: sampled checks of the reconstruction maps.
//! - [`cli`]: the `lmpc` command line.

pub mod cases;
pub mod cli;
pub mod closed_loop;
pub mod controller;
pub mod cost;
pub mod error;
pub mod qp;
pub mod safe_set;
pub mod sqp;
pub mod system;
pub mod validation;

pub use error::{Error, Result};
