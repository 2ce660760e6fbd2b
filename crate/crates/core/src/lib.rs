//! Simulation and exact analysis of the randomized Collatz chain
//! `X_{n+1} = (3 X_n + xi) / 2^d`, where `xi` is drawn from a finite law on
//! odd integers `>= -1` and `2^d` is the full power of two dividing the
//! numerator. States are odd positive integers of arbitrary size.
//!
//! The crate has three layers:
//!
//! * simulation: [`arith`] (exact big-integer step), [`rng`] / [`xi`]
//!   (reproducible noise), [`engine`] (trajectory runner with pluggable
//!   observers), [`stats`] (streaming estimators and tail fits);
//! * exact analysis: [`exact`] (truncated transition tables in rational
//!   arithmetic, stationary vectors, return-time bounds);
//! * reachability: [`reach`] (deterministic predecessor paths from state 1
//!   and checkable path certificates).
//!
//! [`report`] flattens the estimators into a single JSON document plus CSV
//! histogram exports, shared by every front end.

pub mod arith;
pub mod engine;
pub mod error;
pub mod exact;
pub mod reach;
pub mod report;
pub mod rng;
pub mod stats;
pub mod xi;

pub use arith::{classical_step, step, OddInt, StepOutcome};
pub use error::Error;
pub use rng::RngStream;
pub use xi::XiDistribution;
