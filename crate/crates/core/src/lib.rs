//! Differentiable statevector simulation and deep Q-learning with quantum
//! variational circuits.
//!
//! The layers build on each other: [`qcore`] simulates registers,
//! [`circuit`] assembles parametrized programs, [`diffgrad`] differentiates
//! them, [`models`] wraps circuits and dense networks as Q-functions,
//! [`rlagent`] trains them on [`envs`], and [`harness`] runs experiments.

pub mod circuit;
pub mod diffgrad;
pub mod encoding;
pub mod envs;
pub mod error;
pub mod harness;
pub mod models;
pub mod nn;
pub mod qcore;
pub mod rlagent;

pub use error::{Error, Result};
