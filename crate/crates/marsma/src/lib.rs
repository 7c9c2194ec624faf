//! Std companion of `marsma-core`: the conic backend, a parallel batch
//! executor, JSON fixtures, configuration files and the experiment
//! harness behind the `marsma` binary.

use openblas_src as _;

pub use marsma_core as core;

pub mod config_file;
pub mod conic;
mod error;
pub mod fixtures;
pub mod harness;
pub mod pool;

pub use conic::ClarabelSolver;
pub use error::{Error, Result};
