//! Max-min fair downlink design for a movable-antenna transmitter using
//! two-layer rate-splitting multiple access.
//!
//! The crate is `no_std` with `alloc`. It holds the whole algorithmic
//! pipeline: the geometric channel model, closed-form SINR and rate
//! evaluation, similarity-based user pairing, the lifted convex subproblem
//! and its successive-convex-approximation loop, and the pruning particle
//! swarm that searches antenna positions. The conic solve itself is behind
//! the [`subproblem::ConvexSolver`] trait; a backend lives in the `marsma`
//! crate.

#![no_std]

extern crate alloc;

pub mod channel;
pub mod clustering;
pub mod config;
mod error;
pub mod exec;
pub mod inner;
pub mod linalg;
pub mod rates;
pub mod schemes;
pub mod seed;
pub mod subproblem;
pub mod swarm;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Complex column vector (channels and beamformers).
pub type CVector = alloc::vec::Vec<Complex64>;
