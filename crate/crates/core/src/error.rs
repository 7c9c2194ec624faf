use alloc::string::String;
use alloc::vec::Vec;

use crate::rates::Violation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("degenerate (zero-norm) channel for user {0}")]
    DegenerateChannel(usize),

    #[error("invalid clustering: {0}")]
    InvalidClustering(String),

    #[error("rate allocation violates the common-rate budget ({} violations)", .0.len())]
    InfeasibleAllocation(Vec<Violation>),

    #[error("unknown scheme id `{0}`")]
    UnknownScheme(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
