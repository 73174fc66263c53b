//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A policy asked for a grid load the battery cannot deliver or absorb.
    #[error("infeasible action at slot {slot}: {reason}")]
    InfeasibleAction { slot: usize, reason: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty trace")]
    EmptyTrace,

    /// The offline program has no schedule satisfying the battery constraints.
    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("no feasible action in state {state}")]
    NoFeasibleAction { state: String },

    #[error("no kernel satisfies the support constraint")]
    NoFeasibleKernel,

    #[error("value {value} is not in the alphabet")]
    AlphabetMismatch { value: f64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("singular Fisher information in slot {slot} (value {value:e})")]
    SingularFi { slot: usize, value: f64 },

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("non-uniform spacing at line {line}: expected {expected_s}s, found {found_s}s")]
    NonUniformSpacing { line: usize, expected_s: f64, found_s: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
