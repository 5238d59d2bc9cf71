use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input is not conjugate symmetric (residual {residual:.3e})")]
    NotConjugateSymmetric { residual: f64 },

    #[error("observation set is empty")]
    EmptyObservations,

    #[error("moments still carry a noise term (sigma2 = {sigma2}); debias first")]
    NotDebiased { sigma2: f64 },

    /// A generic-position assumption failed: a denominator, leading coefficient or
    /// power-spectrum entry is numerically zero.
    #[error("degenerate instance: {what} (magnitude {value:.3e}, scale {scale:.3e})")]
    Degenerate {
        what: String,
        value: f64,
        scale: f64,
    },

    #[error("inconsistent moments: {0}")]
    Inconsistent(String),

    #[error("no candidate survived the realness filter")]
    NoCandidates,

    #[error("rank-deficient distribution system (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("eigen-solver failure: {0}")]
    Eigen(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed dataset file: {0}")]
    Format(String),

    #[error("unsupported dataset version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("dataset file is truncated")]
    Truncated,

    #[error("config error: {0}")]
    Config(String),
}
