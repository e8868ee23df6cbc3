//! Error type shared across the solver pipeline.

use thiserror::Error;

/// Errors surfaced by problem construction, model building and solving.
#[derive(Debug, Error)]
pub enum Error {
    /// A problem definition or configuration value is invalid.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    /// A configuration file failed to parse.
    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },

    /// A preset name was not recognized.
    #[error("unknown preset `{0}` (expected `cliff_world` or `scalar_lq`)")]
    UnknownPreset(String),

    /// A vector or matrix had an unexpected dimension.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    /// A matrix that must be symmetric positive definite failed its
    /// Cholesky factorization.
    #[error("{what} is not positive definite at knot {knot}")]
    NotPositiveDefinite { what: &'static str, knot: usize },

    /// A NaN or infinity appeared during numerical work.
    #[error("non-finite value in {what} at knot {knot}")]
    NonFinite { what: String, knot: usize },

    /// The risk parameter violates the solvability bound: the matrix
    /// B R⁻¹ Bᵀ − σ C Σ Cᵀ must be positive semidefinite at every knot.
    #[error(
        "existence condition violated at knot {knot}: min eigenvalue of \
         B R⁻¹ Bᵀ − σ C Σ Cᵀ is {min_eigenvalue:.6e} (risk parameter out of range)"
    )]
    ExistenceViolation { knot: usize, min_eigenvalue: f64 },

    /// Risk-objective estimation was asked for an empty sample set.
    #[error("cannot estimate risk objective from an empty sample set")]
    EmptySamples,

    /// The shifted log-sum-exp still produced a non-finite risk objective.
    #[error("risk objective overflow: sigma * sample range = {sigma_range:.6e}")]
    RiskObjectiveOverflow { sigma_range: f64 },

    /// File I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
