//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by spaces, measures, distances and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("graph is disconnected: no path between {0} and {1}")]
    Disconnected(usize, usize),

    #[error("point index {index} out of range for space with {len} points")]
    PointOutOfRange { index: usize, len: usize },

    #[error("measures live on different spaces")]
    SpaceMismatch,

    #[error("atom at point {0} has no image under the given map")]
    UnmappedAtom(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("backend does not support geodesic interpolation: {0}")]
    BackendMissing(String),

    #[error("empty sequence")]
    EmptySequence,

    #[error("solver did not converge after {iterations} iterations (best incumbent {best})")]
    NonConvergence { best: f64, iterations: usize },

    #[error("support too large for brute-force oracle: {0} x {1} (max 2 x 2)")]
    SupportTooLarge(usize, usize),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("metric axioms violated: {0}")]
    InvalidMetric(String),

    #[error("unsupported endpoint class: {0}")]
    UnsupportedEndpoints(String),

    #[error("input parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
