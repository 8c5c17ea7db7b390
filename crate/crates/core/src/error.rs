use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KsnrError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix must be square with dim >= 1, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("eigenvalue iteration did not converge for {dim}x{dim} matrix (frobenius norm {norm:.3e})")]
    EigenNoConvergence { dim: usize, norm: f64 },

    #[error("eigenvectors unavailable: decomposition is eigenvalues-only")]
    IncompleteDecomposition,

    #[error("degenerate spectrum: top two eigenvalue moduli {first:.12e} and {second:.12e} tie")]
    DegenerateSpectrum { first: f64, second: f64 },

    #[error("linear system is singular or not positive definite ({0})")]
    SingularSystem(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("objective was non-finite for every sample of CEM iteration {0}")]
    AllCandidatesFailed(usize),

    #[error("unsupported: {0}")]
    Unsupported(&'static str),

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for KsnrError {
    fn from(e: std::io::Error) -> Self {
        KsnrError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for KsnrError {
    fn from(e: serde_json::Error) -> Self {
        KsnrError::Parse(e.to_string())
    }
}

pub type Result<T, E = KsnrError> = std::result::Result<T, E>;
