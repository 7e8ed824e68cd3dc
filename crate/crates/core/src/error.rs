use std::path::PathBuf;

/// Errors raised anywhere in the reduction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("matrix is singular (zero pivot at index {pivot})")]
    Singular { pivot: usize },

    #[error("QR iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("matrix is not Hurwitz; eigenvalues with nonnegative real part: {offending:?}")]
    NotHurwitz { offending: Vec<(f64, f64)> },

    #[error("CG breakdown at iteration {iteration} (curvature {curvature:e})")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("SPAI stagnated in column {column} (residual {residual:e} after {iterations} steps)")]
    Stagnation {
        column: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("rank-deficient moment matrix; deficient columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("no residual ledger: {0}")]
    EmptyLedger(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// Wraps the error with a context string, e.g. `"outer 2, inner 3, point 1"`.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
