use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    /// Cholesky pivot at `pivot` fell below the singularity threshold.
    #[error("matrix is singular or not positive definite: pivot {pivot} has value {value:e}")]
    Singular { pivot: usize, value: f64 },

    #[error("all {scanned} candidate subsets have a singular covariance block")]
    AllSingular { scanned: u64 },

    #[error("solver did not converge after {iterations} sweeps (KKT residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("enumeration of {count} subsets exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("csv line {line}, column {column}: {message}")]
    Csv {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("{source_name} line {line}, column {column}: {message}")]
    Parse {
        source_name: &'static str,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("{failed} of {total} replications failed in cell {cell}")]
    TooManyFailures {
        cell: String,
        failed: usize,
        total: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::AllSingular { .. }
                | Error::NotConverged { .. }
                | Error::TooManyFailures { .. }
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}
