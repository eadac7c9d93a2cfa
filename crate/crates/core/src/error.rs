use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: need N >= 2")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("step-size failure at step {step}: min eigenvalue {min_eigenvalue:.3e} below -{tolerance:.1e}; reduce dt")]
    StepSize {
        step: usize,
        min_eigenvalue: f64,
        tolerance: f64,
    },

    #[error("exhaustive permutation search supports N <= {max}, got N = {n}")]
    Capability { n: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: estimated error {error:.3e} exceeds {tolerance:.3e}")]
    Quadrature { error: f64, tolerance: f64 },

    #[error("root bracketing failed: {0}")]
    RootBracket(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{failed} of {total} trajectories failed (limit 1%); first error: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidDimension(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidArgument(_)
                | Error::Capability { .. }
                | Error::Config(_)
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
