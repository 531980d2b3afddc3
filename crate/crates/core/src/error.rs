use thiserror::Error;

/// Errors raised across the crate.
///
/// Identity violations are never errors: they are reported as data. Errors
/// are reserved for malformed input and for operations whose preconditions
/// cannot be met.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid thermal context: {0}")]
    Context(String),
    #[error("invalid spectrum: {0}")]
    Spectrum(String),
    #[error("invalid probability distribution: {0}")]
    Distribution(String),
    #[error("invalid work grid: {0}")]
    Grid(String),
    #[error("invalid kernel: {0}")]
    Kernel(String),
    #[error("incommensurate energies: {0}")]
    Commensurability(String),
    #[error("insufficient bath degeneracy: {0}")]
    Capacity(String),
    #[error("kernel is not dyadic at the requested precision: {0}")]
    NotDyadic(String),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("invalid operator: {0}")]
    Operator(String),
    #[error("channel output is not quasi-classical (off-diagonal weight {leakage:.3e})")]
    NotQuasiClassical { leakage: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            found,
        }
    }
}
