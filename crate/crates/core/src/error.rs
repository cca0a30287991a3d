use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("negative-order multiplier applied to a field with nonzero mean")]
    NegativeOrderOnNonzeroMean,
    #[error("field has a nonzero mean")]
    NonzeroMean,
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("exponent s = {s} must exceed {min}")]
    ExponentTooSmall { s: f64, min: f64 },
    #[error("exponent order violated: q = {q} < p = {p}")]
    ExponentOrder { p: f64, q: f64 },
    #[error("input is not divergence-free (relative divergence {0:e})")]
    NonDivergenceFreeInput(f64),
    #[error("invalid initial condition: {0}")]
    InvalidInitialCondition(String),
    #[error("non-finite coefficient encountered")]
    NonFiniteField,
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("Picard iteration is not contractive (ratio {0:.3e})")]
    NonContractive(f64),
    #[error("trajectory has no samples")]
    EmptyTrajectory,
    #[error("trajectory needs at least {needed} stored samples, found {found}")]
    InsufficientSamples { needed: usize, found: usize },
    #[error("operation requires d = {expected}, got d = {found}")]
    WrongDimension { expected: usize, found: usize },
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteField | Error::NonContractive(_) => 2,
            Error::Io(_) | Error::Checkpoint(_) => 3,
            _ => 1,
        }
    }
}
