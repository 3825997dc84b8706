use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("{name} is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { name: String, deviation: f64 },

    #[error("{name} is not unitary (deviation {deviation:.3e})")]
    NotUnitary { name: String, deviation: f64 },

    #[error("{name} is not a density operator: {reason}")]
    NotDensity { name: String, reason: String },

    #[error("{name} is not a measurement operator (0 ⪯ M ⪯ I violated by {deviation:.3e})")]
    NotMeasurement { name: String, deviation: f64 },

    #[error("unknown tensor factor `{name}`")]
    UnknownFactor { name: String },

    #[error("purifier dimension {purifier} smaller than state rank {rank}")]
    PurifierTooSmall { purifier: usize, rank: usize },

    #[error("marginals disagree by {deviation:.3e}, beyond the repair threshold {limit:.3e}")]
    MarginalMismatch { deviation: f64, limit: f64 },

    #[error("transcript inconsistent with the referee (max residual {residual:.3e})")]
    InconsistentTranscript { residual: f64 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("paper-exact schedule needs {needed} iterations, above the cap {cap}")]
    IterationCap { needed: usize, cap: usize },

    #[error("loss matrix bound 0 ⪯ M ⪯ I/a violated by {deviation:.3e} at iteration {iteration}")]
    LossBound { deviation: f64, iteration: usize },

    #[error("validation failed for {name}: {reason}")]
    Validation { name: String, reason: String },

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    pub(crate) fn validation(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
