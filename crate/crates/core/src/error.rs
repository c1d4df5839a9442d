use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("subsystem index {index} out of range for {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("not a density operator: {0}")]
    NotDensity(String),

    #[error("state is not pure (second eigenvalue {0:.3e})")]
    NotPure(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("loss matrix at round {round} has spectrum [{min:.3e}, {max:.3e}], outside [0, I]")]
    LossOutOfRange { round: usize, min: f64, max: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error(
        "precision not reached after {rounds} rounds: certified gap {gap:.3e} exceeds target {target:.3e}"
    )]
    PrecisionNotReached {
        rounds: usize,
        gap: f64,
        target: f64,
    },

    #[error("instance has no promise pair")]
    MissingPromise,

    #[error("instance format error at `{path}`: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
