use thiserror::Error;

/// Errors raised anywhere in the verification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is not Hurwitz (eigenvalue with nonnegative real part)")]
    NotHurwitz,

    #[error("time window [{start}, {end}] exceeds trajectory horizon {horizon}")]
    WindowOutOfRange { start: f64, end: f64, horizon: f64 },

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("formula parse error at token {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("training data contains a single class")]
    SingleClassData,

    #[error("candidate pool exhausted: requested {requested}, available {available}")]
    EmptyPool { requested: usize, available: usize },

    #[error("grid of {points} points exceeds the limit of {limit}")]
    Overflow { points: u128, limit: usize },

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("value undefined: {0}")]
    ValueUndefined(&'static str),

    #[error("incompatible runs: {0}")]
    IncompatibleRuns(String),

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
