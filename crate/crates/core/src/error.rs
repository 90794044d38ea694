use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("test function `{0}` is not admissible for this operation")]
    NotAdmissible(String),

    #[error("test function `{name}` has no {what}")]
    MissingData { name: String, what: &'static str },

    #[error("unknown test function `{0}`")]
    UnknownFunction(String),

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("tolerance {requested:e} unreachable: {reason}")]
    ToleranceUnreachable { requested: f64, reason: String },

    #[error("quadrature did not converge (estimated error {achieved:e}, requested {requested:e})")]
    QuadratureFailed { achieved: f64, requested: f64 },

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("at least {required} replicates required, got {got}")]
    TooFewReplicates { required: usize, got: usize },

    #[error("complex-valued input where a real sample is required")]
    ComplexInput,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of numerical machinery (truncation or quadrature)
    /// as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ToleranceUnreachable { .. } | Error::QuadratureFailed { .. }
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
