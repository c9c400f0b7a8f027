use thiserror::Error;

/// Errors raised by grid construction, profile evaluation and the
/// diagnostic functionals.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("under-resolved: {0}")]
    UnderResolved(String),

    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: &'static str, reason: String },

    #[error("unsupported range: {0}")]
    UnsupportedRange(String),

    #[error("singular weight: {0}")]
    SingularWeight(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("run failed: {0}")]
    RunFailed(String),

    #[error("no fit: {0}")]
    NoFit(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable snake_case name of the variant, used in `errors.json`.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidProfile(_) => "invalid_profile",
            Error::OutOfDomain(_) => "out_of_domain",
            Error::UnderResolved(_) => "under_resolved",
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::UnsupportedRange(_) => "unsupported_range",
            Error::SingularWeight(_) => "singular_weight",
            Error::HypothesisViolated(_) => "hypothesis_violated",
            Error::InsufficientResolution(_) => "insufficient_resolution",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::RunFailed(_) => "run_failed",
            Error::NoFit(_) => "no_fit",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        }
    }

    pub(crate) fn arg(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
