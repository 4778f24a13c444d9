use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The detected keypoints do not define a usable spine.
    #[error("normalization failed: {0}")]
    Normalization(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("trajectory optimization diverged at iteration {iteration}")]
    OptimizerDivergence { iteration: usize },

    /// Query point lies outside the field lattice. Carries the value at the
    /// clamped boundary point.
    #[error("point outside lattice (clamped boundary value {value})")]
    OutOfBounds { value: f64 },

    #[error("no feasible viewpoint among {candidates} candidates")]
    NoViewpoint { candidates: usize },

    #[error("episode aborted at tick {tick}: {reason}")]
    EpisodeAbort { tick: usize, reason: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Process exit code for each error class. Zero is reserved for success.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::Normalization(_) => 3,
            Error::Divergence { .. } | Error::OptimizerDivergence { .. } => 4,
            Error::OutOfBounds { .. } => 5,
            Error::NoViewpoint { .. } => 6,
            Error::EpisodeAbort { .. } => 7,
            Error::Format(_) => 8,
            Error::Io(_) => 9,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
