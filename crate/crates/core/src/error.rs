use thiserror::Error;

#[derive(Debug, Error)]
pub enum SteerError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid steering reward: {0}")]
    InvalidReward(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unsupported observation: {0}")]
    UnsupportedObservation(String),

    #[error("degenerate posterior: observation has zero likelihood under every model")]
    DegeneratePosterior,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SteerError {
    /// Whether the failure came from numerics rather than from user input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, SteerError::Numeric(_) | SteerError::DegeneratePosterior)
    }
}

pub type Result<T, E = SteerError> = std::result::Result<T, E>;
