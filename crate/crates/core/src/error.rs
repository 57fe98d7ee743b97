use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid observed data: {0}")]
    InvalidObservation(String),

    #[error("observation window unattainable: fraction {fraction} needs {needed} infections, only {available} occurred")]
    WindowUnattainable {
        fraction: f64,
        needed: usize,
        available: usize,
    },

    #[error("epidemic went extinct at t={time} with {infected} of {population} hosts infected")]
    Extinction {
        time: f64,
        infected: usize,
        population: usize,
    },

    #[error("uniform stream {stream} exhausted after {used} draws")]
    StreamExhausted { stream: &'static str, used: usize },

    #[error("impossible state: {0}")]
    ImpossibleState(String),

    #[error("optimisation failed: {0}")]
    Optimisation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::InvalidTrajectory(_) => "invalid_trajectory",
            Error::InvalidObservation(_) => "invalid_observation",
            Error::WindowUnattainable { .. } => "window_unattainable",
            Error::Extinction { .. } => "extinction",
            Error::StreamExhausted { .. } => "stream_exhausted",
            Error::ImpossibleState(_) => "impossible_state",
            Error::Optimisation(_) => "optimisation",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
