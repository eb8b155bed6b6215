use thiserror::Error;

/// Errors raised anywhere in the scheduling, simulation and bounding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid chain state: {0}")]
    InvalidState(String),

    #[error("generator violation: {0}")]
    GeneratorViolation(String),

    #[error("stationarity solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoSolution { iterations: usize, residual: f64 },

    #[error("backward integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("closed-loop chain is not ergodic: {0}")]
    NonErgodic(String),

    #[error("state {state} is absorbing (all outgoing rates are zero)")]
    AbsorbingState { state: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("bound not applicable: {0}")]
    BoundInapplicable(String),

    #[error("bound diverges: {0}")]
    BoundDiverges(String),

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}
