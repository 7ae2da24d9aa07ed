use thiserror::Error;

pub type Result<T> = std::result::Result<T, VmcError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VmcError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// |psi| fell below the division floor at a configuration that needs to be divided by.
    #[error("amplitude {amplitude:e} below floor {floor:e} at {config:?}")]
    DivisionHazard {
        amplitude: f64,
        floor: f64,
        config: Vec<usize>,
    },

    #[error("spread parameter of hidden neuron {neuron} is exactly zero")]
    DerivativeSingularity { neuron: usize },

    #[error("activation {0} has no log-derivative formula")]
    UnsupportedActivation(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("configuration {config:?} outside the truncated basis")]
    OutOfRange { config: Vec<usize> },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("basis of size {size} exceeds the dense cap {cap}")]
    SizeExceeded { size: usize, cap: usize },

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("optimizer failure: {0}")]
    OptimizerFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for VmcError {
    fn from(e: std::io::Error) -> Self {
        VmcError::Io(e.to_string())
    }
}

impl From<csv::Error> for VmcError {
    fn from(e: csv::Error) -> Self {
        VmcError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for VmcError {
    fn from(e: serde_json::Error) -> Self {
        VmcError::Io(e.to_string())
    }
}
