use thiserror::Error;

/// Errors produced by the pulse-synthesis library.
#[derive(Debug, Error)]
pub enum PulseError {
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),

    #[error("system too large: dimension {dim} exceeds cap {cap}; use projected LCT")]
    DimensionOverflow { dim: usize, cap: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate eigenpair ({j}, {k}): gap {gap:e} rad/ns")]
    Singular { j: usize, k: usize, gap: f64 },

    #[error("unknown state: {0}")]
    UnknownState(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("optimizer initialization failed: {0}")]
    OptimizerInit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PulseError>;
