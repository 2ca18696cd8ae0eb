use thiserror::Error;

/// Errors raised across the navigation stack.
#[derive(Debug, Error)]
pub enum IceNavError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("packing failed: {0}")]
    PackingFailure(String),
    #[error("argument outside domain: {0}")]
    DomainError(String),
    #[error("no path found: {0}")]
    NoPathFound(String),
    #[error("warm start infeasible: {0}")]
    InfeasibleWarmStart(String),
    #[error("planning failed: {0}")]
    PlanningFailure(String),
    #[error("trial timed out after {0:.1} s")]
    TrialTimeout(f64),
    #[error("calibration failed: {0}")]
    CalibrationError(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, IceNavError>;
