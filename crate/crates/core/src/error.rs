use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("schedule validation failed with {} violation(s): {}", .0.len(), join(.0))]
    Validation(Vec<String>),

    #[error("device model failure at tick {tick} (repetition {repetition}): {message}")]
    Device {
        tick: u64,
        repetition: u64,
        message: String,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

fn join(v: &[String]) -> String {
    v.join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
