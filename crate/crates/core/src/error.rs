use thiserror::Error;

/// Failures of the kinematic, dynamic, control and plant layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid kinematic chain: {0}")]
    InvalidChain(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
    #[error("joint-space inertia singular at q = {q:?} (condition number {condition:e})")]
    Singular { q: Vec<f64>, condition: f64 },
    #[error("plant fault at t = {time} s: {reason}")]
    PlantFault { time: f64, reason: String },
    #[error("trial {trial} of scenario `{scenario}` failed: {source}")]
    Trial {
        scenario: String,
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
