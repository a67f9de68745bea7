use alloc::string::String;
use thiserror::Error;

/// Failures raised by the loop engine and by [`crate::objects::apply_update`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoopError {
    #[error("inconsistent loop state: {0}")]
    InconsistentState(String),
    #[error("operator `{operator}` failed: {message}")]
    OperatorFailure {
        operator: &'static str,
        message: String,
    },
    #[error("malformed candidate update: {0}")]
    MalformedDelta(String),
}

impl LoopError {
    pub fn operator(operator: &'static str, message: impl Into<String>) -> Self {
        LoopError::OperatorFailure {
            operator,
            message: message.into(),
        }
    }
}

/// A [`LoopError`] tagged with the index of the episode step that raised it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("step {step}: {source}")]
pub struct EpisodeError {
    pub step: u64,
    #[source]
    pub source: LoopError,
}
