use thiserror::Error;

pub type Result<T, E = AncError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AncError {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("shape mismatch: {what} expected {expected}, got {actual}")]
    ShapeMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite reference sample on channel {channel}")]
    NonFiniteReference { channel: usize },

    #[error("non-finite error sample on microphone {mic}")]
    NonFiniteError { mic: usize },

    #[error("control filter ({source_idx}, {reference_idx}) diverged: non-finite weight")]
    Divergence {
        source_idx: usize,
        reference_idx: usize,
    },

    #[error("normalization denominator for error microphone {mic} is not finite")]
    NonFiniteDenominator { mic: usize },

    #[error("invalid impulse response: {0}")]
    InvalidImpulseResponse(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("scenarios do not share a noise realization: {0}")]
    MismatchedComparison(String),
}

impl AncError {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        AncError::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
