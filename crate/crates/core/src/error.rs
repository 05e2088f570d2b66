use thiserror::Error;

/// Errors produced by the signal-processing routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input too short: need at least {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },

    #[error("track too short: need at least {needed} frames, got {got}")]
    TrackTooShort { needed: usize, got: usize },

    #[error("reconstruction condition violated: window/hop pair is not constant-overlap-add")]
    ReconstructionCondition,

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("degenerate autocorrelation (zero-lag value {0})")]
    DegenerateAutocorrelation(f64),

    #[error("invalid phase configuration: log argument {0} is not positive")]
    InvalidPhaseConfiguration(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state dimension {got} not supported here (expected {expected})")]
    StateDimension { expected: usize, got: usize },

    #[error("utterance too short for WPE taps: {frames} frames, need more than {needed}")]
    WpeTooShort { frames: usize, needed: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
