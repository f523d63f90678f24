use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid duty cycles: {0}")]
    InvalidDutyCycle(String),

    #[error("slot time must be positive and finite, got {0} ms")]
    InvalidSlotTime(f64),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("unknown VSTA index {index} (schedule has {count} VSTAs)")]
    UnknownVsta { index: usize, count: usize },

    #[error("VSTA {vsta} is not connected at send time {send_t} ms")]
    NotConnected { vsta: usize, send_t: f64 },

    #[error("loss rate {0} outside the Mathis validity range (0, 0.02)")]
    InvalidLoss(f64),

    #[error("invalid path parameters: {0}")]
    InvalidPath(String),

    #[error("invalid sampler configuration: {0}")]
    InvalidSampler(String),

    #[error("RTT must be positive, got {0} ms")]
    NonPositiveRtt(f64),

    #[error("enumeration needs {count} schedules, budget is {budget}")]
    BudgetExceeded { count: u128, budget: u128 },

    #[error("the eq1 objective needs one path per VSTA ({expected}), got {got}")]
    MissingPaths { expected: usize, got: usize },

    #[error("{algorithm}: {source}")]
    Algorithm {
        algorithm: String,
        source: Box<Error>,
    },

    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
