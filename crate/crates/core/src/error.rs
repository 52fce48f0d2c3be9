use thiserror::Error;

use crate::allocation::ViewerId;
use crate::model::InteractiveMode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("count vector has {counts} entries but the session has {modes} modes")]
    DimensionMismatch { counts: usize, modes: usize },

    #[error("counts sum to {sum} but the session observes m = {m} operations")]
    CountSumMismatch { sum: u64, m: u64 },

    #[error("at least one viewer is required")]
    EmptyViewerList,

    #[error("bandwidth {value} lies outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("degenerate allocation range: W_min = W_max = {0}")]
    DegenerateRange(f64),

    #[error("normalizer vanishes ({0})")]
    DegenerateNormalizer(String),

    #[error("demand vector is empty")]
    EmptyDemand,

    #[error("peak demand {peak} is below the connection floor W_min = {w_min}")]
    UnderProvisioned { peak: f64, w_min: f64 },

    #[error("mode enumeration too large: m = {m}, k = {k} (m*k must be <= {cap})")]
    EnumerationTooLarge { m: u64, k: usize, cap: u64 },

    #[error("viewer {0} already holds a channel or a queue slot")]
    DuplicateViewer(ViewerId),

    #[error("viewer {0} is not allocated")]
    UnknownViewer(ViewerId),

    #[error("mode {0} has no entry in the demand table")]
    UnknownMode(InteractiveMode),

    #[error("channel invariant violated: {0}")]
    InvariantViolation(String),

    #[error("time {t} s is outside [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("simulation already reached its final tick ({0})")]
    PastEnd(u64),

    #[error("sweep list is empty")]
    EmptySweep,

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
