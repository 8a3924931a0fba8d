use thiserror::Error;

/// Errors surfaced by the pacing library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacingError {
    #[error("length mismatch: expected {expected} slots, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("budget must be positive")]
    ZeroBudget,

    #[error("slot {elapsed} is outside a campaign of {num_slots} slots")]
    SlotOutOfRange { elapsed: usize, num_slots: usize },

    #[error("invalid probability {0}")]
    InvalidRate(f64),

    #[error("invalid campaign: {0}")]
    InvalidCampaign(String),

    #[error("invalid traffic model: {0}")]
    InvalidTraffic(String),

    #[error("forecast traffic is all zero")]
    EmptyForecast,

    #[error("commit log segment missing: snapshot at offset {snapshot_offset}, log starts at {log_start}")]
    MissingLogSegment { snapshot_offset: u64, log_start: u64 },

    #[error("no snapshot at or before tick {0}")]
    NoSnapshot(u64),

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for PacingError {
    fn from(err: std::io::Error) -> Self {
        PacingError::Io(err.to_string())
    }
}

pub type Result<T, E = PacingError> = std::result::Result<T, E>;
