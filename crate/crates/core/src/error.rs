use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spec at `{field}`: {message}")]
    InvalidSpec { field: String, message: String },

    #[error("sample too small: n = {n} but at least {required} rows are needed")]
    SampleTooSmall { n: usize, required: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Design condition number exceeds the gate (or the design is singular).
    #[error("rank deficient design (condition number {condition_number:e})")]
    RankDeficient { condition_number: f64 },

    #[error("incompatible scenario pair: {0}")]
    IncompatiblePair(String),

    #[error("too few usable replications: {usable} of {requested} (need at least 2)")]
    InsufficientReplications { usable: usize, requested: usize },

    #[error("event index {event_index} out of range for {rows} rows")]
    IndexOutOfRange { event_index: usize, rows: usize },

    #[error("exclusion window too large: {segment} segment has {rows} rows, needs {required}")]
    WindowTooLarge {
        segment: &'static str,
        rows: usize,
        required: usize,
    },

    #[error("data error: {0}")]
    Data(String),
}
