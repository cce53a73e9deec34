use thiserror::Error;

/// Errors raised across the calibration pipeline.
///
/// The `Display` strings are stable identifiers; the CLI and the run logs
/// report them verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty-series")]
    EmptySeries,

    #[error("param-out-of-bounds: dimension {dim} value {value} outside [{lower}, {upper}]")]
    ParamOutOfBounds {
        dim: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("bad-range: t_start {start} > t_end {end}")]
    BadRange { start: usize, end: usize },

    #[error("bh-diverged at tick {tick}")]
    BhDiverged { tick: usize },

    #[error("nonfinite-input")]
    NonFiniteInput,

    #[error("checkpoint-corrupt: {field}")]
    CheckpointCorrupt { field: String },

    #[error("density-underflow")]
    DensityUnderflow,

    #[error("infeasible-schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("config-invalid: {0}")]
    ConfigInvalid(String),

    #[error("checkpoint-required for variant {0}")]
    CheckpointRequired(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn corrupt(field: impl Into<String>) -> Self {
        Error::CheckpointCorrupt { field: field.into() }
    }
}
