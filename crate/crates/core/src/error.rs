use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid time step: dt = {0} s (must be > 0)")]
    InvalidStep(f64),

    #[error("degenerate virtual mass: inertia = {0}")]
    DegenerateMass(f64),

    #[error("{what} = {value} outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("unknown shape preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown mode {0} (expected 1-6)")]
    UnknownMode(i64),

    #[error("trace row {row}: {message}")]
    Trace { row: u64, message: String },

    #[error("hand script: {0}")]
    Script(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
