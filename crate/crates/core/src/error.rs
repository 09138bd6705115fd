use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (non-positive dt, bad topology, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input file does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// File parsed but the contents are invalid.
    #[error("data error: {0}")]
    Data(String),

    /// Fewer frames than one full gait cycle.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Vector/matrix dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite state fed to the integrator.
    #[error("integration error: {0}")]
    Integration(String),

    /// Caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Optimizer update rejected (non-finite gradients).
    #[error("update rejected: {0}")]
    UpdateRejected(String),

    /// Checkpoint file is malformed or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Unknown preset name; lists the known ones.
    #[error("unknown preset `{name}`, available: {available}")]
    UnknownPreset { name: String, available: String },

    /// Output exists but was produced under a different configuration.
    #[error("config hash mismatch: {0}")]
    HashMismatch(String),

    /// One or more seed runs failed; completed outputs are retained.
    #[error("run failure: {0}")]
    RunFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
