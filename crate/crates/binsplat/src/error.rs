use thiserror::Error;

/// Errors surfaced by scene construction, file I/O, training and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed or unsupported file content (bad magic, missing PLY
    /// property, dimension mismatch, truncated payload).
    #[error("format error: {0}")]
    Format(String),

    /// Mask hierarchy violation, reported at the first offending pixel in
    /// scan order (view-major, row-major, level ascending).
    #[error("nesting violation: view {view}, pixel ({x}, {y}), level {level}")]
    Nesting { view: usize, x: u32, y: u32, level: usize },

    #[error("scene contains no gaussians")]
    EmptyScene,

    /// API precondition violated by the caller (level out of range,
    /// incompatible shapes).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint refused because its layout or shapes differ from the
    /// requested configuration.
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    /// Training aborted on a non-finite loss.
    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFinite { iteration: u64, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
