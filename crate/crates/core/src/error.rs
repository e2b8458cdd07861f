use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the splatting library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parameter vector has {actual} entries but scene topology needs {expected}")]
    Topology { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("image too small: {0}")]
    ImageTooSmall(String),

    #[error("tape does not match the scene: {0}")]
    TapeMismatch(String),

    #[error("non-finite gradient for {param} of gaussian {gaussian}")]
    NonFiniteGradient { gaussian: usize, param: &'static str },

    #[error("training diverged at iteration {iteration}: composite loss is {value}")]
    Diverged { iteration: usize, value: f64 },

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
