use std::io;

use thiserror::Error;

/// Unified error type for the crate.
///
/// The CLI maps these onto exit codes: parse/data/format/io problems are
/// data errors (2), divergence during training is 3.
#[derive(Debug, Error)]
pub enum LcrError {
    /// Malformed input data; carries the 1-based line number.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structurally invalid data or arguments (duplicates, empty sets,
    /// out-of-range ratios and the like).
    #[error("{0}")]
    Data(String),

    /// A parameter left the finite range during SGD. The message names the
    /// offending quantity and the learning rate in effect.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// Unreadable or unsupported model file.
    #[error("model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl LcrError {
    pub fn data(msg: impl Into<String>) -> Self {
        LcrError::Data(msg.into())
    }

    pub fn divergence(msg: impl Into<String>) -> Self {
        LcrError::Divergence(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, LcrError>;
