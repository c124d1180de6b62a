use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the file formats and the command line.
#[derive(Debug, Error)]
pub enum ToolError {
    /// Reading or writing a file failed.
    #[error("{path}: {source}")]
    Io {
        /// File involved.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },
    /// A file did not parse.
    #[error("{path}: {message}")]
    Format {
        /// File involved.
        path: PathBuf,
        /// What was wrong.
        message: String,
    },
    /// Flags were inconsistent.
    #[error("{0}")]
    Usage(String),
    /// The library rejected the operation.
    #[error(transparent)]
    Core(#[from] tattooed_core::Error),
}

/// Result alias for this crate.
pub type Result<T> = std::result::Result<T, ToolError>;

/// Exit code used when verification finds no watermark.
pub const EXIT_NEGATIVE: i32 = 10;

impl ToolError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ToolError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        ToolError::Format { path: path.into(), message: message.into() }
    }

    /// Short machine-readable class name.
    pub fn class(&self) -> &'static str {
        use tattooed_core::Error as E;
        match self {
            ToolError::Io { .. } => "io",
            ToolError::Format { .. } => "format",
            ToolError::Usage(_) => "usage",
            ToolError::Core(e) => match e {
                E::KeyFormat { .. } => "key",
                E::Format(_) => "format",
                E::Capacity { .. } => "capacity",
                E::BaselineMismatch => "baseline_mismatch",
                E::Shuffle(_) | E::DegenerateNeuron { .. } | E::RecoveryFailed { .. } => "unshuffle",
                E::CodeConstruction { .. } => "code_construction",
                E::ChannelLost { .. } => "channel_lost",
                _ => "invalid_input",
            },
        }
    }

    /// Process exit code for this class. 0 and 10 are reserved for verify.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            "usage" => 2,
            "io" => 3,
            "format" => 4,
            "key" => 5,
            "capacity" => 6,
            "baseline_mismatch" => 7,
            "unshuffle" => 8,
            "invalid_input" => 9,
            "code_construction" => 11,
            _ => 12,
        }
    }
}
