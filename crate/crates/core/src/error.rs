//! Failure taxonomy shared by every stage of the pipeline.
//!
//! Errors are split into three categories that map one-to-one onto the CLI
//! exit codes: configuration problems (exit 1), data problems (exit 2) and
//! numeric problems (exit 3). Every error names the stage that raised it so
//! a one-line diagnostic is enough to locate the failure.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or contradictory configuration: bad parameter ranges, unknown
    /// keys, combinations that the pipeline refuses to run.
    #[error("config error in {stage}: {message}")]
    Config { stage: &'static str, message: String },

    /// Problems with the data itself: unparseable cells, dimension
    /// mismatches, datasets too small for the requested operation.
    #[error("data error in {stage}: {message}")]
    Data { stage: &'static str, message: String },

    /// Numerical failure: non-finite intermediates, factorizations that do
    /// not exist at the configured regularization.
    #[error("numeric error in {stage}: {message}")]
    Numeric { stage: &'static str, message: String },
}

impl Error {
    pub fn config(stage: &'static str, message: impl Into<String>) -> Self {
        Error::Config { stage, message: message.into() }
    }

    pub fn data(stage: &'static str, message: impl Into<String>) -> Self {
        Error::Data { stage, message: message.into() }
    }

    pub fn numeric(stage: &'static str, message: impl Into<String>) -> Self {
        Error::Numeric { stage, message: message.into() }
    }

    /// Process exit code the CLI reports for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config { .. } => 1,
            Error::Data { .. } => 2,
            Error::Numeric { .. } => 3,
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            Error::Config { stage, .. } | Error::Data { stage, .. } | Error::Numeric { stage, .. } => stage,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::data("io", err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
