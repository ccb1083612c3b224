use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: no edges found")]
    EmptyInput,

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("qubo has {m} variables; exhaustive search is capped at {max}, use the tabu solver")]
    TooLarge { m: usize, max: usize },

    #[error("cannot build subproblem: {0}")]
    Build(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::TooLarge { .. } => 2,
            Error::Parse { .. } | Error::EmptyInput | Error::Data(_) | Error::Io(_) => 3,
            Error::Build(_) | Error::LengthMismatch { .. } | Error::Internal(_) => 4,
        }
    }
}
