use std::path::PathBuf;

use thiserror::Error;

use crate::mdp::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    /// The latent distance between the current state and the goal collapsed.
    #[error("state {state} is already at the goal in latent space")]
    AtGoal { state: usize },

    #[error("degenerate latent: {0}")]
    Degenerate(String),

    /// A rollout entered a state with no dataset-observed action.
    #[error("no admissible action at state {state}")]
    NoAction {
        state: usize,
        partial: Option<Box<Trajectory>>,
    },

    #[error("codebook separation could not be satisfied after {attempts} resamples")]
    Codebook { attempts: usize },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("theory defect: {0}")]
    TheoryDefect(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors that originate from user-supplied configuration.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation { .. } | Error::InvalidArgument(_) | Error::InvalidMap(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub fn is_theory_defect(&self) -> bool {
        match self {
            Error::TheoryDefect(_) => true,
            Error::Stage { source, .. } => source.is_theory_defect(),
            _ => false,
        }
    }
}
