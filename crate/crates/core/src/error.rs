use std::path::PathBuf;

use crate::model::ParamIssue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters for unit `{id}`: {}", join_issues(.issues))]
    InvalidParams { id: String, issues: Vec<ParamIssue> },

    #[error("length mismatch for {what}: expected {expected} values, found {found}")]
    LengthMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    /// The requested series is all zeros, so a normalised error has no
    /// meaning. Distinct from an error value of zero.
    #[error("aggregation error is undefined for an all-zero request")]
    ZeroRequest,

    #[error("dispatch problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn length(what: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::LengthMismatch {
            what: what.into(),
            expected,
            found,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the optimisation itself, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::Infeasible(_) | Error::Solver(_))
    }
}

fn join_issues(issues: &[ParamIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
