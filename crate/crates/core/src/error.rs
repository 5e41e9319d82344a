use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text. `line` is 1-based; `field` names the offending column.
    #[error("{source_name}:{line}: {field}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("network validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("topology {topology} leaves buses {unreachable:?} disconnected from the slack bus")]
    Disconnected {
        topology: String,
        unreachable: Vec<usize>,
    },

    #[error("power flow did not converge after {iterations} iterations (max mismatch {mismatch:.3e} p.u.)")]
    Diverged { iterations: usize, mismatch: f64 },

    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("library entry (topology {topology}, t = {time_index}): {source}")]
    Library {
        topology: String,
        time_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trial (true topology {topology}, t = {time_index}, repetition {repetition}): {source}")]
    Trial {
        topology: String,
        time_index: usize,
        repetition: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} trials failed; first failure: {first}")]
    Experiment {
        failed: usize,
        total: usize,
        first: Box<Error>,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", .path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical solver, possibly wrapped in trial or library context.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Diverged { .. } | Error::SingularJacobian { .. } => true,
            Error::Library { source, .. } | Error::Trial { source, .. } => source.is_numerical(),
            Error::Experiment { first, .. } => first.is_numerical(),
            _ => false,
        }
    }

    /// True for malformed or invalid network definitions and topologies.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Validation(_) | Error::Disconnected { .. }
        )
    }
}
