use std::fmt;
use std::path::PathBuf;

/// One violated scenario invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// User id the violation refers to, if it is user-specific.
    pub user: Option<usize>,
    pub message: String,
}

impl Violation {
    pub(crate) fn global(message: impl Into<String>) -> Self {
        Self {
            user: None,
            message: message.into(),
        }
    }

    pub(crate) fn user(id: usize, message: impl Into<String>) -> Self {
        Self {
            user: Some(id),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.user {
            Some(id) => write!(f, "user {id}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed scenario: {0}")]
    Parse(String),

    #[error("invalid scenario: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid learning state: {0}")]
    State(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("power settling did not converge after {rounds} rounds (residual {residual:e} mW)")]
    NotSettled {
        rounds: usize,
        residual: f64,
        powers: Vec<f64>,
    },

    #[error("instance too large to enumerate ({profiles:e} joint profiles > {limit:e}); check a single profile instead")]
    InstanceTooLarge { profiles: f64, limit: f64 },

    #[error("empirical distribution not normalized (total mass {0})")]
    NotNormalized(f64),

    #[error("empty trace")]
    EmptyTrace,

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid run configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
