use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("context norm {norm} exceeds the unit ball")]
    ContextNorm { norm: f64 },

    #[error("invalid composite action {action:?}: {reason}")]
    InvalidAction { action: Vec<usize>, reason: String },

    #[error("no action available at level {level} for prefix {prefix:?}")]
    EmptyActionSet { level: usize, prefix: Vec<usize> },

    #[error("{count} composite actions exceed the enumeration capacity of {limit}")]
    Capacity { count: u128, limit: u128 },

    #[error("feasibility repair failed after {attempts} attempts: {reason}")]
    FeasibilityRepair { attempts: usize, reason: String },

    #[error(
        "packing failed: placed {placed} of {wanted} points at level {level} with separation \
         {separation} after {proposals} proposals; use a smaller family or a larger horizon"
    )]
    Packing {
        level: usize,
        placed: usize,
        wanted: usize,
        separation: f64,
        proposals: u64,
    },

    #[error("invalid MDP: {0}")]
    Mdp(String),

    #[error("invalid decomposition: {0}")]
    Decomposition(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
