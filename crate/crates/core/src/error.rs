use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter violates the invariant of the type that owns it.
    #[error("invalid `{field}`: {constraint}")]
    InvalidParameter {
        field: &'static str,
        constraint: String,
    },

    /// A precondition of an operation was not met at run time.
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error("unknown scenario id {0} (expected 1, 2 or 3)")]
    UnknownScenario(u8),

    #[error("{metric} needs at least {needed} chunk(s), got {got}")]
    NotEnoughChunks {
        metric: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("batch cell mixes configurations: {0}")]
    MixedCell(String),

    #[error("malformed trace file {path}: {detail}")]
    Trace { path: PathBuf, detail: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, constraint: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            constraint: constraint.into(),
        }
    }

    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }
}
