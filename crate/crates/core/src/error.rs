use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: document {doc_id}: {msg}")]
    Reference {
        path: String,
        line: usize,
        doc_id: String,
        msg: String,
    },

    #[error("invalid ontology: {0}")]
    Ontology(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown entity {entity} in relation triple (document has {count} entities)")]
    UnknownEntity { entity: usize, count: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint config hash {found} does not match expected {expected}")]
    ConfigHash { expected: String, found: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Diverged {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    #[error("event type {0} was not triggered")]
    Untriggered(String),

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Coarse category used for process exit codes: 1 = data, 2 = config, 3 = numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Reference { .. }
            | Error::UnknownEntity { .. }
            | Error::Io(_)
            | Error::Json(_) => 1,
            Error::Ontology(_)
            | Error::Config(_)
            | Error::Checkpoint(_)
            | Error::ConfigHash { .. }
            | Error::Untriggered(_) => 2,
            Error::Shape { .. }
            | Error::NonFinite(_)
            | Error::Empty(_)
            | Error::Diverged { .. }
            | Error::GradCheck(_) => 3,
        }
    }
}
