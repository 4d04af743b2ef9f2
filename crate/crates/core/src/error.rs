use thiserror::Error;

#[derive(Debug, Error)]
pub enum DsbdError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DsbdError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        DsbdError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DsbdError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            DsbdError::Parse { .. }
                | DsbdError::Schema(_)
                | DsbdError::DegenerateSplit(_)
                | DsbdError::DegenerateGraph(_)
                | DsbdError::EmptyDataset(_)
                | DsbdError::Config(_)
                | DsbdError::Checkpoint(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, DsbdError>;
