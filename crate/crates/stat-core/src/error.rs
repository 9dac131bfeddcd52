use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatError {
    #[error("shape mismatch: {op} with shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("dataset load error: {0}")]
    Load(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("training diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },
}

pub type Result<T> = std::result::Result<T, StatError>;

impl StatError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        StatError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
