use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config is missing required key `{0}`")]
    MissingKey(String),

    #[error("invalid config: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] tlgamp::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Config problems as opposed to runtime or I/O failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Self::Parse { .. } | Self::MissingKey(_) | Self::Invalid(_)
        )
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
