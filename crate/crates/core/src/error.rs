use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed taxonomy, dataset, config or checkpoint content.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("format error: {0}")]
    Empty(String),

    #[error("duplicate class id `{class}` at line {line}")]
    DuplicateClass { class: String, line: usize },

    #[error("need {needed} superclasses but the taxonomy has {available}")]
    InsufficientSuperclasses { needed: usize, available: usize },

    #[error("need {needed} classes but only {available} are available")]
    InsufficientClasses { needed: usize, available: usize },

    #[error("class `{class}` has {available} samples, {needed} required")]
    InsufficientSamples {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("unknown class id `{0}`")]
    UnknownClass(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("row count mismatch: {left} vs {right}")]
    RowCountMismatch { left: usize, right: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
