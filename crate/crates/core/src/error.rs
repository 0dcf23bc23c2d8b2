use std::path::PathBuf;

/// Errors raised by the toolkit.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: duplicate path {entry:?}")]
    DuplicatePath { path: PathBuf, entry: String },

    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("cannot encode image: {0}")]
    Encode(String),

    #[error("invalid image buffer: {0}")]
    InvalidImage(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },

    #[error("image {name} is {height}x{width}, smaller than required {required}x{required}")]
    Undersized {
        name: String,
        height: usize,
        width: usize,
        required: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training data must contain at least {min} examples of each class (real: {real}, synthetic: {synthetic})")]
    InsufficientClasses {
        min: usize,
        real: usize,
        synthetic: usize,
    },

    #[error("training diverged at iteration {iteration}: loss is not finite")]
    Diverged { iteration: usize },

    #[error("feature dimension mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{path}: unsupported model file ({message})")]
    ModelVersion { path: PathBuf, message: String },

    #[error("{path}: corrupt model file: {message}")]
    CorruptModel { path: PathBuf, message: String },

    #[error("score sets cover different paths: {}", format_mismatch(.only_left, .only_right))]
    PathMismatch {
        only_left: Vec<String>,
        only_right: Vec<String>,
    },

    #[error("{} manifest entries have no score (first: {})", .0.len(), .0.first().map(String::as_str).unwrap_or(""))]
    MissingScores(Vec<String>),
}

fn format_mismatch(left: &[String], right: &[String]) -> String {
    fn head(v: &[String]) -> String {
        let shown: Vec<&str> = v.iter().take(5).map(String::as_str).collect();
        if v.len() > 5 {
            format!("{} (+{} more)", shown.join(", "), v.len() - 5)
        } else {
            shown.join(", ")
        }
    }
    format!("only in first: [{}]; only in second: [{}]", head(left), head(right))
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
