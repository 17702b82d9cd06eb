use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: need at least {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate overlap-add normalization at output sample {index} (window-square sum {value:e})")]
    Reconstruction { index: usize, value: f64 },

    #[error("format error in `{field}`: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("sample rate mismatch: {expected} Hz vs {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("cannot set SNR: {0} has zero power")]
    SilentInput(&'static str),

    #[error("{} trial(s) without a label: {}", .0.len(), .0.join(", "))]
    MissingLabels(Vec<String>),

    #[error("metric needs both classes; no {0} trials present")]
    MissingClass(&'static str),

    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),

    #[error("score sets cover different trials; symmetric difference: {}", .0.join(", "))]
    TrialMismatch(Vec<String>),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line,
            reason: reason.into(),
        }
    }
}
