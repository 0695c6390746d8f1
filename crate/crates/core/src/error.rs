use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{0}: non-finite value")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("architecture mismatch: {0}")]
    SpecMismatch(String),

    #[error("corrupt payload: {0}")]
    Corrupt(String),

    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("missing reference for utterance {0:?}")]
    MissingReference(String),

    #[error("system {system:?} has no hypothesis for utterance {utt_id:?}")]
    Coverage { system: String, utt_id: String },

    #[error("system {system:?} lacks confidences for utterance {utt_id:?}")]
    MissingConfidences { system: String, utt_id: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable short identifier, distinct per failure class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite(_) => "non-finite",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::EmptyDataset => "empty-dataset",
            Error::SpecMismatch(_) => "spec-mismatch",
            Error::Corrupt(_) => "corrupt",
            Error::UnsupportedVersion(_) => "unsupported-version",
            Error::Numerical(_) => "numerical",
            Error::Parse(_) => "parse",
            Error::MissingReference(_) => "missing-reference",
            Error::Coverage { .. } => "coverage",
            Error::MissingConfidences { .. } => "missing-confidences",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code: 2 for data/validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::NonFinite(_) => 3,
            _ => 2,
        }
    }
}
