use std::path::PathBuf;

/// Broad failure classes; the CLI maps each to a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("prompt needs {needed} token slots but context length is {n}")]
    TooManyTokens { needed: usize, n: usize },
    #[error("context length must be at least 2, got {0}")]
    ContextTooShort(usize),
    #[error("prompt contains a non-printable character at byte {0}")]
    InvalidText(usize),
    #[error("keyword {0:?} not found in prompt")]
    KeywordNotFound(String),
    #[error("keyword {0:?} occurs more than once in prompt")]
    AmbiguousKeyword(String),
    #[error("instance id {0} is bound to more than one token")]
    DuplicateInstance(u8),
    #[error("instance id must be positive")]
    ZeroInstanceId,
    #[error("no embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("keyword {0:?} has a zero-energy standalone embedding")]
    ZeroEnergyKeyword(String),
    #[error("non-finite embedding value in row {0}")]
    NonFiniteEmbedding(usize),
    #[error("non-finite input in {0}")]
    NonFiniteInput(&'static str),
    #[error("non-finite value produced in {0}")]
    NonFinite(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("label {value} at ({row}, {col}) exceeds instance count {max}")]
    LabelOutOfRange { value: u8, row: usize, col: usize, max: u8 },
    #[error("unknown instance id {0}")]
    UnknownInstance(u8),
    #[error("instance {0} has no pixels in its sketch")]
    EmptyInstance(u8),
    #[error("bad downsample target {target_h}x{target_w} for source {source_h}x{source_w}")]
    BadTarget { target_h: usize, target_w: usize, source_h: usize, source_w: usize },
    #[error("mask length {got} does not match spatial size {expected}")]
    MaskLengthMismatch { expected: usize, got: usize },
    #[error("K = {k} exceeds the {valid} valid tokens")]
    KTooLarge { k: usize, valid: usize },
    #[error("invalid layer config: {0}")]
    InvalidLayer(String),
    #[error("no pyramid level at {0}x{1}")]
    MissingLevel(usize, usize),
    #[error("invalid scene:\n{}", .0.join("\n"))]
    InvalidScene(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::NonFinite(_) | Error::NonFiniteEmbedding(_) | Error::NonFiniteInput(_) => {
                ErrorClass::Numeric
            }
            _ => ErrorClass::Config,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
