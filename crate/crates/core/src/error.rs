use thiserror::Error;

/// Which integrity check a checkpoint failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    BadMagic,
    UnsupportedVersion(u32),
    Truncated,
    DigestMismatch,
    Malformed,
}

impl std::fmt::Display for Corruption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Corruption::BadMagic => write!(f, "bad magic bytes"),
            Corruption::UnsupportedVersion(v) => write!(f, "unsupported container version {v}"),
            Corruption::Truncated => write!(f, "truncated container"),
            Corruption::DigestMismatch => write!(f, "content digest mismatch"),
            Corruption::Malformed => write!(f, "malformed record"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("compatibility error: {0}")]
    Compatibility(String),
    #[error("numeric error in layer {layer}: {reason}")]
    Numeric { layer: String, reason: String },
    #[error("frozen-weight violation: compressed model fingerprint changed from {before} to {after}")]
    FrozenWeights { before: String, after: String },
    #[error("training diverged at step {step}: loss is {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(Corruption),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
