use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("layer norm needs at least two columns")]
    DegenerateRow,
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("sinusoidal position width {0} is odd")]
    OddWidth(usize),
    #[error("loss node is not a scalar (shape {0:?})")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("invalid config: {0}")]
    Config(String),

    #[error("player sequence is empty")]
    EmptySequence,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("clip `{0}` has no annotated player sequences")]
    MissingSequences(String),

    #[error("token `{0}` is not in the vocabulary")]
    UnknownToken(String),
    #[error("sequence length {len} exceeds cap {cap}")]
    LengthCapExceeded { len: usize, cap: usize },
    #[error("inconsistent ablation flags: {0}")]
    InconsistentFlags(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("schema error: {0}")]
    Schema(String),
    #[error("duplicate video id `{0}`")]
    DuplicateVideoId(String),
    #[error("player `{player}` in clip `{video_id}` has no sequence")]
    MissingSequence { video_id: String, player: String },
    #[error("game `{0}` is not covered by the split")]
    UncoveredGame(String),
    #[error("checkpoint version {found} does not match {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(String),
    #[error("candidate and reference sets are not aligned: {0}")]
    Alignment(String),

    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
