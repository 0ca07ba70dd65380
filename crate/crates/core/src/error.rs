use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the dialogue state tracking pipeline.
#[derive(Debug, Error)]
pub enum AsuError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("duplicate value {value:?} for slot {slot:?}")]
    DuplicateValue { slot: String, value: String },

    #[error("unknown slot {0:?}")]
    UnknownSlot(String),

    #[error("unknown value {value:?} for slot {slot:?}")]
    UnknownValue { slot: String, value: String },

    #[error("no history item with id {0}")]
    DanglingItem(usize),

    #[error("request bit {slot:?} on item {item_id} is not pending")]
    BitNotPending { item_id: usize, slot: String },

    #[error("training data has a single class")]
    SingleClass,

    #[error("training produced a non-finite loss")]
    NonFiniteLoss,

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("session is closed")]
    SessionClosed,

    #[error("no satisfiable scenario after {0} attempts")]
    ScenarioSampling(usize),

    #[error("no referring template for request slot {req:?} and reference slot {reference:?}")]
    MissingTemplate { req: String, reference: String },

    #[error("turn {turn_idx} of dialogue {dialogue_id} has no candidate actions")]
    NoCandidates { dialogue_id: String, turn_idx: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, AsuError>;

impl AsuError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AsuError::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        AsuError::Json { path: path.into(), source }
    }
}
