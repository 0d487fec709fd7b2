//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("{op}: length mismatch, expected {expected}, got {got}")]
    LengthMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite gradient at parameter index {index}")]
    NonFiniteGradient { index: usize },
    #[error("non-finite loss at step {step} (lr {lr:.3e})")]
    NonFiniteLoss { step: usize, lr: f64 },
    #[error("empty object set")]
    EmptyObjectSet,
    #[error("unknown architecture '{0}'")]
    UnknownArchitecture(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model built for {expected} objects, got {got}")]
    ObjectCountMismatch { expected: usize, got: usize },
    #[error("checkpoint format version {got}, expected {expected}")]
    CheckpointVersion { expected: u32, got: u32 },
    #[error("checkpoint parameter blob holds {got} values, model expects {expected}")]
    CheckpointLength { expected: usize, got: usize },
    #[error("checkpoint parameter blob is not valid base64: {0}")]
    CheckpointBase64(String),
    #[error("checkpoint parameter blob byte length {0} is not a multiple of 8")]
    CheckpointAlignment(usize),
    #[error("bad trajectory file magic, expected \"PDYN\"")]
    BadMagic,
    #[error("trajectory file version {got}, expected {expected}")]
    BadFileVersion { expected: u32, got: u32 },
    #[error("trajectory file truncated while reading {0}")]
    TruncatedFile(&'static str),
    #[error("packing infeasible after {attempts} relaxation attempts")]
    PackingInfeasible { attempts: usize },
    #[error("non-finite simulation state")]
    NonFiniteState,
    #[error("horizon {horizon} too long for trajectory with {states} states")]
    HorizonTooLong { horizon: usize, states: usize },
    #[error("stale cache: backward input does not match cached forward")]
    StaleCache,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
