use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left:?}, right is {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid shape {rows}x{cols}: {reason}")]
    InvalidShape {
        rows: usize,
        cols: usize,
        reason: &'static str,
    },

    #[error("no features")]
    NoFeatures,

    #[error("rank {rank} out of range for {feature_count} features (total {total})")]
    RankOutOfRange {
        feature_count: usize,
        rank: String,
        total: String,
    },

    #[error(
        "layer would have {requested} neurons, above the cap of {cap}; \
         use binomial_prefix or binomial_random instead"
    )]
    NeuronCapExceeded { requested: String, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient in layer {layer} {tensor}")]
    NonFiniteGradient { layer: usize, tensor: &'static str },

    #[error("non-finite loss at epoch {epoch}, step {step}; epoch losses so far: {trace:?}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        trace: Vec<f64>,
    },

    #[error("{path}: row {row}: {message}")]
    Data {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("all {count} repetitions failed; first error: {first}")]
    AllRepetitionsFailed { count: usize, first: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
