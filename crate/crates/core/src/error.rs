// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by every phonolens operation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("lexicon is empty ({skipped} rows skipped)")]
    EmptyLexicon { skipped: usize },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("pronunciation has no vowel: {0}")]
    NoVowel(String),

    #[error("phoneme kind mismatch: {0}")]
    Kind(String),

    #[error("invalid activation address: {0}")]
    Address(String),

    #[error("sequence length {len} exceeds context length {max}")]
    Length { len: usize, max: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("tokenization error: {0}")]
    Tokenization(String),

    #[error("insufficient data: {got} usable words, need at least {need}")]
    InsufficientData { got: usize, need: usize },

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Training { epoch: usize, loss: f64 },

    #[error("invalid intervention spec: {0}")]
    Spec(String),

    #[error("invalid patch pair: {0}")]
    Pair(String),

    #[error("prompt lengths differ: {clean} vs {corrupt} tokens")]
    PromptLength { clean: usize, corrupt: usize },

    #[error("degenerate pair: both runs predict token {0}")]
    DegeneratePair(u32),

    #[error("degenerate normalization: |LD(clean) - LD(corrupt)| = {0:e}")]
    DegenerateDenominator(f64),

    #[error("patch scan failed: {0}")]
    Scan(String),

    #[error("only {got} judgeable tokens, need {need}")]
    InsufficientTokens { got: usize, need: usize },

    #[error("cosine undefined for zero-norm vector")]
    UndefinedCosine,

    #[error("collection failed: {ok} of {total} words succeeded")]
    Collection { ok: usize, total: usize },

    #[error("rank {rank} is below requested component count {k}")]
    Rank { rank: usize, k: usize },

    #[error("model load error: {0}")]
    Load(String),

    #[error("plot error: {0}")]
    Plot(String),

    #[error("gated resource unavailable: {0}")]
    GatedResource(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
