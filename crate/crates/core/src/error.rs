use alloc::string::String;

use crate::domain::FactorId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown factor id {0}")]
    UnknownFactor(FactorId),

    #[error("duplicate factor name `{0}`")]
    DuplicateFactorName(String),
    #[error("duplicate factor id {0}")]
    DuplicateFactor(FactorId),

    #[error("factor ids must be contiguous from 0; expected {expected}, found {found}")]
    NonContiguousFactors { expected: usize, found: FactorId },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("need at least {needed} samples with distinct n, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("sample {index} has n + offset = 0; the log-log fit is undefined there")]
    ZeroSize { index: usize },

    #[error("sample {index}: score {score} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, score: f64 },

    #[error("sample {index}: trials must be at least 1")]
    ZeroTrials { index: usize },

    #[error("invalid fit config: {0}")]
    InvalidFitConfig(&'static str),

    #[error("invalid combo: {0}")]
    InvalidCombo(String),

    #[error("invalid pairing: {0}")]
    InvalidPairing(String),

    #[error("need at least {needed} factors, got {got}")]
    TooFewFactors { needed: usize, got: usize },

    #[error("schedule needs m >= 2, got {0}")]
    ScheduleTooShort(usize),

    #[error("cannot take {requested} demonstrations from a combo holding {available}")]
    SplitExceedsAvailable { requested: u64, available: u64 },

    #[error("budget must be at least 1")]
    ZeroBudget,

    #[error("every candidate slope is zero; fall back to the equal baseline")]
    AllSlopesZero,

    #[error("slope {0} is negative or not finite")]
    InvalidSlope(f64),

    #[error("embedding `{source_id}` has zero norm")]
    ZeroNorm { source_id: String },

    #[error("embedding `{source_id}` has a non-finite entry")]
    NonFiniteEmbedding { source_id: String },

    #[error("dimension mismatch: expected {expected}, got {got} (`{source_id}`)")]
    DimensionMismatch { expected: usize, got: usize, source_id: String },

    #[error("k = {k} exceeds the training set size {size}")]
    KTooLarge { k: usize, size: usize },

    #[error("k must be at least 1")]
    ZeroK,

    #[error("invalid world: {0}")]
    InvalidWorld(String),

    #[error("invalid harness config: {0}")]
    InvalidConfig(String),
}
