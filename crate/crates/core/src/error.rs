use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("record {record}: malformed: {message}")]
    Malformed { record: usize, message: String },

    #[error("record {record}: id {id:?} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        record: usize,
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("record {record}: duplicate id {id:?}")]
    DuplicateId { record: usize, id: String },

    #[error("record {record}: id {id:?} has non-finite component at index {component}")]
    NonFinite {
        record: usize,
        id: String,
        component: usize,
    },

    #[error("record {record}: id {id:?} is the zero vector")]
    ZeroVector { record: usize, id: String },

    #[error("embedding set has {n} entries, at least 2 are required")]
    InsufficientSize { n: usize },

    #[error("vector dimensions differ: {left} vs {right}")]
    VectorDimension { left: usize, right: usize },

    #[error("zero vector has no direction")]
    ZeroNorm,

    #[error("unknown utterance id {0:?}")]
    UnknownId(String),

    #[error("trial {index}: unknown utterance id {id:?}")]
    UnresolvedTrial { index: usize, id: String },

    #[error("top-n {top_n} exceeds the {available} available neighbors")]
    TopNOutOfRange { top_n: usize, available: usize },

    #[error("expansion of {id:?} annihilated the query vector (all-zero result)")]
    DegenerateExpansion { id: String },

    #[error("expansion produced a non-finite component")]
    NonFiniteExpansion,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("trial lists diverge at trial {index}: {detail}")]
    TrialMismatch { index: usize, detail: String },

    #[error("cannot apply {mode} normalization: {reason}")]
    DegenerateDistribution { mode: &'static str, reason: String },

    #[error("score set has no {0} trials")]
    MissingClass(&'static str),

    #[error("score set contains {0} trials with unknown labels")]
    UnknownLabels(usize),

    #[error("non-finite score at trial {index}")]
    NonFiniteScore { index: usize },

    #[error("cannot sample {requested} {kind} pairs, only {available} exist")]
    NotEnoughPairs {
        kind: &'static str,
        requested: usize,
        available: usize,
    },
}
