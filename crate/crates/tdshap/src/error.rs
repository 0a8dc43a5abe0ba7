//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no instances")]
    EmptyDataset,

    #[error("column {column:?} missing from the CSV header")]
    MissingColumn { column: String },

    #[error("row {row}, column {column:?}: {value:?} is not a finite number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: label {value:?} is not a valid class index")]
    UnknownLabelClass { row: usize, value: String },

    #[error("unknown instance id {0}")]
    UnknownInstance(usize),

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("split sizes sum to {requested} but the dataset has {available} instances")]
    SplitTooLarge { requested: usize, available: usize },

    #[error("the {part} split must be non-empty")]
    EmptySplitPart { part: &'static str },

    #[error("offset noise is undefined for classification labels")]
    OffsetNoiseOnClassification,

    #[error("invalid noise request: {0}")]
    InvalidNoise(String),

    #[error("noise fraction {fraction} selects no instances out of {train} in train")]
    NoiseFractionVacuous { fraction: f64, train: usize },

    #[error("invalid learner configuration: {0}")]
    InvalidLearner(String),

    #[error("learner {kind:?} cannot consume a warm-start model")]
    WarmStartUnsupported { kind: String },

    #[error("validation split is empty")]
    EmptyValidation,

    #[error("test split is empty")]
    EmptyTest,

    #[error("instance {0} does not appear in the permutation")]
    NotInPermutation(usize),

    #[error("exact Shapley needs at most {max} training instances, got {n}")]
    ExactTooLarge { n: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("block ids are not consecutive in the permutation")]
    BlockNotConsecutive,

    #[error("prefix floor {n_min} plus block size {k} exceeds {n} training instances")]
    InfeasibleBlock { n_min: usize, k: usize, n: usize },

    #[error("fixed-point iteration did not stabilize within {rounds} rounds")]
    NonConvergence { rounds: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}
