use alloc::string::String;

/// Errors returned by the simulator core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid label distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot form {groups} groups from {clients} clients")]
    TooManyGroups { groups: usize, clients: usize },
    #[error("brute-force search would enumerate {candidates} partitions (limit {limit})")]
    InstanceTooLarge { candidates: u128, limit: u128 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("negative sample {value} at index {index}")]
    NegativeSample { index: usize, value: f64 },
    #[error("baseline energy must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("need at least {k} candidates, got {candidates}")]
    InsufficientCandidates { candidates: usize, k: usize },
    #[error("cannot select {k} clients out of {clients}")]
    TooManySelected { k: usize, clients: usize },
    #[error("model architectures differ")]
    ArchitectureMismatch,
    #[error("selection strategy needs a cluster assignment")]
    MissingAssignment,
}

pub type Result<T> = core::result::Result<T, Error>;
