use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("event log is empty")]
    EmptyLog,
    #[error("line {line}: {reason}")]
    InvalidRecord { line: u64, reason: String },
    #[error("unknown patient `{0}`")]
    UnknownPatient(String),
    #[error("sample is empty")]
    EmptySample,
    #[error("threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("relaxation step {0} is outside (0, 1)")]
    InvalidStep(f64),
    #[error("{0} distinct activities exceed the brute-force limit of {1}")]
    AlphabetTooLarge(usize, usize),
    #[error("no frequent pattern at threshold {0}; relax the activity threshold")]
    EmptyPattern(f64),
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("cut-off grid {max_f}x{max_d} exceeds definition size {len_f}x{len_d}")]
    GridOutOfRange {
        max_f: u32,
        max_d: u32,
        len_f: u32,
        len_d: u32,
    },
    #[error("no sweep points to choose from")]
    EmptyFrontier,
    #[error("every candidate point selects an empty group")]
    EmptyGroups,
    #[error("method `{0}` cannot choose cut-offs automatically")]
    ManualMethod(&'static str),
    #[error("ground truth is empty")]
    EmptyTruth,
    #[error("sample size {size} is invalid for a ground truth of {truth}")]
    InvalidSampleSize { size: usize, truth: usize },
    #[error("split {0} is outside (0, 1)")]
    InvalidSplit(f64),
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("rank correlation needs at least two points")]
    TooFewPoints,
    #[error("sequence is constant")]
    ConstantSequence,
    #[error("invalid definition: {0}")]
    InvalidDefinition(String),
}
