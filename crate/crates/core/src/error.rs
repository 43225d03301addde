use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cohort has no examples")]
    EmptyCohort,
    #[error("group {group} has no examples")]
    EmptyGroup { group: usize },
    #[error("example {index}: group id {group} out of range for group count {count}")]
    GroupOutOfRange {
        index: usize,
        group: usize,
        count: usize,
    },
    #[error("example {index}: score {score} is outside [-1, 1]")]
    ScoreOutOfRange { index: usize, score: f64 },
    #[error("example {index}: score is not finite")]
    NonFiniteScore { index: usize },
    #[error("invalid parameter: {reason}")]
    InvalidParameter { reason: String },
    #[error("target rate {rate} is not a probability in [0, 1]")]
    InvalidTargetRate { rate: f64 },
    #[error("group {group}: target rate {rate} is not achievable")]
    InfeasibleTarget { group: usize, rate: f64 },
    #[error("group {group}: no feasible solution brackets the constraint")]
    InfeasibleConstraint { group: usize },
    #[error("group {group}: dual function is not monotone non-increasing")]
    NonMonotoneDual { group: usize },
    #[error("unknown group id {group} for a model with {count} groups")]
    UnknownGroup { group: usize, count: usize },
    #[error("decision probability {value} is outside [0, 1]")]
    InvalidProbability { value: f64 },
    #[error("mask selects no examples")]
    EmptyMask,
    #[error("example {index} has no label")]
    MissingLabel { index: usize },
    #[error("invalid distribution: {reason}")]
    InvalidDistribution { reason: String },
    #[error("line {line}: {reason}")]
    ParseInstance { line: usize, reason: String },
}

impl Error {
    pub(crate) fn invalid_parameter(reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
