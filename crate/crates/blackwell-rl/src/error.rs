//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid discount {value}: {expected}")]
    InvalidDiscount { value: f64, expected: &'static str },

    #[error("transition row (s={state}, a={action}) sums to {sum:.17}, expected 1")]
    TransitionRowSum {
        state: usize,
        action: usize,
        sum: f64,
    },

    #[error("transition entry (s={state}, a={action}, s'={next_state}) is invalid: {value}")]
    BadTransitionEntry {
        state: usize,
        action: usize,
        next_state: usize,
        value: f64,
    },

    #[error("reward entry (s={state}, a={action}) is not finite: {value}")]
    NonFiniteReward {
        state: usize,
        action: usize,
        value: f64,
    },

    #[error("row {row} is not a probability distribution: {detail}")]
    NotADistribution { row: usize, detail: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("non-finite value detected at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("adversary returned a vector of length {got} at round {round}, expected {expected}")]
    AdversaryDimension {
        round: usize,
        got: usize,
        expected: usize,
    },

    #[error("environment fault at episode {episode}, step {step}: {detail}")]
    EnvironmentFault {
        episode: usize,
        step: usize,
        detail: String,
    },

    #[error("unknown algorithm '{0}'")]
    UnknownAlgorithm(String),

    #[error("run failed (algo={algo}, run_id={run_id}): {source}")]
    RunFailed {
        algo: String,
        run_id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
