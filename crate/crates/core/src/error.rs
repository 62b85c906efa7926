//! Crate-wide error type. Scenario-file problems live in
//! [`crate::config::ConfigError`] so the CLI can map them to their own exit
//! code; everything else funnels through [`Error`].

use thiserror::Error;

use crate::config::ConfigError;
use crate::policies::InteractiveTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("predicted class {0} has zero probability mass under this channel and true distribution")]
    ZeroPredictedMass(usize),

    #[error("feasible data matrix is rank deficient (columns linearly dependent beyond tolerance)")]
    RankDeficient,

    #[error("confusion channel is singular or too ill-conditioned to invert")]
    SingularChannel,

    #[error("cloud update rejected: contribution for class {class} is negative ({value})")]
    NegativeContribution { class: usize, value: f64 },

    #[error("budget must be nonnegative, got {0}")]
    NegativeBudget(f64),

    #[error("a scenario needs at least one class")]
    ZeroClasses,

    #[error("fleet is empty")]
    EmptyFleet,

    #[error(
        "best-response iteration did not converge within {max_sweeps} sweeps \
         (last max per-robot change {last_change:e})"
    )]
    NotConverged {
        max_sweeps: usize,
        last_change: f64,
        trace: InteractiveTrace,
    },

    #[error("expected one payload per robot ({expected}), got {actual}")]
    WrongPayloadCount { expected: usize, actual: usize },

    #[error("ring order is broken: {0}")]
    BrokenRing(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid confusion matrix: {0}")]
    InvalidConfusion(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("invalid robot profile: {0}")]
    InvalidProfile(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("round {round}: {source}")]
    SimulationRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}
