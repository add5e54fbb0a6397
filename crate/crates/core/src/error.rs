use thiserror::Error;

use crate::model::KineticState;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("non-finite {what} at point {point:?}")]
    Evaluation { what: String, point: Vec<f64> },

    #[error("point {point:?} is not in the interior of the domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("trajectory blew up at t = {time}; last finite state q = {:?}, p = {:?}", last.q, last.p)]
    BlowUp { time: f64, last: KineticState },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("all particles exited in one epoch at t = {time} (kill_count = {kill_count})")]
    Extinction { time: f64, kill_count: u64 },

    #[error("only {survivors} survivors (survival fraction {fraction})")]
    InsufficientSurvivors { survivors: usize, fraction: f64 },

    #[error("only {exits} exits within the horizon (survival fraction {survival_fraction})")]
    InsufficientExits { exits: usize, survival_fraction: f64 },

    #[error("no exponential regime detected: {0}")]
    NonExponential(String),

    #[error("empty histogram")]
    EmptyHistogram,

    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
