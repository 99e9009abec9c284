use thiserror::Error;

use crate::autodiff::AdError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("value {value} for variable {index} lies outside [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("population is empty")]
    EmptyPopulation,

    #[error("total selection weight is not positive ({0})")]
    NonPositiveFitness(f64),

    #[error("tournament size {k} exceeds population size {n}")]
    TournamentTooLarge { k: usize, n: usize },

    #[error("no offspring recorded for this generation")]
    NoOffspring,

    #[error("objective returned a non-finite value {value} at {point:?}")]
    NonFiniteObjective { value: f64, point: Vec<f64> },

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("automatic differentiation failed at iterate {iteration}: {source}")]
    Iterate {
        iteration: usize,
        #[source]
        source: AdError,
    },

    #[error(transparent)]
    Ad(#[from] AdError),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
