use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("species index {index} out of range (M = {count})")]
    SpeciesIndex { index: usize, count: usize },

    #[error("resource coordinate {index} is negative")]
    NegativeResource { index: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-viable species present: {0:?}")]
    NonViable(Vec<usize>),

    #[error("invalid initial data: {0}")]
    InitialData(String),

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("bracket violation at iteration {iteration}: lower iterate exceeds upper by {excess}")]
    BracketViolation { iteration: usize, excess: f64 },

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("{0}")]
    Input(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
