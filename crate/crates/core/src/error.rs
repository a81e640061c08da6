use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not unimodular (det = {det})")]
    NotUnimodular { det: f64 },

    #[error("logarithm requested outside the principal domain (‖g − I‖_F = {distance})")]
    LogDomain { distance: f64 },

    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration budget exceeded: {needed} candidates > {budget}")]
    BudgetExceeded { needed: f64, budget: f64 },

    #[error("atom budget exceeded: {needed} > {budget}")]
    AtomBudgetExceeded { needed: usize, budget: usize },

    #[error("node budget exceeded: more than {budget} stored points")]
    NodeBudgetExceeded { budget: usize },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid config:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
