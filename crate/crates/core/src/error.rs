use thiserror::Error;

/// Errors raised by the game toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("work bound exceeded: {0}")]
    WorkBound(String),
    #[error("energy budget violated: {0}")]
    BudgetViolation(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, GameError>;
