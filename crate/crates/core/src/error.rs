use thiserror::Error;

pub type Result<T> = std::result::Result<T, QkdError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QkdError {
    /// Invalid construction input: layout, bit lists, session config.
    #[error("configuration error: {0}")]
    Config(String),
    /// A gate or measurement names a qubit that is not in the register.
    #[error("addressing error: {0}")]
    Addressing(String),
    /// A state-level invariant was violated, e.g. discarding an entangled qubit.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    /// Numerical bookkeeping went wrong (probabilities, unitarity).
    #[error("internal consistency error: {0}")]
    InternalConsistency(String),
    /// Protocol steps were invoked out of order.
    #[error("protocol sequencing error: {0}")]
    Sequencing(String),
}
