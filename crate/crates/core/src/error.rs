use thiserror::Error;

/// Errors raised by every layer of the crate.
#[derive(Debug, Error)]
pub enum FancError {
    /// Operand shapes do not conform, or a precondition on an argument failed.
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    /// The integrator produced a non-finite state.
    #[error("integration failed at step {step}: state is not finite")]
    Integration { step: usize },

    /// A loss, gradient or parameter went non-finite during training.
    #[error("numeric failure: {0}")]
    NonFinite(String),

    /// Malformed row in an input file.
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Dataset-level problem (empty split, unknown item, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid or truncated checkpoint file.
    #[error("checkpoint section `{section}`: {msg}")]
    Checkpoint { section: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FancError {
    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        FancError::Contract {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn checkpoint(section: impl Into<String>, msg: impl Into<String>) -> Self {
        FancError::Checkpoint {
            section: section.into(),
            msg: msg.into(),
        }
    }

    /// True when the numerics broke down (as opposed to bad arguments or data).
    pub fn is_numeric(&self) -> bool {
        matches!(self, FancError::Integration { .. } | FancError::NonFinite(_))
    }
}

pub type Result<T, E = FancError> = std::result::Result<T, E>;
