//! Error type shared by every module in the crate.

use alloc::string::String;

/// Errors surfaced by tensor ops, diffusion machinery, and training loops.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoreError {
    /// Extents do not line up for the requested operation.
    #[error("{op}: dimension error: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An argument violates the operation's contract (non-scalar loss,
    /// out-of-range timestep, eps <= 0, ...).
    #[error("{op}: contract error: {detail}")]
    Contract { op: &'static str, detail: String },

    /// Invalid configuration value.
    #[error("config error: {detail}")]
    Config { detail: String },

    /// A NaN or Inf was produced; carries enough context to reproduce.
    #[error("numeric failure: {context}")]
    Numeric { context: String },
}

impl CoreError {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        CoreError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        CoreError::Contract {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        CoreError::Config {
            detail: detail.into(),
        }
    }

    pub fn numeric(context: impl Into<String>) -> Self {
        CoreError::Numeric {
            context: context.into(),
        }
    }

    /// True for NaN/Inf failures (CLI exit code 3); everything else is a
    /// contract/config failure (exit code 2).
    pub fn is_numeric(&self) -> bool {
        matches!(self, CoreError::Numeric { .. })
    }
}
