//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("empty referent mask")]
    EmptyReferent,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at step {step} (last finite loss {last_loss})")]
    Diverged { step: usize, last_loss: f64 },

    #[error("backbone pretraining failed to reach accuracy {target} within {steps} steps (best {best})")]
    PretrainBudget { target: f64, steps: usize, best: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
