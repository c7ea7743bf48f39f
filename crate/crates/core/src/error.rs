use thiserror::Error;

use crate::tensor_io::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("non-finite gradient for parameter `{param}` at element {index}")]
    NonFiniteGradient { param: String, index: usize },

    #[error("negative magnitude {value} at index {index}")]
    NegativeMagnitude { index: usize, value: f64 },

    #[error("phase {value} at index {index} outside (-pi, pi]")]
    PhaseOutOfRange { index: usize, value: f64 },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("timestep {t} outside 1..={t_max}")]
    TimestepOutOfRange { t: usize, t_max: usize },

    #[error("noise sample {index} has modulus {modulus}, expected 1")]
    NonUnitNoise { index: usize, modulus: f64 },

    #[error("activation record is stale: recorded against parameter version {recorded}, parameters are at version {current}")]
    StaleActivations { recorded: u64, current: u64 },

    #[error("activation record is missing: {0}")]
    MissingActivations(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn shape(expected: impl std::fmt::Display, found: impl std::fmt::Display) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
