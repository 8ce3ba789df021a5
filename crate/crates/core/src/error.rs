use thiserror::Error;

/// Errors produced anywhere in the identification pipeline.
///
/// The variants are coarse on purpose: the CLI maps each one to a distinct
/// exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed input: dimension mismatch, out-of-domain value, bad lengths.
    #[error("invalid input: {0}")]
    Input(String),

    /// The requested stability target has an empty viability set for the
    /// kernel structure.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The (structure, target) combination has no implemented closed form.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Linear-algebra or iteration failure.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// A simulated trajectory left the finite range.
    #[error("trajectory diverged at index {index} (value {value})")]
    Divergence { index: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
