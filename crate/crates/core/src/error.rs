//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension mismatch between two operands.
    #[error("shape mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    Shape {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    /// Invalid parameter value (distribution parameters, counts, fractions).
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A numeric operation produced an unusable result.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Training loss became non-finite.
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    /// An SGLD update produced a non-finite weight.
    #[error("sampler diverged (non-finite update) at step {step}")]
    SamplerDiverged { step: usize },

    /// Test-time bias correction is undefined for zero-mean noise.
    #[error("expectation correction is degenerate: noise mean is zero")]
    DegenerateCorrection,

    /// The operation only supports classification networks.
    #[error("unsupported task: {0}")]
    UnsupportedTask(String),

    /// Binary or CSV input did not match the expected format.
    #[error("format error in {path} at byte offset {offset}: {message}")]
    Format {
        path: String,
        offset: u64,
        message: String,
    },

    /// A CSV cell failed to parse.
    #[error("parse error in {path} at row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    /// Invalid experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
