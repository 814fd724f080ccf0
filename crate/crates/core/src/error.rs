use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("matrix of {rows}x{cols} entries exceeds the sizing budget")]
    Sizing { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("k = {k} out of range (allowed 1..={max})")]
    KOutOfRange { k: usize, max: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("rank-deficient matrix: sigma = {sigma:e} at or below threshold {threshold:e}")]
    DegenerateKernel { sigma: f64, threshold: f64 },
    #[error("bidiagonal QR failed to converge")]
    NoConvergence,
    #[error("zero singular value at index {0} in a correction denominator")]
    DivisionDegenerate(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("LCD scan budget exhausted at theta = {reached} (worst margin {margin:e})")]
    Budget { reached: f64, margin: f64 },
    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("bump construction violated: {0}")]
    Construction(String),
    #[error("underpowered: {0}")]
    Underpowered(String),
    #[error("output: {0}")]
    Output(String),
}

impl LabError {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        LabError::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
