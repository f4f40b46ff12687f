use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GklsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("site or bond index {index} out of range for lattice of length {len}")]
    Index { index: usize, len: usize },

    #[error("operation not defined here: {0}")]
    Domain(String),

    #[error("lattice length {requested} exceeds the supported range {min}..={max}")]
    Resource { requested: usize, min: usize, max: usize },

    /// The chain has more than one closed communicating class; each class is
    /// listed as sorted state indices.
    #[error("generator is reducible: {} closed classes", classes.len())]
    Reducible { classes: Vec<Vec<usize>> },

    #[error("iterative solver did not converge (residual {residual:e})")]
    NotConverged { residual: f64 },

    #[error("density is not strictly increasing in the fugacity near x = {x}")]
    NonMonotone { x: f64 },

    #[error("degenerate model: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, GklsError>;
