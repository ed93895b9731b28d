use thiserror::Error;

pub type Result<T, E = BellError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BellError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("operator is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("state is not normalized (norm {norm:.15})")]
    NotNormalized { norm: f64 },

    /// A residual operator needs `1/omega_x`; raised when the state-weighted
    /// norm of some combined Bob operator vanishes.
    #[error("degenerate strategy: omega[{index}] = {value:.3e}")]
    DegenerateStrategy { index: usize, value: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("not extractable: {0}")]
    NotExtractable(String),

    #[error("block structure violation: {0}")]
    BlockStructure(String),

    #[error("degenerate sweep grid: {0}")]
    DegenerateGrid(String),

    #[error("observed value exceeds the quantum bound by {excess:.3e}; input is corrupt")]
    BoundExceeded { excess: f64 },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for BellError {
    fn from(e: std::io::Error) -> Self {
        BellError::Io(e.to_string())
    }
}
