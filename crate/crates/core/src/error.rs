use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum OpError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("grid too coarse: need at least {need} nodes, got {got}")]
    GridTooCoarse { need: usize, got: usize },

    #[error("invalid interval ({a}, {b}): endpoints must satisfy a < b")]
    InvalidInterval { a: f64, b: f64 },

    #[error("coefficient matrix not Hermitian: relative asymmetry {residual:.3e}")]
    NotHermitian { residual: f64 },

    #[error("coefficient matrix not positive definite: smallest eigenvalue {min_eig:.3e}")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("boundary operator not unitary: residual {residual:.3e}")]
    NotUnitary { residual: f64 },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("unknown boundary kind '{0}'")]
    UnknownKind(String),

    #[error("boundary encoding singular: condition number {condition:.3e}")]
    BoundaryEncoding { condition: f64 },

    #[error("constraint projection singular: smallest singular value {sigma_min:.3e}")]
    ProjectionSingular { sigma_min: f64 },

    #[error("matrix of size {size} exceeds eigensolver cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("eigensolver did not converge ({converged} of {size} eigenvalues)")]
    NoConvergence { converged: usize, size: usize },

    #[error("block index {index} out of range 1..={count}")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("block ordering violated: block {index} starts at {start} before previous block ends at {prev_end}")]
    Ordering { index: usize, start: f64, prev_end: f64 },

    #[error("reference eigenvalue {reference} not matched within {radius} at m = {m}")]
    Matching { reference: String, radius: f64, m: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, OpError>;
