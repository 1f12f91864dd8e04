use thiserror::Error;

/// Errors raised by constructors and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OtError {
    #[error("negative mass {value} at index {index}")]
    NegativeMass { index: usize, value: f64 },
    #[error("total mass must be positive (got {total})")]
    ZeroTotalMass { total: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("reference plan has zero mass at ({row}, {col}) where the plan is positive")]
    UnsupportedReference { row: usize, col: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("kernel scaling underflowed at iteration {iteration}; epsilon is too small for the plain-domain solver")]
    NumericalUnderflow { iteration: usize },
    #[error("non-finite iterate at iteration {iteration}")]
    NumericalFailure { iteration: usize },
    #[error("trace has too few usable records ({usable}) for a rate fit")]
    InsufficientTrace { usable: usize },
    #[error("simplex exceeded {limit} pivots")]
    CycleLimit { limit: usize },
    #[error("problem too large for enumeration: {cells} cells (max {max})")]
    TooLarge { cells: usize, max: usize },
    #[error("plan is infeasible: marginal violation {violation} exceeds {tol}")]
    InfeasiblePlan { violation: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, OtError>;
