//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the linear-algebra kernel, quantum objects, channel
/// algebra and the optimizers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (max defect {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("Kraus set is not trace-preserving (defect {0:.3e})")]
    NonTracePreserving(f64),

    #[error("map is not CPTP at t={t}: min Choi eigenvalue {min_eig:.3e}")]
    CptpViolation { t: f64, min_eig: f64 },

    #[error("invalid rate table: {0}")]
    InvalidRate(String),

    #[error("superoperator not invertible (condition number {condition:.3e})")]
    NonInvertible { condition: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("solver failed to converge: gap {gap:.3e} after {iterations} iterations")]
    NoConvergence { gap: f64, iterations: usize },

    #[error("constraint set infeasible: {0}")]
    Infeasible(String),

    #[error("problem size exceeds guard: {0}")]
    SizeGuard(String),
}

pub type Result<T> = std::result::Result<T, Error>;
