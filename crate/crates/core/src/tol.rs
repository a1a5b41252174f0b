//! Centralized numerical tolerances.
//!
//! Every Hermiticity, positivity and convergence threshold used across the
//! crate lives here so that modules cannot drift apart.

/// Maximum allowed `|M[i][j] - conj(M[j][i])|` for a matrix flagged Hermitian.
pub const HERM_TOL: f64 = 1e-12;

/// Eigenvalues above `-PSD_TOL` count as nonnegative for state and effect
/// positivity checks.
pub const PSD_TOL: f64 = 1e-9;

/// Choi eigenvalue threshold for the CP verdict of intermediate maps.
/// Looser than [`PSD_TOL`] because intermediate maps inherit inversion noise.
pub const CP_TOL: f64 = 1e-7;

/// Trace-one tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-10;

/// Probability-sum tolerance for distributions.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Measurement outcomes below this probability are flagged and excluded from
/// guessing-probability objectives.
pub const ZERO_PROB_TOL: f64 = 1e-12;

/// Default certified duality-gap target for discrimination and A-step solves.
pub const GAP_TOL: f64 = 1e-7;

/// Entrywise tolerance on `sum of effects - I` for a valid POVM.
pub const POVM_SUM_TOL: f64 = 1e-9;

/// Superoperator condition numbers at or above this are reported as
/// non-invertible rather than inverted.
pub const INVERSION_COND_LIMIT: f64 = 1e8;

/// Significance threshold on a correlation increment before it counts as a
/// backflow; tied to 3x the solver gap target.
pub const DELTA_C_TOL: f64 = 3e-7;
