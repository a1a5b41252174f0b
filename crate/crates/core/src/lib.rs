//! Correlation-backflow witnesses for open quantum system dynamics.
//!
//! The crate is organized bottom-up:
//!
//! - [`numkernel`] — dense complex matrices, Kronecker products, partial
//!   traces, a Jacobi Hermitian eigensolver and LU solves. Everything else
//!   is built on these primitives.
//! - [`quantum`] — density matrices, ensembles, POVMs and the output
//!   ensemble induced by measuring one side of a bipartite state.
//! - [`channels`] — CPTP maps held jointly as Kraus/Choi/superoperator,
//!   intermediate maps `V(t, t')` and CP-divisibility scans.
//! - [`dynamics`] — closed-form time-parametrized qubit channel families
//!   (dephasing, amplitude damping, the eternal random-unitary model,
//!   depolarizing semigroup).
//! - [`discrimination`] — the guessing probability: Helstrom closed form
//!   for two states, certified primal/dual optimization for n states.
//! - [`correlations`] — P-POVM constrained correlation measures and their
//!   seesaw optimization, plus the perpendicular/parallel output-state
//!   decomposition diagnostics.
//! - [`probe`] — flagged probe-state construction, evolution under a
//!   trajectory, the time-grid backflow scan and the witnessing-ensemble
//!   search heuristic.

pub mod channels;
pub mod correlations;
pub mod discrimination;
pub mod dynamics;
pub mod error;
pub mod numkernel;
pub mod probe;
pub mod quantum;
pub mod tol;

pub use channels::{DivisibilityStep, IntermediateMap, QuantumChannel};
pub use correlations::{
    CorrelationOptions, CorrelationResult, PPovmConstraint, PovmDecomposition,
};
pub use discrimination::{DiscriminationResult, SolverOptions};
pub use dynamics::{DynamicsFamily, Trajectory};
pub use error::{Error, Result};
pub use numkernel::CMatrix;
pub use probe::{ProbeDims, ProbeSpec, ScanOptions, WitnessReport};
pub use quantum::{DensityMatrix, Ensemble, Povm, ProbabilityDistribution};
