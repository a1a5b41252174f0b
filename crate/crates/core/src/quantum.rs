//! States, ensembles, POVMs and measurement-induced output ensembles.

use num_complex::Complex64;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{kron, partial_trace, CMatrix};
use crate::tol::{HERM_TOL, POVM_SUM_TOL, PROB_SUM_TOL, PSD_TOL, TRACE_TOL, ZERO_PROB_TOL};

/// Deterministic, splittable stream of random draws.
///
/// ChaCha is counter-based, so a `(seed, stream)` pair pins every draw
/// regardless of thread scheduling; reports record the seed they used.
#[derive(Debug, Clone)]
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent child stream; deterministic in `(seed, stream)`.
    pub fn split(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn complex_normal(&mut self) -> Complex64 {
        Complex64::new(self.normal(), self.normal()).scale(std::f64::consts::FRAC_1_SQRT_2)
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    /// Ginibre rectangular matrix with iid standard complex normal entries.
    pub fn ginibre(&mut self, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| self.complex_normal())
    }
}

/// Unit-trace positive-semidefinite Hermitian operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validate trace one, Hermiticity and positivity.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidDensityMatrix(format!(
                "not square: {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let defect = matrix.herm_defect();
        if defect > HERM_TOL.max(1e-11 * matrix.max_abs().max(1.0)) {
            return Err(Error::InvalidDensityMatrix(format!(
                "not Hermitian, defect {defect:.3e}"
            )));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "trace {} instead of 1",
                tr.re
            )));
        }
        let min = matrix.min_eig()?;
        if min < -PSD_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "min eigenvalue {min:.3e}"
            )));
        }
        Ok(Self {
            matrix: matrix.hermitize(),
        })
    }

    /// Pure state |psi><psi| from a state vector (normalized internally).
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidDensityMatrix("zero vector".into()));
        }
        let scaled: Vec<Complex64> = psi.iter().map(|a| a / norm).collect();
        Self::new(CMatrix::outer(&scaled))
    }

    /// Computational basis state |k><k|.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = Complex64::new(1.0, 0.0);
        Self { matrix: m }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim).scale_re(1.0 / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn purity(&self) -> f64 {
        self.matrix.matmul(&self.matrix).trace().re
    }

    /// Tensor product with another state.
    pub fn tensor(&self, other: &Self) -> Self {
        Self {
            matrix: kron(&self.matrix, &other.matrix),
        }
    }

    /// Reduced state on the kept factors.
    pub fn reduce(&self, dims: &[usize], keep: &[usize]) -> Result<Self> {
        Ok(Self {
            matrix: partial_trace(&self.matrix, dims, keep)?.hermitize(),
        })
    }
}

/// Finite probability distribution with strictly positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityDistribution {
    weights: Vec<f64>,
}

impl ProbabilityDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if weights.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be strictly positive".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "sum {sum} differs from 1 by more than {PROB_SUM_TOL:.0e}"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }
}

/// Probability distribution paired with same-dimension states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    probs: ProbabilityDistribution,
    states: Vec<DensityMatrix>,
}

impl Ensemble {
    pub fn new(probs: ProbabilityDistribution, states: Vec<DensityMatrix>) -> Result<Self> {
        if probs.len() != states.len() {
            return Err(Error::InvalidEnsemble(format!(
                "{} probabilities for {} states",
                probs.len(),
                states.len()
            )));
        }
        if let Some(first) = states.first() {
            if states.iter().any(|s| s.dim() != first.dim()) {
                return Err(Error::InvalidEnsemble("states of mixed dimension".into()));
            }
        }
        Ok(Self { probs, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map(|s| s.dim()).unwrap_or(0)
    }

    pub fn probs(&self) -> &ProbabilityDistribution {
        &self.probs
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    /// Average state `sum_i p_i rho_i`.
    pub fn average_state(&self) -> CMatrix {
        let mut acc = CMatrix::zeros(self.dim(), self.dim());
        for (p, s) in self.probs.weights().iter().zip(&self.states) {
            acc = acc.add(&s.matrix().scale_re(*p));
        }
        acc
    }
}

/// Positive-semidefinite effects summing to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Povm {
    effects: Vec<CMatrix>,
}

impl Povm {
    pub fn new(effects: Vec<CMatrix>) -> Result<Self> {
        let first = effects
            .first()
            .ok_or_else(|| Error::InvalidPovm("no effects".into()))?;
        let dim = first.rows();
        let mut sum = CMatrix::zeros(dim, dim);
        for (k, e) in effects.iter().enumerate() {
            if e.rows() != dim || e.cols() != dim {
                return Err(Error::InvalidPovm(format!("effect {k} has wrong shape")));
            }
            let defect = e.herm_defect();
            if defect > HERM_TOL.max(1e-11 * e.max_abs().max(1.0)) {
                return Err(Error::InvalidPovm(format!(
                    "effect {k} not Hermitian ({defect:.3e})"
                )));
            }
            let min = e.min_eig()?;
            if min < -PSD_TOL {
                return Err(Error::InvalidPovm(format!(
                    "effect {k} has eigenvalue {min:.3e}"
                )));
            }
            sum = sum.add(e);
        }
        let defect = sum.sub(&CMatrix::identity(dim)).max_abs();
        if defect > POVM_SUM_TOL {
            return Err(Error::InvalidPovm(format!(
                "effects sum to identity with defect {defect:.3e}"
            )));
        }
        Ok(Self { effects })
    }

    /// Projective measurement in the computational basis.
    pub fn projective(dim: usize) -> Self {
        let effects = (0..dim)
            .map(|k| {
                let mut m = CMatrix::zeros(dim, dim);
                m[(k, k)] = Complex64::new(1.0, 0.0);
                m
            })
            .collect();
        Self { effects }
    }

    /// Single-effect trivial measurement {I}.
    pub fn trivial(dim: usize) -> Self {
        Self {
            effects: vec![CMatrix::identity(dim)],
        }
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].rows()
    }

    pub fn effects(&self) -> &[CMatrix] {
        &self.effects
    }
}

/// Output ensemble of a measurement on subsystem A of a bipartite state.
///
/// Outcomes with probability below [`ZERO_PROB_TOL`] carry a maximally mixed
/// placeholder state and are flagged; they contribute nothing to guessing
/// probabilities and are dropped by [`MeasuredEnsemble::effective`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredEnsemble {
    pub probs: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub negligible: Vec<bool>,
}

impl MeasuredEnsemble {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Strictly positive sub-ensemble; the dropped mass (at most
    /// `n * ZERO_PROB_TOL`) is renormalized away. Also returns the original
    /// outcome index of every kept state.
    pub fn effective(&self) -> Result<(Ensemble, Vec<usize>)> {
        let mut probs = Vec::new();
        let mut states = Vec::new();
        let mut index = Vec::new();
        for (k, (&p, flag)) in self.probs.iter().zip(&self.negligible).enumerate() {
            if !*flag {
                probs.push(p);
                states.push(self.states[k].clone());
                index.push(k);
            }
        }
        if probs.is_empty() {
            return Err(Error::InvalidEnsemble(
                "all outcomes negligible".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let ens = Ensemble::new(ProbabilityDistribution::new(probs)?, states)?;
        Ok((ens, index))
    }
}

/// Output probability distribution and output states of measuring subsystem
/// A of `rho_ab` with `povm_a`: `p_i = Tr[rho (P_i (x) I)]` and
/// `rho_{B,i} = Tr_A[rho (P_i (x) I)] / p_i`.
pub fn measure_ensemble(
    rho_ab: &DensityMatrix,
    dims: (usize, usize),
    povm_a: &Povm,
) -> Result<MeasuredEnsemble> {
    let (d_a, d_b) = dims;
    if d_a * d_b != rho_ab.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho_ab.dim(),
            got: d_a * d_b,
        });
    }
    if povm_a.dim() != d_a {
        return Err(Error::DimensionMismatch {
            expected: d_a,
            got: povm_a.dim(),
        });
    }
    let id_b = CMatrix::identity(d_b);
    let mut probs = Vec::with_capacity(povm_a.len());
    let mut states = Vec::with_capacity(povm_a.len());
    let mut negligible = Vec::with_capacity(povm_a.len());
    for effect in povm_a.effects() {
        let weighted = rho_ab.matrix().matmul(&kron(effect, &id_b));
        let p = weighted.trace().re;
        let conditional = partial_trace(&weighted, &[d_a, d_b], &[1])?;
        if p < ZERO_PROB_TOL {
            probs.push(p.max(0.0));
            states.push(DensityMatrix::maximally_mixed(d_b));
            negligible.push(true);
        } else {
            probs.push(p);
            states.push(DensityMatrix::new(
                conditional.hermitize().scale_re(1.0 / p),
            )?);
            negligible.push(false);
        }
    }
    Ok(MeasuredEnsemble {
        probs,
        states,
        negligible,
    })
}

/// Ginibre-induced random density matrix of the given rank.
pub fn random_state(dim: usize, rank: usize, seed: u64) -> Result<DensityMatrix> {
    if rank == 0 || rank > dim {
        return Err(Error::InvalidDensityMatrix(format!(
            "rank {rank} out of range for dim {dim}"
        )));
    }
    let mut rng = RngStream::from_seed(seed);
    random_state_with(dim, rank, &mut rng)
}

/// Rank-`rank` Ginibre state drawn from an existing stream.
pub fn random_state_with(dim: usize, rank: usize, rng: &mut RngStream) -> Result<DensityMatrix> {
    let g = rng.ginibre(dim, rank);
    let gram = g.matmul(&g.adjoint()).hermitize();
    let tr = gram.trace().re;
    DensityMatrix::new(gram.scale_re(1.0 / tr))
}

/// Random POVM from normalized Ginibre positive matrices:
/// `E_i = S^{-1/2} G_i S^{-1/2}` with `S = sum_i G_i`.
pub fn random_povm(dim: usize, n_outcomes: usize, seed: u64) -> Result<Povm> {
    let mut rng = RngStream::from_seed(seed);
    random_povm_with(dim, n_outcomes, &mut rng)
}

pub fn random_povm_with(dim: usize, n_outcomes: usize, rng: &mut RngStream) -> Result<Povm> {
    if n_outcomes == 0 {
        return Err(Error::InvalidPovm("need at least one outcome".into()));
    }
    if n_outcomes == 1 {
        return Ok(Povm::trivial(dim));
    }
    let gs: Vec<CMatrix> = (0..n_outcomes)
        .map(|_| {
            let a = rng.ginibre(dim, dim);
            a.matmul(&a.adjoint()).hermitize()
        })
        .collect();
    let mut s = CMatrix::zeros(dim, dim);
    for g in &gs {
        s = s.add(g);
    }
    let isqrt = s.inv_sqrt_psd(1e-14)?;
    let effects: Vec<CMatrix> = gs
        .iter()
        .map(|g| isqrt.matmul(g).matmul(&isqrt).hermitize())
        .collect();
    Povm::new(effects)
}

/// Random probability distribution with a floor keeping weights bounded
/// away from zero.
pub fn random_distribution(n: usize, floor: f64, rng: &mut RngStream) -> ProbabilityDistribution {
    let raw: Vec<f64> = (0..n).map(|_| rng.uniform() + floor).collect();
    let sum: f64 = raw.iter().sum();
    ProbabilityDistribution::new(raw.into_iter().map(|w| w / sum).collect())
        .expect("positive weights sum to one")
}

/// Random pure state vector.
pub fn random_ket(dim: usize, rng: &mut RngStream) -> Vec<Complex64> {
    let raw: Vec<Complex64> = (0..dim).map(|_| rng.complex_normal()).collect();
    let norm: f64 = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    raw.into_iter().map(|a| a / norm).collect()
}
