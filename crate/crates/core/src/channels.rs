//! Quantum channels and divisibility diagnostics.
//!
//! A [`QuantumChannel`] carries three mutually consistent representations:
//! a Kraus list (when one exists), the unnormalized Choi matrix
//! `C = sum_{ij} |i><j| (x) L(|i><j|)` and the superoperator acting on
//! column-vectorized operators. The unnormalized Choi convention makes
//! `Tr_out C = I_in` the trace-preservation test with no scale factor.
//!
//! Intermediate maps `V(t, t') = L(t, t0) L(t', t0)^{-1}` are generally not
//! CP; they are represented with the same struct, a recorded minimum Choi
//! eigenvalue and trace-preservation defect, and an inversion condition
//! number that separates "invertible" from "indeterminate".

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{condition_1norm, inverse, kron, partial_trace, CMatrix};
use crate::quantum::{DensityMatrix, RngStream};
use crate::tol::{CP_TOL, INVERSION_COND_LIMIT, PSD_TOL};

/// Which side of the tensor product the ancilla identity sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AncillaSide {
    /// `I_anc (x) channel`
    Left,
    /// `channel (x) I_anc`
    Right,
}

/// Trace-preserving linear map with all representations populated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumChannel {
    dim_in: usize,
    dim_out: usize,
    kraus: Option<Vec<CMatrix>>,
    choi: CMatrix,
    superop: CMatrix,
    cp: bool,
}

/// Column-major vectorization index: entry `(row, col)` of a `d x d`
/// operator lands at `col * d + row`.
#[inline]
fn vec_index(row: usize, col: usize, d: usize) -> usize {
    col * d + row
}

impl QuantumChannel {
    /// Build from a Kraus list; requires `sum K† K = I` within 1e-9.
    pub fn from_kraus(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or(Error::NonTracePreserving(f64::INFINITY))?;
        let dim_out = first.rows();
        let dim_in = first.cols();
        let mut sum = CMatrix::zeros(dim_in, dim_in);
        for k in &kraus {
            sum = sum.add(&k.adjoint().matmul(k));
        }
        let defect = sum.sub(&CMatrix::identity(dim_in)).max_abs();
        if defect > 1e-9 {
            return Err(Error::NonTracePreserving(defect));
        }

        let mut superop = CMatrix::zeros(dim_in * dim_out, dim_in * dim_out);
        for k in &kraus {
            superop = superop.add(&kron(&k.conj(), k));
        }
        let choi = choi_from_kraus(&kraus, dim_in, dim_out);
        Ok(Self {
            dim_in,
            dim_out,
            kraus: Some(kraus),
            choi,
            superop,
            cp: true,
        })
    }

    /// Build from an unnormalized Choi matrix. A Kraus list is extracted
    /// when the Choi is PSD; trace preservation is enforced.
    pub fn from_choi(choi: CMatrix, dim_in: usize, dim_out: usize) -> Result<Self> {
        let ch = Self::from_choi_relaxed(choi, dim_in, dim_out)?;
        let defect = ch.tp_defect();
        if defect > 1e-9 {
            return Err(Error::NonTracePreserving(defect));
        }
        Ok(ch)
    }

    fn from_choi_relaxed(choi: CMatrix, dim_in: usize, dim_out: usize) -> Result<Self> {
        if choi.rows() != dim_in * dim_out || !choi.is_square() {
            return Err(Error::DimensionMismatch {
                expected: dim_in * dim_out,
                got: choi.rows(),
            });
        }
        let superop = superop_from_choi(&choi, dim_in, dim_out);
        let min_eig = choi.min_eig()?;
        let cp = min_eig >= -PSD_TOL;
        let kraus = if cp {
            Some(kraus_from_choi(&choi, dim_in, dim_out)?)
        } else {
            None
        };
        Ok(Self {
            dim_in,
            dim_out,
            kraus,
            choi,
            superop,
            cp,
        })
    }

    /// Build from a superoperator on column-vectorized operators.
    pub fn from_superop(superop: CMatrix, dim_in: usize, dim_out: usize) -> Result<Self> {
        let ch = Self::from_superop_relaxed(superop, dim_in, dim_out)?;
        let defect = ch.tp_defect();
        if defect > 1e-9 {
            return Err(Error::NonTracePreserving(defect));
        }
        Ok(ch)
    }

    /// Same as [`from_superop`](Self::from_superop) but without the
    /// trace-preservation gate; used for intermediate maps where the defect
    /// is recorded instead of enforced.
    pub fn from_superop_relaxed(
        superop: CMatrix,
        dim_in: usize,
        dim_out: usize,
    ) -> Result<Self> {
        if superop.rows() != dim_in * dim_out || !superop.is_square() {
            return Err(Error::DimensionMismatch {
                expected: dim_in * dim_out,
                got: superop.rows(),
            });
        }
        let choi = choi_from_superop(&superop, dim_in, dim_out);
        let min_eig = choi.min_eig()?;
        let cp = min_eig >= -PSD_TOL;
        let kraus = if cp {
            Some(kraus_from_choi(&choi, dim_in, dim_out)?)
        } else {
            None
        };
        Ok(Self {
            dim_in,
            dim_out,
            kraus,
            choi,
            superop,
            cp,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_kraus(vec![CMatrix::identity(dim)]).expect("identity is CPTP")
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn kraus(&self) -> Option<&[CMatrix]> {
        self.kraus.as_deref()
    }

    pub fn choi(&self) -> &CMatrix {
        &self.choi
    }

    pub fn superop(&self) -> &CMatrix {
        &self.superop
    }

    /// CP flag fixed at construction from the Choi spectrum.
    pub fn is_cp(&self) -> bool {
        self.cp
    }

    pub fn min_choi_eig(&self) -> f64 {
        self.choi.min_eig().expect("Choi is square")
    }

    /// Entrywise defect of `Tr_out(choi) - I_in`.
    pub fn tp_defect(&self) -> f64 {
        let tr_out = partial_trace(&self.choi, &[self.dim_in, self.dim_out], &[0])
            .expect("choi dims fixed at construction");
        tr_out.sub(&CMatrix::identity(self.dim_in)).max_abs()
    }

    /// Apply to an arbitrary operator (Kraus path when available).
    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        assert_eq!(x.rows(), self.dim_in, "operator dimension mismatch");
        if let Some(kraus) = &self.kraus {
            let mut out = CMatrix::zeros(self.dim_out, self.dim_out);
            for k in kraus {
                out = out.add(&k.matmul(x).matmul(&k.adjoint()));
            }
            return out;
        }
        self.apply_via_superop(x)
    }

    /// Apply through the superoperator representation.
    pub fn apply_via_superop(&self, x: &CMatrix) -> CMatrix {
        let d_in = self.dim_in;
        let d_out = self.dim_out;
        let mut vec_x = vec![Complex64::new(0.0, 0.0); d_in * d_in];
        for i in 0..d_in {
            for j in 0..d_in {
                vec_x[vec_index(i, j, d_in)] = x[(i, j)];
            }
        }
        let mut vec_y = vec![Complex64::new(0.0, 0.0); d_out * d_out];
        for (r, y) in vec_y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, vx) in vec_x.iter().enumerate() {
                acc += self.superop[(r, c)] * *vx;
            }
            *y = acc;
        }
        CMatrix::from_fn(d_out, d_out, |m, n| vec_y[vec_index(m, n, d_out)])
    }

    /// Apply through the Choi representation:
    /// `L(X)_{mn} = sum_{ij} X_{ij} C[(i,m),(j,n)]`.
    pub fn apply_via_choi(&self, x: &CMatrix) -> CMatrix {
        let d_out = self.dim_out;
        CMatrix::from_fn(d_out, d_out, |m, n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..self.dim_in {
                for j in 0..self.dim_in {
                    acc += x[(i, j)] * self.choi[(i * d_out + m, j * d_out + n)];
                }
            }
            acc
        })
    }

    /// Apply to a density matrix, revalidating the output.
    pub fn apply_state(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim_in {
            return Err(Error::DimensionMismatch {
                expected: self.dim_in,
                got: rho.dim(),
            });
        }
        DensityMatrix::new(self.apply(rho.matrix()).hermitize())
    }

    /// Composition `later ∘ earlier` (superoperator product). Kraus is
    /// populated only when both factors carry a Kraus list.
    pub fn compose(later: &Self, earlier: &Self) -> Result<Self> {
        if earlier.dim_out != later.dim_in {
            return Err(Error::DimensionMismatch {
                expected: later.dim_in,
                got: earlier.dim_out,
            });
        }
        let superop = later.superop.matmul(&earlier.superop);
        if let (Some(kl), Some(ke)) = (&later.kraus, &earlier.kraus) {
            let kraus: Vec<CMatrix> = kl
                .iter()
                .flat_map(|a| ke.iter().map(move |b| a.matmul(b)))
                .collect();
            let choi = choi_from_kraus(&kraus, earlier.dim_in, later.dim_out);
            let min_eig = choi.min_eig()?;
            Ok(Self {
                dim_in: earlier.dim_in,
                dim_out: later.dim_out,
                kraus: Some(kraus),
                choi,
                superop,
                cp: min_eig >= -PSD_TOL,
            })
        } else {
            Self::from_superop_relaxed(superop, earlier.dim_in, later.dim_out)
        }
    }

    /// Channel on the enlarged space acting as `self` on one factor and as
    /// the identity on an ancilla of dimension `anc_dim`.
    pub fn tensor_with_identity(&self, anc_dim: usize, side: AncillaSide) -> Result<Self> {
        if anc_dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if anc_dim == 1 {
            return Ok(self.clone());
        }
        let id = CMatrix::identity(anc_dim);
        if let Some(kraus) = &self.kraus {
            let lifted: Vec<CMatrix> = kraus
                .iter()
                .map(|k| match side {
                    AncillaSide::Left => kron(&id, k),
                    AncillaSide::Right => kron(k, &id),
                })
                .collect();
            return Self::from_kraus(lifted);
        }
        // Non-CP map: build the lifted superoperator by acting on a basis.
        let (d_l, d_r) = match side {
            AncillaSide::Left => (anc_dim, 1),
            AncillaSide::Right => (1, anc_dim),
        };
        let d_total = self.dim_in * anc_dim;
        let dim2 = d_total * d_total;
        let mut superop = CMatrix::zeros(dim2, dim2);
        for i in 0..d_total {
            for j in 0..d_total {
                let mut basis = CMatrix::zeros(d_total, d_total);
                basis[(i, j)] = Complex64::new(1.0, 0.0);
                let out = apply_on_middle_factor(self, &basis, d_l, d_r);
                let col = vec_index(i, j, d_total);
                for m in 0..d_total {
                    for n in 0..d_total {
                        superop[(vec_index(m, n, d_total), col)] = out[(m, n)];
                    }
                }
            }
        }
        Self::from_superop_relaxed(superop, d_total, d_total)
    }
}

/// Apply a map to the middle factor of `H_left (x) H_mid (x) H_right`.
pub fn apply_on_middle_factor(
    ch: &QuantumChannel,
    x: &CMatrix,
    d_left: usize,
    d_right: usize,
) -> CMatrix {
    let d_mid = ch.dim_in();
    let d_total = d_left * d_mid * d_right;
    assert_eq!(x.rows(), d_total);
    if let Some(kraus) = ch.kraus() {
        let id_l = CMatrix::identity(d_left);
        let id_r = CMatrix::identity(d_right);
        let mut out = CMatrix::zeros(d_total, d_total);
        for k in kraus {
            let lifted = kron(&kron(&id_l, k), &id_r);
            out = out.add(&lifted.matmul(x).matmul(&lifted.adjoint()));
        }
        return out;
    }
    let s = ch.superop();
    let idx = |l: usize, m: usize, r: usize| (l * d_mid + m) * d_right + r;
    let mut out = CMatrix::zeros(d_total, d_total);
    for l in 0..d_left {
        for lp in 0..d_left {
            for r in 0..d_right {
                for rp in 0..d_right {
                    for m in 0..d_mid {
                        for n in 0..d_mid {
                            let mut acc = Complex64::new(0.0, 0.0);
                            for i in 0..d_mid {
                                for j in 0..d_mid {
                                    acc += s[(vec_index(m, n, d_mid), vec_index(i, j, d_mid))]
                                        * x[(idx(l, i, r), idx(lp, j, rp))];
                                }
                            }
                            out[(idx(l, m, r), idx(lp, n, rp))] = acc;
                        }
                    }
                }
            }
        }
    }
    out
}

fn choi_from_kraus(kraus: &[CMatrix], dim_in: usize, dim_out: usize) -> CMatrix {
    let mut choi = CMatrix::zeros(dim_in * dim_out, dim_in * dim_out);
    for k in kraus {
        // |v> = sum_i |i> (x) K|i>, C += |v><v|.
        let mut v = vec![Complex64::new(0.0, 0.0); dim_in * dim_out];
        for i in 0..dim_in {
            for m in 0..dim_out {
                v[i * dim_out + m] = k[(m, i)];
            }
        }
        choi = choi.add(&CMatrix::outer(&v));
    }
    choi
}

fn superop_from_choi(choi: &CMatrix, dim_in: usize, dim_out: usize) -> CMatrix {
    let mut s = CMatrix::zeros(dim_in * dim_out, dim_in * dim_out);
    for m in 0..dim_out {
        for n in 0..dim_out {
            for i in 0..dim_in {
                for j in 0..dim_in {
                    s[(vec_index(m, n, dim_out), vec_index(i, j, dim_in))] =
                        choi[(i * dim_out + m, j * dim_out + n)];
                }
            }
        }
    }
    s
}

fn choi_from_superop(superop: &CMatrix, dim_in: usize, dim_out: usize) -> CMatrix {
    let mut c = CMatrix::zeros(dim_in * dim_out, dim_in * dim_out);
    for m in 0..dim_out {
        for n in 0..dim_out {
            for i in 0..dim_in {
                for j in 0..dim_in {
                    c[(i * dim_out + m, j * dim_out + n)] =
                        superop[(vec_index(m, n, dim_out), vec_index(i, j, dim_in))];
                }
            }
        }
    }
    c
}

/// Kraus operators from a PSD Choi matrix via its eigendecomposition.
fn kraus_from_choi(choi: &CMatrix, dim_in: usize, dim_out: usize) -> Result<Vec<CMatrix>> {
    let decomp = crate::numkernel::herm_eig(&choi.hermitize())?;
    let top = decomp.values.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = top * 1e-14;
    let mut kraus = Vec::new();
    for (k, &lam) in decomp.values.iter().enumerate() {
        if lam <= cutoff {
            continue;
        }
        let scale = lam.sqrt();
        let op = CMatrix::from_fn(dim_out, dim_in, |m, i| {
            decomp.vectors[(i * dim_out + m, k)] * scale
        });
        kraus.push(op);
    }
    if kraus.is_empty() {
        kraus.push(CMatrix::zeros(dim_out, dim_in));
    }
    Ok(kraus)
}

/// Intermediate map `V(t_late, t_early)` of a trajectory, with diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntermediateMap {
    pub map: QuantumChannel,
    pub min_choi_eig: f64,
    pub tp_defect: f64,
    pub inversion_condition: f64,
}

impl IntermediateMap {
    /// `V = later ∘ earlier^{-1}` on the superoperator level. Fails with
    /// [`Error::NonInvertible`] when the earlier map's condition number
    /// reaches [`INVERSION_COND_LIMIT`].
    pub fn between(earlier: &QuantumChannel, later: &QuantumChannel) -> Result<Self> {
        let condition = condition_1norm(earlier.superop());
        if !condition.is_finite() || condition >= INVERSION_COND_LIMIT {
            return Err(Error::NonInvertible { condition });
        }
        let inv = inverse(earlier.superop())?;
        let superop = later.superop().matmul(&inv);
        let map = QuantumChannel::from_superop_relaxed(
            superop,
            later.dim_in(),
            later.dim_out(),
        )?;
        let min_choi_eig = map.min_choi_eig();
        let tp_defect = map.tp_defect();
        Ok(Self {
            map,
            min_choi_eig,
            tp_defect,
            inversion_condition: condition,
        })
    }

    /// CP verdict at the scan tolerance.
    pub fn is_cp(&self) -> bool {
        self.min_choi_eig >= -CP_TOL
    }

    /// Sampled positivity heuristic: applies the map to random pure states
    /// and checks output positivity. Advisory only — never a P-divisibility
    /// decision.
    pub fn p_positivity_sampled(&self, n_samples: usize, seed: u64) -> bool {
        let mut rng = RngStream::from_seed(seed);
        let d = self.map.dim_in();
        for _ in 0..n_samples {
            let ket = crate::quantum::random_ket(d, &mut rng);
            let proj = CMatrix::outer(&ket);
            let out = self.map.apply(&proj).hermitize();
            if out.min_eig().unwrap_or(f64::NEG_INFINITY) < -CP_TOL {
                return false;
            }
        }
        true
    }
}

/// One step of a CP-divisibility scan. `None` fields mean the step was
/// indeterminate (earlier map not invertible).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivisibilityStep {
    pub t_start: f64,
    pub t_end: f64,
    pub min_choi_eig: Option<f64>,
    pub tp_defect: Option<f64>,
    pub inversion_condition: f64,
    pub cp_flag: Option<bool>,
}

/// Per-step CP flags over the consecutive pairs of a trajectory's grid.
pub fn cp_divisibility_scan(traj: &crate::dynamics::Trajectory) -> Vec<DivisibilityStep> {
    let pairs: Vec<usize> = (0..traj.grid.len().saturating_sub(1)).collect();
    pairs
        .par_iter()
        .map(|&k| {
            let t_start = traj.grid[k];
            let t_end = traj.grid[k + 1];
            match IntermediateMap::between(&traj.channels[k], &traj.channels[k + 1]) {
                Ok(im) => DivisibilityStep {
                    t_start,
                    t_end,
                    min_choi_eig: Some(im.min_choi_eig),
                    tp_defect: Some(im.tp_defect),
                    inversion_condition: im.inversion_condition,
                    cp_flag: Some(im.is_cp()),
                },
                Err(Error::NonInvertible { condition }) => DivisibilityStep {
                    t_start,
                    t_end,
                    min_choi_eig: None,
                    tp_defect: None,
                    inversion_condition: condition,
                    cp_flag: None,
                },
                Err(e) => panic!("unexpected intermediate-map failure: {e}"),
            }
        })
        .collect()
}
