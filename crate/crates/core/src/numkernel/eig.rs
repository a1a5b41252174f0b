//! Cyclic Jacobi eigensolver for complex Hermitian matrices.
//!
//! Each off-diagonal element is annihilated by a phase transform that makes
//! it real followed by a classic real Jacobi rotation. Unconditionally
//! stable at the dimensions this crate targets and fully deterministic.

use num_complex::Complex64;

use super::CMatrix;
use crate::error::{Error, Result};
use crate::tol::HERM_TOL;

/// Off-diagonal norm threshold (relative to the Frobenius scale).
const OFF_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Spectral decomposition of a Hermitian matrix.
///
/// `values` are sorted descending; `vectors` holds the matching orthonormal
/// eigenvectors as columns, so `M = V diag(values) V†`.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigDecomposition {
    /// Rebuild `V f(diag) V†` with a function applied to each eigenvalue.
    pub fn reassemble(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let v = &self.vectors;
        let mut out = CMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let flam = f(lam);
            if flam == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * flam;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        out
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// The input must be Hermitian within [`HERM_TOL`] (scaled by the largest
/// entry for matrices far from unit scale); it is symmetrized before
/// iteration so the returned spectrum is exactly real.
pub fn herm_eig(m: &CMatrix) -> Result<EigDecomposition> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let scale = m.max_abs().max(1.0);
    let defect = m.herm_defect();
    if defect > HERM_TOL * scale {
        return Err(Error::NotHermitian(defect));
    }

    let n = m.rows();
    let mut a = m.hermitize();
    let mut v = CMatrix::identity(n);

    if n <= 1 {
        let values = if n == 1 { vec![a[(0, 0)].re] } else { vec![] };
        return Ok(EigDecomposition { values, vectors: v });
    }

    let fro = a.frobenius_norm().max(1.0);
    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)].norm_sqr();
            }
        }
        if (2.0 * off).sqrt() <= OFF_TOL * fro {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let abs_apq = apq.norm();
                if abs_apq <= 1e-300 {
                    continue;
                }
                // Phase that makes the pivot real, then a real rotation.
                let u = apq / abs_apq;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (2.0 * abs_apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // G restricted to the (p,q) plane: [[c, s], [-conj(u) s, conj(u) c]].
                let g11 = Complex64::new(c, 0.0);
                let g12 = Complex64::new(s, 0.0);
                let g21 = -u.conj() * s;
                let g22 = u.conj() * c;

                // A <- A G (columns p, q).
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * g11 + aiq * g21;
                    a[(i, q)] = aip * g12 + aiq * g22;
                }
                // A <- G† A (rows p, q).
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = g11.conj() * apj + g21.conj() * aqj;
                    a[(q, j)] = g12.conj() * apj + g22.conj() * aqj;
                }
                // V <- V G.
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * g11 + viq * g21;
                    v[(i, q)] = vip * g12 + viq * g22;
                }
                // Pivot is annihilated by construction; pin it to zero.
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));

    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(EigDecomposition { values, vectors })
}
