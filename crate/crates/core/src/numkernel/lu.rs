//! LU decomposition with partial pivoting for complex matrices.
//!
//! Backs superoperator inversion for intermediate maps, with an explicit
//! condition-number estimate so near-singular dynamical maps surface as a
//! distinct verdict instead of garbage.

use num_complex::Complex64;

use super::CMatrix;
use crate::error::{Error, Result};

/// Packed LU factors of a square matrix with row-pivot record.
#[derive(Debug, Clone)]
pub struct LuDecomposition {
    lu: CMatrix,
    pivots: Vec<usize>,
}

impl LuDecomposition {
    /// Factor `m = P L U`. Fails on exactly singular input.
    pub fn new(m: &CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let n = m.rows();
        let mut lu = m.clone();
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let mut pivot = k;
            let mut best = lu[(k, k)].norm();
            for i in (k + 1)..n {
                let mag = lu[(i, k)].norm();
                if mag > best {
                    best = mag;
                    pivot = i;
                }
            }
            if best == 0.0 {
                return Err(Error::NonInvertible {
                    condition: f64::INFINITY,
                });
            }
            pivots.push(pivot);
            if pivot != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(pivot, j)];
                    lu[(pivot, j)] = tmp;
                }
            }
            let diag = lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu[(i, k)] / diag;
                lu[(i, k)] = factor;
                for j in (k + 1)..n {
                    let sub = factor * lu[(k, j)];
                    lu[(i, j)] -= sub;
                }
            }
        }
        Ok(Self { lu, pivots })
    }

    /// Solve `m x = b` for a single right-hand side (in place on a copy).
    pub fn solve_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // Row interchanges first (the stored L is in final row order), then
        // the triangular solves.
        for k in 0..n {
            x.swap(k, self.pivots[k]);
        }
        for k in 0..n {
            for i in (k + 1)..n {
                let sub = self.lu[(i, k)] * x[k];
                x[i] -= sub;
            }
        }
        for k in (0..n).rev() {
            for j in (k + 1)..n {
                let sub = self.lu[(k, j)] * x[j];
                x[k] -= sub;
            }
            x[k] /= self.lu[(k, k)];
        }
        x
    }
}

/// Solve `a x = b` column by column.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: b.rows(),
        });
    }
    let lu = LuDecomposition::new(a)?;
    let n = a.rows();
    let mut out = CMatrix::zeros(n, b.cols());
    for j in 0..b.cols() {
        let col: Vec<Complex64> = (0..n).map(|i| b[(i, j)]).collect();
        let x = lu.solve_vec(&col);
        for i in 0..n {
            out[(i, j)] = x[i];
        }
    }
    Ok(out)
}

/// Explicit inverse.
pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    solve(a, &CMatrix::identity(a.rows()))
}

/// Condition number estimate `||A||_1 ||A^-1||_1` via the explicit inverse.
/// Returns infinity for singular input.
pub fn condition_1norm(a: &CMatrix) -> f64 {
    match inverse(a) {
        Ok(inv) => a.one_norm() * inv.one_norm(),
        Err(_) => f64::INFINITY,
    }
}
