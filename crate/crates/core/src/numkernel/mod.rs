//! Dense complex linear-algebra primitives.
//!
//! All operators in the crate (states, effects, Choi matrices,
//! superoperators) are [`CMatrix`] values: dense, row-major, `Complex64`
//! entries. Target dimensions stay below ~100, so there are no sparse paths
//! and no BLAS dependency; the eigensolver is a cyclic Jacobi iteration
//! ([`herm_eig`]) and linear solves go through partial-pivot LU
//! ([`LuDecomposition`]).

mod eig;
mod lu;

pub use eig::{herm_eig, EigDecomposition};
pub use lu::{condition_1norm, inverse, solve, LuDecomposition};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol::HERM_TOL;

/// Dense complex matrix, row-major storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl CMatrix {
    /// Build from row-major entries; length must equal `rows * cols`.
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    /// Diagonal matrix from real values.
    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Rank-one projector |v><v| from a (not necessarily normalized) vector.
    pub fn outer(v: &[Complex64]) -> Self {
        let n = v.len();
        Self::from_fn(n, n, |i, j| v[i] * v[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|a| a * c).collect(),
        }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.entries[i * self.cols + k];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let row_b = k * other.cols;
                let row_o = i * other.cols;
                for j in 0..other.cols {
                    out.entries[row_o + j] += a * other.entries[row_b + j];
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|a| a.conj()).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// Re Tr(A† B), the Frobenius inner product restricted to its real part.
    pub fn inner_re(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.cols {
            let s: f64 = (0..self.rows).map(|i| self[(i, j)].norm()).sum();
            best = best.max(s);
        }
        best
    }

    /// Max `|M[i][j] - conj(M[j][i])|` over all pairs; 0 for exactly
    /// Hermitian.
    pub fn herm_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.herm_defect() <= tol
    }

    /// (M + M†)/2.
    pub fn hermitize(&self) -> Self {
        debug_assert!(self.is_square());
        self.add(&self.adjoint()).scale_re(0.5)
    }

    /// Kronecker product; dimensions multiply.
    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Self::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        out[(i * other.rows + k, j * other.cols + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// Minimum eigenvalue of the Hermitian part; symmetrizes first.
    pub fn min_eig(&self) -> Result<f64> {
        let d = herm_eig(&self.hermitize())?;
        Ok(*d.values.last().expect("nonempty spectrum"))
    }

    /// Positive part `M_+ = sum_{lambda > 0} lambda |v><v|` of a Hermitian matrix.
    pub fn positive_part(&self) -> Result<Self> {
        let d = herm_eig(self)?;
        Ok(d.reassemble(|x| x.max(0.0)))
    }

    /// Principal square root of a PSD matrix (negative eigenvalues clipped).
    pub fn sqrt_psd(&self) -> Result<Self> {
        let d = herm_eig(self)?;
        Ok(d.reassemble(|x| x.max(0.0).sqrt()))
    }

    /// Pseudo-inverse square root on the support of a PSD matrix.
    /// Eigenvalues below `cutoff` (relative to the largest) are treated as 0.
    pub fn inv_sqrt_psd(&self, cutoff: f64) -> Result<Self> {
        let d = herm_eig(self)?;
        let top = d.values.first().copied().unwrap_or(0.0).max(0.0);
        let thresh = top * cutoff;
        Ok(d.reassemble(|x| if x > thresh { 1.0 / x.sqrt() } else { 0.0 }))
    }

    /// Projector onto the support of a PSD matrix (same cutoff rule).
    pub fn support_projector(&self, cutoff: f64) -> Result<Self> {
        let d = herm_eig(self)?;
        let top = d.values.first().copied().unwrap_or(0.0).max(0.0);
        let thresh = top * cutoff;
        Ok(d.reassemble(|x| if x > thresh { 1.0 } else { 0.0 }))
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.entries[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[i * self.cols + j]
    }
}

/// Kronecker product of two matrices (free-function form).
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kron(b)
}

/// Partial trace of a square matrix over the subsystems *not* listed in
/// `keep`. `dims` are the factor dimensions in tensor order; their product
/// must equal the matrix dimension. `keep` indices must be strictly
/// increasing. The kept factors stay in their original order.
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let total: usize = dims.iter().product();
    if total != m.rows() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            got: total,
        });
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::Grid(format!("invalid keep set {keep:?}")));
    }

    let keep_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let out_dim: usize = keep_dims.iter().product();
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let traced_total: usize = traced_dims.iter().product();

    // Strides of each factor in the full index.
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }

    let flatten = |kept_idx: usize, traced_idx: usize| -> usize {
        let mut full = 0usize;
        let mut rem = kept_idx;
        for (pos, &k) in keep.iter().enumerate().rev() {
            let d = keep_dims[pos];
            full += (rem % d) * strides[k];
            rem /= d;
        }
        let mut rem = traced_idx;
        for (pos, &k) in traced.iter().enumerate().rev() {
            let d = traced_dims[pos];
            full += (rem % d) * strides[k];
            rem /= d;
        }
        full
    };

    let mut out = CMatrix::zeros(out_dim, out_dim);
    for a in 0..out_dim {
        for b in 0..out_dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..traced_total {
                acc += m[(flatten(a, t), flatten(b, t))];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// Trace norm (sum of singular values). For Hermitian input this is the sum
/// of absolute eigenvalues; otherwise singular values come from `M†M`.
pub fn trace_norm(m: &CMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if m.is_hermitian(HERM_TOL.max(1e-10 * m.max_abs())) {
        let d = herm_eig(&m.hermitize())?;
        Ok(d.values.iter().map(|x| x.abs()).sum())
    } else {
        let gram = m.adjoint().matmul(m);
        let d = herm_eig(&gram.hermitize())?;
        Ok(d.values.iter().map(|x| x.max(0.0).sqrt()).sum())
    }
}
