//! P-POVM constrained correlation measures.
//!
//! For a target distribution `P` and bipartite state `rho_AB`, the measure
//! `C_A^P` is the largest guessing probability of the output ensembles that
//! A can steer on B with POVMs reproducing `P`, minus `p_max`. The outer
//! problem is bilinear in the two POVMs, so it is solved by a seesaw: fixing
//! the A-POVM makes the inner problem a discrimination SDP; fixing the
//! B-POVM makes the A-side problem a linear SDP over the constrained POVM
//! set, solved here with a certified dual barrier. Reported values are
//! certified achievable lower bounds; multi-restart evidence (always
//! including the distinguished projective candidate when it is feasible)
//! stands in for a global certificate of the bilinear outer problem.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrimination::{pg_opt, SolverOptions};
use crate::error::{Error, Result};
use crate::numkernel::{herm_eig, kron, partial_trace, CMatrix, LuDecomposition};
use crate::quantum::{
    measure_ensemble, random_povm_with, DensityMatrix, Ensemble, MeasuredEnsemble, Povm,
    ProbabilityDistribution, RngStream,
};
use crate::tol::GAP_TOL;

/// Membership test data for the set `Pi^P(rho_A)` of P-POVMs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PPovmConstraint {
    pub target: ProbabilityDistribution,
    pub marginal: DensityMatrix,
    pub tol: f64,
}

impl PPovmConstraint {
    pub fn new(target: ProbabilityDistribution, marginal: DensityMatrix) -> Self {
        Self {
            target,
            marginal,
            tol: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }
}

/// Max over outcomes of `|Tr(rho_A P_i) - p_i|`.
pub fn ppovm_defect(povm: &Povm, constraint: &PPovmConstraint) -> f64 {
    povm.effects()
        .iter()
        .zip(constraint.target.weights())
        .map(|(e, &p)| (constraint.marginal.matrix().matmul(e).trace().re - p).abs())
        .fold(0.0, f64::max)
}

/// Whether the POVM reproduces the target distribution on the marginal,
/// together with its worst defect.
pub fn is_ppovm(povm: &Povm, constraint: &PPovmConstraint) -> (bool, f64) {
    if povm.len() != constraint.len() || povm.dim() != constraint.marginal.dim() {
        return (false, f64::INFINITY);
    }
    let defect = ppovm_defect(povm, constraint);
    (defect <= constraint.tol, defect)
}

/// Frobenius-nearest P-POVM by Dykstra alternation between the PSD product
/// cone and the affine set `{sum P_i = I, Tr(rho_A P_i) = p_i}`. The affine
/// set always admits the interior point `{p_i I}`, so the projection is
/// well-posed.
pub fn project_to_ppovm(effects: &[CMatrix], constraint: &PPovmConstraint) -> Result<Povm> {
    let n = constraint.len();
    let dim = constraint.marginal.dim();
    if effects.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: effects.len(),
        });
    }
    let rho = constraint.marginal.matrix();
    let purity = rho.matmul(rho).trace().re;

    // Orthogonal projection onto the affine subspace. The trace constraints
    // sum to the trace of the sum constraint, so the multipliers have one
    // redundant direction; the zero-sum gauge below picks the consistent
    // particular solution.
    let affine = |rs: &[CMatrix]| -> Vec<CMatrix> {
        let mut total = CMatrix::zeros(dim, dim);
        for r in rs {
            total = total.add(r);
        }
        let y = CMatrix::identity(dim).sub(&total).scale_re(1.0 / n as f64);
        let tr_rho_y = rho.matmul(&y).trace().re;
        rs.iter()
            .zip(constraint.target.weights())
            .map(|(r, &p)| {
                let resid = p - rho.matmul(r).trace().re;
                let mu = (resid - tr_rho_y) / purity;
                r.add(&y).add(&rho.scale_re(mu)).hermitize()
            })
            .collect()
    };
    let psd = |rs: &[CMatrix]| -> Result<Vec<CMatrix>> {
        rs.iter()
            .map(|r| Ok(herm_eig(&r.hermitize())?.reassemble(|x| x.max(0.0))))
            .collect()
    };

    // Dykstra ends on the affine step so the sum and trace constraints hold
    // to rounding; the effects are then PSD up to a tail far below PSD_TOL.
    let mut x: Vec<CMatrix> = affine(&effects.iter().map(|e| e.hermitize()).collect::<Vec<_>>());
    let mut p_corr = vec![CMatrix::zeros(dim, dim); n];
    let mut q_corr = vec![CMatrix::zeros(dim, dim); n];
    for _ in 0..30_000 {
        let shifted: Vec<CMatrix> = x.iter().zip(&p_corr).map(|(a, b)| a.add(b)).collect();
        let y = psd(&shifted)?;
        for i in 0..n {
            p_corr[i] = shifted[i].sub(&y[i]);
        }
        let shifted: Vec<CMatrix> = y.iter().zip(&q_corr).map(|(a, b)| a.add(b)).collect();
        let next = affine(&shifted);
        let mut delta = 0.0f64;
        for i in 0..n {
            q_corr[i] = shifted[i].sub(&next[i]);
            delta = delta.max(next[i].sub(&x[i]).max_abs());
        }
        x = next;

        // x lies on the affine set; done once it is also (numerically) PSD.
        let min_eig = x
            .iter()
            .map(|e| e.min_eig().unwrap_or(f64::NEG_INFINITY))
            .fold(f64::INFINITY, f64::min);
        if min_eig >= -5e-14 && delta <= 1e-13 {
            break;
        }
    }
    Povm::new(x)
}

/// Result of one certified A-side linear SDP (see [`opt_a_step`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AStepResult {
    pub povm: Povm,
    pub objective: f64,
    pub dual_y: CMatrix,
    pub dual_mu: Vec<f64>,
    pub dual_objective: f64,
    pub gap: f64,
    pub constraint_defect: f64,
    pub iterations: usize,
}

impl AStepResult {
    /// Max over outcomes of the most negative eigenvalue of
    /// `Y + mu_i rho_A - T_i` (0 when exactly feasible).
    pub fn dual_feasibility_defect(&self, targets: &[CMatrix], rho_a: &CMatrix) -> f64 {
        targets
            .iter()
            .zip(&self.dual_mu)
            .map(|(t_i, &mu)| {
                let s = self.dual_y.add(&rho_a.scale_re(mu)).sub(t_i);
                (-s.min_eig().unwrap_or(f64::NEG_INFINITY)).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

/// Steering operators `T_i = Tr_B[rho_AB (I (x) Q_i)]` of a B-POVM.
pub fn steering_operators(
    rho_ab: &DensityMatrix,
    dims: (usize, usize),
    b_povm: &Povm,
) -> Result<Vec<CMatrix>> {
    let (d_a, d_b) = dims;
    if d_a * d_b != rho_ab.dim() || b_povm.dim() != d_b {
        return Err(Error::DimensionMismatch {
            expected: rho_ab.dim(),
            got: d_a * b_povm.dim(),
        });
    }
    let id_a = CMatrix::identity(d_a);
    b_povm
        .effects()
        .iter()
        .map(|q| {
            let weighted = rho_ab.matrix().matmul(&kron(&id_a, q));
            Ok(partial_trace(&weighted, &[d_a, d_b], &[0])?.hermitize())
        })
        .collect()
}

/// Certified maximum of `sum_i Tr(P_i T_i)` over the P-POVMs on A.
///
/// The dual has variables `(Y, mu)` with `Y + mu_i rho_A - T_i >= 0`; the
/// trace constraints are linearly dependent with the sum constraint, so the
/// multipliers are gauge-fixed to `sum mu_i = 0` and the barrier Newton
/// iteration runs on `d_A^2 + n - 1` real coordinates.
pub fn opt_a_step(
    rho_ab: &DensityMatrix,
    dims: (usize, usize),
    b_povm: &Povm,
    constraint: &PPovmConstraint,
    gap_tol: f64,
) -> Result<AStepResult> {
    let n = constraint.len();
    if b_povm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b_povm.len(),
        });
    }
    let targets = steering_operators(rho_ab, dims, b_povm)?;
    opt_a_step_from_targets(&targets, constraint, gap_tol)
}

/// Same as [`opt_a_step`] but from precomputed steering operators.
pub fn opt_a_step_from_targets(
    targets: &[CMatrix],
    constraint: &PPovmConstraint,
    gap_tol: f64,
) -> Result<AStepResult> {
    let n = constraint.len();
    let dim = constraint.marginal.dim();
    let rho = constraint.marginal.matrix().clone();
    let probs = constraint.target.weights().to_vec();

    // Feasible dual start: mu = 0, Y = (max eig of any T_i + 1) I.
    let mut shift = 0.0f64;
    for t_i in targets {
        shift = shift.max(herm_eig(t_i)?.values.first().copied().unwrap_or(0.0));
    }
    let mut y = CMatrix::identity(dim).scale_re(shift + 1.0);
    let mut mu = vec![0.0f64; n];

    let herm_basis = hermitian_basis(dim);
    let zero_sum = zero_sum_basis(n);
    let n_y = herm_basis.len();
    let n_nu = zero_sum.len();
    let m = n_y + n_nu;

    let slacks = |y: &CMatrix, mu: &[f64]| -> Vec<CMatrix> {
        targets
            .iter()
            .zip(mu)
            .map(|(t_i, &mu_i)| y.add(&rho.scale_re(mu_i)).sub(t_i).hermitize())
            .collect()
    };
    let barrier = |y: &CMatrix, mu: &[f64], t: f64| -> Option<f64> {
        let mut val =
            t * (y.trace().re + mu.iter().zip(&probs).map(|(m0, p)| m0 * p).sum::<f64>());
        for s in slacks(y, mu) {
            let d = herm_eig(&s).ok()?;
            if d.values.last().copied().unwrap_or(0.0) <= 0.0 {
                return None;
            }
            val -= d.values.iter().map(|x| x.ln()).sum::<f64>();
        }
        Some(val)
    };

    let mut t = 1.0f64;
    let t_final = 64.0 * (n * dim) as f64 / gap_tol;
    let mut iterations = 0usize;
    let mut best: Option<(Povm, f64, f64)> = None; // (povm, primal, defect)
    let mut dual_obj;

    loop {
        for _ in 0..80 {
            iterations += 1;
            let s = slacks(&y, &mu);
            let mut invs = Vec::with_capacity(n);
            for s_i in &s {
                let d = herm_eig(s_i)?;
                if d.values.last().copied().unwrap_or(0.0) <= 0.0 {
                    return Err(Error::NoConvergence {
                        gap: f64::INFINITY,
                        iterations,
                    });
                }
                invs.push(d.reassemble(|x| 1.0 / x));
            }
            // Gradient.
            let mut grad_y_mat = CMatrix::identity(dim).scale_re(t);
            for inv in &invs {
                grad_y_mat = grad_y_mat.sub(inv);
            }
            let grad_y_mat = grad_y_mat.hermitize();
            let grad_mu: Vec<f64> = invs
                .iter()
                .zip(&probs)
                .map(|(inv, &p)| t * p - inv.matmul(&rho).trace().re)
                .collect();

            let mut g = vec![0.0f64; m];
            for (a, ea) in herm_basis.iter().enumerate() {
                g[a] = grad_y_mat.inner_re(ea);
            }
            for (b, col) in zero_sum.iter().enumerate() {
                g[n_y + b] = grad_mu.iter().zip(col).map(|(gm, c)| gm * c).sum();
            }

            // Hessian blocks over (Y, nu).
            let mapped: Vec<Vec<CMatrix>> = herm_basis
                .iter()
                .map(|ea| invs.iter().map(|inv| inv.matmul(ea).matmul(inv)).collect())
                .collect();
            let rho_mapped: Vec<CMatrix> = invs
                .iter()
                .map(|inv| inv.matmul(&rho).matmul(inv))
                .collect();
            let mut h = CMatrix::zeros(m, m);
            for a in 0..n_y {
                for b in a..n_y {
                    let acc: f64 = mapped[a]
                        .iter()
                        .map(|ma| ma.inner_re(&herm_basis[b]))
                        .sum();
                    h[(a, b)] = Complex64::new(acc, 0.0);
                    h[(b, a)] = Complex64::new(acc, 0.0);
                }
            }
            for a in 0..n_y {
                for (b, col) in zero_sum.iter().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += col[i] * mapped[a][i].inner_re(&rho);
                    }
                    h[(a, n_y + b)] = Complex64::new(acc, 0.0);
                    h[(n_y + b, a)] = Complex64::new(acc, 0.0);
                }
            }
            let diag_mu: Vec<f64> = rho_mapped.iter().map(|rm| rm.inner_re(&rho)).collect();
            for (a, col_a) in zero_sum.iter().enumerate() {
                for (b, col_b) in zero_sum.iter().enumerate().skip(a) {
                    let acc: f64 = (0..n).map(|i| col_a[i] * col_b[i] * diag_mu[i]).sum();
                    h[(n_y + a, n_y + b)] = Complex64::new(acc, 0.0);
                    h[(n_y + b, n_y + a)] = Complex64::new(acc, 0.0);
                }
            }

            let rhs: Vec<Complex64> = g.iter().map(|&x| Complex64::new(-x, 0.0)).collect();
            let delta = LuDecomposition::new(&h)?.solve_vec(&rhs);
            let decrement_sq: f64 = delta.iter().zip(&g).map(|(c, &gi)| -c.re * gi).sum();
            if decrement_sq <= 1e-16 {
                break;
            }
            let mut delta_y = CMatrix::zeros(dim, dim);
            for (c, e) in delta.iter().take(n_y).zip(&herm_basis) {
                delta_y = delta_y.add(&e.scale_re(c.re));
            }
            let mut delta_mu = vec![0.0f64; n];
            for (b, col) in zero_sum.iter().enumerate() {
                for i in 0..n {
                    delta_mu[i] += delta[n_y + b].re * col[i];
                }
            }

            let f_cur = barrier(&y, &mu, t).ok_or(Error::NoConvergence {
                gap: f64::INFINITY,
                iterations,
            })?;
            let mut alpha = 1.0f64;
            let mut accepted = false;
            for _ in 0..60 {
                let cand_y = y.add(&delta_y.scale_re(alpha)).hermitize();
                let cand_mu: Vec<f64> = mu
                    .iter()
                    .zip(&delta_mu)
                    .map(|(m0, d)| m0 + alpha * d)
                    .collect();
                if let Some(f_new) = barrier(&cand_y, &cand_mu, t) {
                    if f_new <= f_cur - 0.25 * alpha * decrement_sq {
                        y = cand_y;
                        mu = cand_mu;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }

        dual_obj = y.trace().re + mu.iter().zip(&probs).map(|(m0, p)| m0 * p).sum::<f64>();
        // Primal recovery P_i = (1/t) S_i^{-1}, then exact-sum correction.
        if let Some(povm) = recover_a_povm(&slacks(&y, &mu), dim, t) {
            let objective: f64 = povm
                .effects()
                .iter()
                .zip(targets)
                .map(|(p, t_i)| p.matmul(t_i).trace().re)
                .sum();
            let defect = ppovm_defect(&povm, constraint);
            let better = best
                .as_ref()
                .map(|(_, obj, _)| objective > *obj)
                .unwrap_or(true);
            if better && defect <= constraint.tol {
                best = Some((povm, objective, defect));
            }
        }
        if let Some((_, obj, _)) = &best {
            if dual_obj - obj <= 0.75 * gap_tol {
                break;
            }
        }
        if t >= t_final {
            break;
        }
        t = (t * 8.0).min(t_final);
    }

    let (povm, objective, constraint_defect) = best.ok_or(Error::NoConvergence {
        gap: f64::INFINITY,
        iterations,
    })?;
    let gap = dual_obj - objective;
    if gap > gap_tol {
        return Err(Error::NoConvergence { gap, iterations });
    }
    Ok(AStepResult {
        povm,
        objective,
        dual_y: y,
        dual_mu: mu,
        dual_objective: dual_obj,
        gap,
        constraint_defect,
        iterations,
    })
}

fn recover_a_povm(slacks: &[CMatrix], dim: usize, t: f64) -> Option<Povm> {
    let mut effects = Vec::with_capacity(slacks.len());
    for s in slacks {
        let d = herm_eig(s).ok()?;
        effects.push(d.reassemble(|x| if x > 0.0 { 1.0 / (t * x) } else { 0.0 }));
    }
    let mut total = CMatrix::zeros(dim, dim);
    for e in &effects {
        total = total.add(e);
    }
    let corr = total.hermitize().inv_sqrt_psd(1e-13).ok()?;
    Povm::new(
        effects
            .iter()
            .map(|e| corr.matmul(e).matmul(&corr).hermitize())
            .collect(),
    )
    .ok()
}

/// Orthonormal real basis of Hermitian matrices.
fn hermitian_basis(dim: usize) -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        let mut e = CMatrix::zeros(dim, dim);
        e[(i, i)] = Complex64::new(1.0, 0.0);
        basis.push(e);
    }
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut re = CMatrix::zeros(dim, dim);
            re[(i, j)] = Complex64::new(inv_sqrt2, 0.0);
            re[(j, i)] = Complex64::new(inv_sqrt2, 0.0);
            basis.push(re);
            let mut im = CMatrix::zeros(dim, dim);
            im[(i, j)] = Complex64::new(0.0, inv_sqrt2);
            im[(j, i)] = Complex64::new(0.0, -inv_sqrt2);
            basis.push(im);
        }
    }
    basis
}

/// Orthonormal basis of the zero-sum subspace of R^n (Helmert columns).
fn zero_sum_basis(n: usize) -> Vec<Vec<f64>> {
    let mut basis = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let norm = 1.0 / ((k * (k + 1)) as f64).sqrt();
        let mut v = vec![0.0; n];
        for item in v.iter_mut().take(k) {
            *item = norm;
        }
        v[k] = -(k as f64) * norm;
        basis.push(v);
    }
    basis
}

/// Options for the seesaw optimization of a correlation measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationOptions {
    /// Random P-POVM restarts on top of the deterministic initializations.
    pub n_restarts: usize,
    pub gap_tol: f64,
    pub max_rounds: usize,
    /// Stop a seesaw once a full round gains less than this.
    pub round_gain_tol: f64,
    pub seed: u64,
    /// Additional A-POVM initializations (projected onto the constraint set
    /// if needed); used to transport optimizers across related instances.
    #[serde(skip)]
    pub extra_inits: Vec<Povm>,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        Self {
            n_restarts: 4,
            gap_tol: GAP_TOL,
            max_rounds: 200,
            round_gain_tol: 1e-9,
            seed: 0,
            extra_inits: Vec::new(),
        }
    }
}

impl CorrelationOptions {
    fn solver(&self) -> SolverOptions {
        SolverOptions {
            gap_tol: self.gap_tol,
            ..SolverOptions::default()
        }
    }
}

/// Outcome of a correlation-measure optimization.
///
/// `value = pg_inner - p_max`; `seesaw_trace` lists the best achieved pair
/// objective per round of the winning restart (non-decreasing since every
/// half-step is accepted only on improvement).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub value: f64,
    pub a_povm: Povm,
    pub b_povm: Povm,
    pub pg_inner: f64,
    pub restarts_used: usize,
    pub seesaw_trace: Vec<(usize, f64)>,
    /// Worst certificate slack among the final inner and A-step solves.
    pub gap: f64,
}

/// `C_A^P(rho_AB)`: seesaw maximization of the output-ensemble guessing
/// probability over P-POVMs on A, minus `p_max`.
pub fn c_a_measure(
    rho_ab: &DensityMatrix,
    dims: (usize, usize),
    dist: &ProbabilityDistribution,
    opts: &CorrelationOptions,
) -> Result<CorrelationResult> {
    let (d_a, d_b) = dims;
    if d_a * d_b != rho_ab.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho_ab.dim(),
            got: d_a * d_b,
        });
    }
    let marginal = rho_ab.reduce(&[d_a, d_b], &[0])?;
    let constraint = PPovmConstraint::new(dist.clone(), marginal);
    let inits = build_initializations(&constraint, opts)?;
    let restarts_used = inits.len();

    let runs: Vec<Result<SeesawRun>> = inits
        .into_par_iter()
        .map(|init| seesaw(rho_ab, dims, &constraint, init, opts))
        .collect();
    let mut best: Option<SeesawRun> = None;
    for run in runs {
        let run = run?;
        let better = best
            .as_ref()
            .map(|b| run.objective > b.objective + 1e-15)
            .unwrap_or(true);
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one initialization");
    let p_max = dist.max();
    Ok(CorrelationResult {
        value: best.objective - p_max,
        a_povm: best.a_povm,
        b_povm: best.b_povm,
        pg_inner: best.objective,
        restarts_used,
        seesaw_trace: best.trace,
        gap: best.gap,
    })
}

/// `C_B^P`: mirror image of [`c_a_measure`] with the subsystem roles
/// swapped. The returned `a_povm` measures the B side of the original state.
pub fn c_b_measure(
    rho_ab: &DensityMatrix,
    dims: (usize, usize),
    dist: &ProbabilityDistribution,
    opts: &CorrelationOptions,
) -> Result<CorrelationResult> {
    let swapped = swap_bipartition(rho_ab, dims)?;
    c_a_measure(&swapped, (dims.1, dims.0), dist, opts)
}

/// Which side attained the symmetric measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasuredSide {
    A,
    B,
}

/// `C_AB^P = max(C_A^P, C_B^P)`, recording which side attained it.
pub fn c_ab_measure(
    rho_ab: &DensityMatrix,
    dims: (usize, usize),
    dist: &ProbabilityDistribution,
    opts: &CorrelationOptions,
) -> Result<(CorrelationResult, MeasuredSide)> {
    let a = c_a_measure(rho_ab, dims, dist, opts)?;
    let b = c_b_measure(rho_ab, dims, dist, opts)?;
    if a.value >= b.value {
        Ok((a, MeasuredSide::A))
    } else {
        Ok((b, MeasuredSide::B))
    }
}

/// Exchange the two factors of a bipartite state.
pub fn swap_bipartition(rho_ab: &DensityMatrix, dims: (usize, usize)) -> Result<DensityMatrix> {
    let (d_a, d_b) = dims;
    let d = d_a * d_b;
    if rho_ab.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: rho_ab.dim(),
            got: d,
        });
    }
    let m = rho_ab.matrix();
    let out = CMatrix::from_fn(d, d, |r, c| {
        let (b1, a1) = (r / d_a, r % d_a);
        let (b2, a2) = (c / d_a, c % d_a);
        m[(a1 * d_b + b1, a2 * d_b + b2)]
    });
    DensityMatrix::new(out)
}

struct SeesawRun {
    objective: f64,
    a_povm: Povm,
    b_povm: Povm,
    trace: Vec<(usize, f64)>,
    gap: f64,
}

/// One seesaw from a feasible A-POVM initialization. Half-steps are accepted
/// only when the directly evaluated pair objective improves, so the recorded
/// trace is non-decreasing and every entry is achievable.
fn seesaw(
    rho_ab: &DensityMatrix,
    dims: (usize, usize),
    constraint: &PPovmConstraint,
    init: Povm,
    opts: &CorrelationOptions,
) -> Result<SeesawRun> {
    let solver = opts.solver();
    let mut a_povm = init;
    let mut b_povm: Option<Povm> = None;
    let mut objective = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut gap = 0.0f64;

    for round in 0..opts.max_rounds {
        let round_start = objective;

        // B half-step: discriminate the steered ensemble.
        let measured = measure_ensemble(rho_ab, dims, &a_povm)?;
        let (effective, kept) = measured.effective()?;
        let inner = pg_opt(&effective, &solver)?;
        let candidate_b = expand_b_povm(&measured, &inner.povm, &kept, dims.1)?;
        let val = pair_objective(&measured, &candidate_b);
        if val > objective {
            objective = val;
            b_povm = Some(candidate_b);
            gap = inner.gap;
        }

        // A half-step: certified linear SDP at fixed B-POVM.
        if let Some(b) = &b_povm {
            let step = opt_a_step(rho_ab, dims, b, constraint, opts.gap_tol)?;
            let measured_new = measure_ensemble(rho_ab, dims, &step.povm)?;
            let val = pair_objective(&measured_new, b);
            if val > objective {
                objective = val;
                a_povm = step.povm;
                gap = gap.max(step.gap);
            }
        }

        trace.push((round + 1, objective));
        if round > 0 && objective - round_start < opts.round_gain_tol {
            break;
        }
    }

    let b_povm = b_povm.expect("at least one B half-step ran");
    Ok(SeesawRun {
        objective,
        a_povm,
        b_povm,
        trace,
        gap,
    })
}

/// Directly evaluated pair objective `sum_i p_i Tr(rho_{B,i} Q_i)` over the
/// non-negligible outcomes.
fn pair_objective(measured: &MeasuredEnsemble, b_povm: &Povm) -> f64 {
    measured
        .probs
        .iter()
        .zip(&measured.states)
        .zip(&measured.negligible)
        .zip(b_povm.effects())
        .filter(|(((_, _), flag), _)| !**flag)
        .map(|(((p, s), _), q)| p * s.matrix().matmul(q).trace().re)
        .sum()
}

/// Lift the inner solver's POVM (defined on the kept outcomes) back to the
/// full outcome list; dropped outcomes get zero effects.
fn expand_b_povm(
    measured: &MeasuredEnsemble,
    inner: &Povm,
    kept: &[usize],
    d_b: usize,
) -> Result<Povm> {
    let mut effects = vec![CMatrix::zeros(d_b, d_b); measured.len()];
    for (slot, effect) in kept.iter().zip(inner.effects()) {
        effects[*slot] = effect.clone();
    }
    Povm::new(effects)
}

/// Initialization set for the seesaw: the computational projective
/// measurement whenever it is feasible (diagonal marginal matching the
/// target), the trivial `{p_i I}` P-POVM, a marginal-eigenbasis candidate
/// projected onto the constraint set, any transported extra initializations,
/// and `n_restarts` random projected P-POVMs.
fn build_initializations(
    constraint: &PPovmConstraint,
    opts: &CorrelationOptions,
) -> Result<Vec<Povm>> {
    let n = constraint.len();
    let dim = constraint.marginal.dim();
    let mut inits = Vec::new();

    if let Some(projective) = feasible_projective(constraint) {
        inits.push(projective);
    }

    let trivial = Povm::new(
        constraint
            .target
            .weights()
            .iter()
            .map(|&p| CMatrix::identity(dim).scale_re(p))
            .collect(),
    )?;
    inits.push(trivial);

    if let Ok(spectral) = spectral_candidate(constraint) {
        inits.push(spectral);
    }

    for extra in &opts.extra_inits {
        if extra.len() != n || extra.dim() != dim {
            continue;
        }
        let (ok, _) = is_ppovm(extra, constraint);
        if ok {
            inits.push(extra.clone());
        } else if let Ok(projected) = project_to_ppovm(extra.effects(), constraint) {
            inits.push(projected);
        }
    }

    let base = inits[0].clone();
    for k in 0..opts.n_restarts {
        let mut rng = RngStream::split(opts.seed, k as u64 + 1);
        let eps = 0.2 + 0.6 * rng.uniform();
        let rand = random_povm_with(dim, n, &mut rng)?;
        let blended: Vec<CMatrix> = base
            .effects()
            .iter()
            .zip(rand.effects())
            .map(|(a, b)| a.scale_re(1.0 - eps).add(&b.scale_re(eps)))
            .collect();
        if let Ok(projected) = project_to_ppovm(&blended, constraint) {
            inits.push(projected);
        }
    }
    Ok(inits)
}

/// The computational projective measurement, when it is an exact P-POVM
/// (diagonal marginal whose diagonal matches the target in order).
fn feasible_projective(constraint: &PPovmConstraint) -> Option<Povm> {
    let dim = constraint.marginal.dim();
    if dim != constraint.len() {
        return None;
    }
    let candidate = Povm::projective(dim);
    let (ok, _) = is_ppovm(&candidate, constraint);
    ok.then_some(candidate)
}

/// Marginal-eigenbasis projective candidate: rank-one projectors onto the
/// eigenvectors of `rho_A`, greedily grouped to chase the target weights,
/// then projected onto the constraint set.
fn spectral_candidate(constraint: &PPovmConstraint) -> Result<Povm> {
    let n = constraint.len();
    let dim = constraint.marginal.dim();
    let decomp = herm_eig(constraint.marginal.matrix())?;
    let mut effects = vec![CMatrix::zeros(dim, dim); n];
    let mut assigned = vec![0.0f64; n];
    for k in 0..dim {
        let col: Vec<Complex64> = (0..dim).map(|i| decomp.vectors[(i, k)]).collect();
        let proj = CMatrix::outer(&col);
        let lam = decomp.values[k].max(0.0);
        let target = constraint.target.weights();
        // Most under-target outcome takes the next eigenprojector.
        let slot = (0..n)
            .min_by(|&a, &b| {
                let da = assigned[a] - target[a];
                let db = assigned[b] - target[b];
                da.partial_cmp(&db).expect("finite")
            })
            .expect("n >= 1");
        assigned[slot] += lam;
        effects[slot] = effects[slot].add(&proj);
    }
    project_to_ppovm(&effects, constraint)
}

/// Per-outcome decomposition data of a P-POVM on a probe state (the
/// `e_{ik} = (P_k)_{ii} p_i / p_k` coefficients and the induced
/// perpendicular/parallel convex combinations).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PovmDecomposition {
    /// `e[i][k]`, column k summing to 1.
    pub e_coeffs: Vec<Vec<f64>>,
    /// `rho_perp_k` on the flag register (dimension `n + 1`).
    pub perp_states: Vec<DensityMatrix>,
    /// `rho_par_k(t)`: convex combinations of the evolved base states.
    pub par_states: Vec<DensityMatrix>,
}

/// Decompose a P-POVM's action on a probe state into flag-register and
/// base-ensemble convex combinations.
///
/// `par_inputs` are the evolved base states on `S (x) A'`; `probs` is the
/// probe distribution. The coefficients use the diagonal elements of the
/// effects in the flag basis of A.
pub fn povm_decomposition(
    a_povm: &Povm,
    probs: &ProbabilityDistribution,
    par_inputs: &[DensityMatrix],
) -> Result<PovmDecomposition> {
    let n = probs.len();
    if a_povm.len() != n || a_povm.dim() != n || par_inputs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a_povm.len(),
        });
    }
    let p = probs.weights();
    let mut e_coeffs = vec![vec![0.0f64; n]; n];
    for (k, effect) in a_povm.effects().iter().enumerate() {
        for (i, row) in e_coeffs.iter_mut().enumerate() {
            row[k] = (effect[(i, i)].re * p[i] / p[k]).max(0.0);
        }
    }
    let mut perp_states = Vec::with_capacity(n);
    let mut par_states = Vec::with_capacity(n);
    let d_par = par_inputs[0].dim();
    // Iterates the column index of the row-major coefficient table.
    #[allow(clippy::needless_range_loop)]
    for k in 0..n {
        let col_sum: f64 = (0..n).map(|i| e_coeffs[i][k]).sum();
        let mut perp = CMatrix::zeros(n + 1, n + 1);
        let mut par = CMatrix::zeros(d_par, d_par);
        for i in 0..n {
            let w = e_coeffs[i][k] / col_sum;
            perp[(i, i)] = Complex64::new(w, 0.0);
            par = par.add(&par_inputs[i].matrix().scale_re(w));
        }
        perp_states.push(DensityMatrix::new(perp)?);
        par_states.push(DensityMatrix::new(par.hermitize())?);
    }
    Ok(PovmDecomposition {
        e_coeffs,
        perp_states,
        par_states,
    })
}

/// Outcome of a perpendicular/parallel guessing-probability split check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCheck {
    pub pg_total: f64,
    pub pg_perp: f64,
    pub pg_par: f64,
    /// `|pg_total - (lambda pg_perp + (1 - lambda) pg_par)|`.
    pub defect: f64,
}

/// Verify `P_g(probe, POVM) = lambda P_g(perp) + (1 - lambda) P_g(par)`
/// by three independent solves.
pub fn pg_split_check(
    probe_t: &DensityMatrix,
    dims: (usize, usize),
    a_povm: &Povm,
    probs: &ProbabilityDistribution,
    par_inputs: &[DensityMatrix],
    lambda: f64,
    opts: &SolverOptions,
) -> Result<SplitCheck> {
    let measured = measure_ensemble(probe_t, dims, a_povm)?;
    let (effective, _) = measured.effective()?;
    let pg_total = pg_opt(&effective, opts)?.pg_primal;

    let decomp = povm_decomposition(a_povm, probs, par_inputs)?;
    let perp = Ensemble::new(probs.clone(), decomp.perp_states)?;
    let par = Ensemble::new(probs.clone(), decomp.par_states)?;
    let pg_perp = pg_opt(&perp, opts)?.pg_primal;
    let pg_par = pg_opt(&par, opts)?.pg_primal;
    let defect = (pg_total - (lambda * pg_perp + (1.0 - lambda) * pg_par)).abs();
    Ok(SplitCheck {
        pg_total,
        pg_perp,
        pg_par,
        defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{random_state, random_state_with};

    fn uniform2() -> ProbabilityDistribution {
        ProbabilityDistribution::uniform(2)
    }

    fn cc_state(probs: &[f64]) -> DensityMatrix {
        // sum_i p_i |i><i| (x) |i><i|
        let n = probs.len();
        let mut m = CMatrix::zeros(n * n, n * n);
        for (i, &p) in probs.iter().enumerate() {
            let idx = i * n + i;
            m[(idx, idx)] = Complex64::new(p, 0.0);
        }
        DensityMatrix::new(m).unwrap()
    }

    #[test]
    fn projective_is_ppovm_on_diagonal_marginal() {
        let probs = ProbabilityDistribution::new(vec![0.3, 0.7]).unwrap();
        let rho = cc_state(probs.weights());
        let marginal = rho.reduce(&[2, 2], &[0]).unwrap();
        let constraint = PPovmConstraint::new(probs, marginal);
        let (ok, defect) = is_ppovm(&Povm::projective(2), &constraint);
        assert!(ok, "defect {defect}");
    }

    #[test]
    fn uniform_split_is_ppovm_for_uniform_target() {
        let rho = random_state(2, 2, 3).unwrap();
        let constraint = PPovmConstraint::new(uniform2(), rho);
        let effects = vec![
            CMatrix::identity(2).scale_re(0.5),
            CMatrix::identity(2).scale_re(0.5),
        ];
        let povm = Povm::new(effects).unwrap();
        let (ok, _) = is_ppovm(&povm, &constraint);
        assert!(ok);
    }

    #[test]
    fn random_povm_generically_not_ppovm() {
        let rho = random_state(2, 2, 11).unwrap();
        let constraint = PPovmConstraint::new(
            ProbabilityDistribution::new(vec![0.25, 0.75]).unwrap(),
            rho,
        );
        let povm = crate::quantum::random_povm(2, 2, 5).unwrap();
        let (ok, defect) = is_ppovm(&povm, &constraint);
        assert!(!ok);
        assert!(defect > 1e-4);
    }

    #[test]
    fn projection_lands_on_constraint_set() {
        for seed in 0..10 {
            let mut rng = RngStream::from_seed(800 + seed);
            let rho = random_state_with(3, 3, &mut rng).unwrap();
            let dist = crate::quantum::random_distribution(3, 0.1, &mut rng);
            let constraint = PPovmConstraint::new(dist, rho);
            let raw = random_povm_with(3, 3, &mut rng).unwrap();
            let projected = project_to_ppovm(raw.effects(), &constraint).unwrap();
            let (ok, defect) = is_ppovm(&projected, &constraint);
            assert!(ok, "seed {seed}: defect {defect:.3e}");
        }
    }

    #[test]
    fn a_step_product_state_objective_independent_of_povm() {
        // For rho_A (x) rho_B the objective is sum_i p_i Tr(rho_B Q_i)
        // whatever feasible A-POVM is chosen.
        let mut rng = RngStream::from_seed(42);
        let rho_a = random_state_with(2, 2, &mut rng).unwrap();
        let rho_b = random_state_with(2, 2, &mut rng).unwrap();
        let joint = rho_a.tensor(&rho_b);
        let dist = ProbabilityDistribution::new(vec![0.4, 0.6]).unwrap();
        let constraint = PPovmConstraint::new(dist.clone(), rho_a.clone());
        let b_povm = crate::quantum::random_povm(2, 2, 7).unwrap();
        let step = opt_a_step(&joint, (2, 2), &b_povm, &constraint, GAP_TOL).unwrap();
        let expect: f64 = dist
            .weights()
            .iter()
            .zip(b_povm.effects())
            .map(|(&p, q)| p * rho_b.matrix().matmul(q).trace().re)
            .sum();
        assert!(
            (step.objective - expect).abs() <= 1e-6,
            "{} vs {}",
            step.objective,
            expect
        );
        assert!(step.gap <= GAP_TOL);
    }

    #[test]
    fn a_step_single_outcome_forces_identity() {
        let rho = random_state(4, 4, 9).unwrap();
        let marginal = rho.reduce(&[2, 2], &[0]).unwrap();
        let constraint = PPovmConstraint::new(
            ProbabilityDistribution::new(vec![1.0]).unwrap(),
            marginal,
        );
        let b_povm = Povm::trivial(2);
        let step = opt_a_step(&rho, (2, 2), &b_povm, &constraint, GAP_TOL).unwrap();
        assert!(step.povm.effects()[0]
            .sub(&CMatrix::identity(2))
            .max_abs()
            <= 1e-6);
    }

    #[test]
    fn a_step_recovers_projective_on_cc_state() {
        // Measuring B of the classical-classical state with the basis POVM
        // makes the matching projective measurement optimal on A.
        let probs = vec![0.5, 0.5];
        let rho = cc_state(&probs);
        let marginal = rho.reduce(&[2, 2], &[0]).unwrap();
        let constraint =
            PPovmConstraint::new(ProbabilityDistribution::new(probs).unwrap(), marginal);
        let step =
            opt_a_step(&rho, (2, 2), &Povm::projective(2), &constraint, GAP_TOL).unwrap();
        // T_i = p_i |i><i|, so the matched projectors achieve P_g = 1.
        assert!((step.objective - 1.0).abs() <= 1e-6);
        assert!((step.povm.effects()[0][(0, 0)].re - 1.0).abs() <= 1e-5);
        assert!((step.povm.effects()[1][(1, 1)].re - 1.0).abs() <= 1e-5);
    }

    #[test]
    fn a_step_on_flagged_ensemble_probe_recovers_projective() {
        // At lambda = 0 the probe collapses to the bare flagged ensemble
        // sum_i p_i |i><i|_A (x) rho_i (x) |n><n|_{A''}. A B-POVM resolving
        // the orthogonal output blocks makes the projective measurement the
        // optimal A-POVM, with objective P_g of the base ensemble (here 1).
        let base = vec![DensityMatrix::basis(2, 0), DensityMatrix::basis(2, 1)];
        let flag = DensityMatrix::basis(3, 2);
        let mut m = CMatrix::zeros(12, 12);
        for (i, s) in base.iter().enumerate() {
            let block = kron(
                DensityMatrix::basis(2, i).matrix(),
                &kron(s.matrix(), flag.matrix()),
            );
            m = m.add(&block.scale_re(0.5));
        }
        let probe = DensityMatrix::new(m).unwrap();
        let marginal = probe.reduce(&[2, 6], &[0]).unwrap();
        let constraint = PPovmConstraint::new(uniform2(), marginal);

        // Orthogonal-block B-POVM: project onto (S = i) (x) A''.
        let q0 = kron(DensityMatrix::basis(2, 0).matrix(), &CMatrix::identity(3));
        let q1 = kron(DensityMatrix::basis(2, 1).matrix(), &CMatrix::identity(3));
        let b_povm = Povm::new(vec![q0, q1]).unwrap();

        let step = opt_a_step(&probe, (2, 6), &b_povm, &constraint, GAP_TOL).unwrap();
        assert!((step.objective - 1.0).abs() <= 1e-6);
        assert!((step.povm.effects()[0][(0, 0)].re - 1.0).abs() <= 1e-5);
        assert!((step.povm.effects()[1][(1, 1)].re - 1.0).abs() <= 1e-5);
    }

    #[test]
    fn product_state_correlation_vanishes() {
        let mut rng = RngStream::from_seed(1000);
        for seed in 0..4 {
            let rho_a = random_state_with(2, 2, &mut rng).unwrap();
            let rho_b = random_state_with(2, 2, &mut rng).unwrap();
            let joint = rho_a.tensor(&rho_b);
            let dist = crate::quantum::random_distribution(2, 0.2, &mut rng);
            let opts = CorrelationOptions {
                n_restarts: 2,
                seed: seed as u64,
                ..CorrelationOptions::default()
            };
            let r = c_a_measure(&joint, (2, 2), &dist, &opts).unwrap();
            assert!(r.value.abs() <= 3e-7, "seed {seed}: C_A = {:.3e}", r.value);
        }
    }

    #[test]
    fn classical_classical_state_reaches_one_minus_pmax() {
        let probs = vec![0.5, 0.5];
        let rho = cc_state(&probs);
        let dist = ProbabilityDistribution::new(probs).unwrap();
        let opts = CorrelationOptions::default();
        let r = c_a_measure(&rho, (2, 2), &dist, &opts).unwrap();
        assert!(
            (r.value - 0.5).abs() <= 3e-7,
            "C_A = {} expected 0.5",
            r.value
        );
        // value = pg_inner - p_max exactly by construction.
        assert!((r.value - (r.pg_inner - 0.5)).abs() <= 1e-12);
    }

    #[test]
    fn seesaw_trace_non_decreasing() {
        let rho = random_state(4, 3, 21).unwrap();
        let dist = uniform2();
        let r = c_a_measure(&rho, (2, 2), &dist, &CorrelationOptions::default()).unwrap();
        for w in r.seesaw_trace.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-15);
        }
        assert!(r.value >= -3e-7);
    }

    #[test]
    fn c_b_matches_c_a_on_symmetric_state() {
        // The maximally entangled state is swap-symmetric.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = DensityMatrix::pure(&[
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(s, 0.0),
        ])
        .unwrap();
        let dist = uniform2();
        let opts = CorrelationOptions::default();
        let a = c_a_measure(&bell, (2, 2), &dist, &opts).unwrap();
        let b = c_b_measure(&bell, (2, 2), &dist, &opts).unwrap();
        assert!((a.value - b.value).abs() <= 6e-7);
    }

    #[test]
    fn c_ab_takes_the_larger_side() {
        let rho = random_state(4, 2, 31).unwrap();
        let dist = uniform2();
        let opts = CorrelationOptions {
            n_restarts: 2,
            ..CorrelationOptions::default()
        };
        let (joint, side) = c_ab_measure(&rho, (2, 2), &dist, &opts).unwrap();
        let a = c_a_measure(&rho, (2, 2), &dist, &opts).unwrap();
        let b = c_b_measure(&rho, (2, 2), &dist, &opts).unwrap();
        assert!((joint.value - a.value.max(b.value)).abs() <= 1e-12);
        match side {
            MeasuredSide::A => assert!(a.value >= b.value),
            MeasuredSide::B => assert!(b.value > a.value),
        }
    }

    #[test]
    fn swap_round_trip() {
        let rho = random_state(6, 4, 17).unwrap();
        let swapped = swap_bipartition(&rho, (2, 3)).unwrap();
        let back = swap_bipartition(&swapped, (3, 2)).unwrap();
        assert!(back.matrix().sub(rho.matrix()).max_abs() <= 1e-12);
    }

    #[test]
    fn decomposition_projective_gives_identity_coefficients() {
        let probs = ProbabilityDistribution::new(vec![0.3, 0.7]).unwrap();
        let states = vec![
            random_state(4, 2, 51).unwrap(),
            random_state(4, 2, 52).unwrap(),
        ];
        let d = povm_decomposition(&Povm::projective(2), &probs, &states).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                let expect = if i == k { 1.0 } else { 0.0 };
                assert!((d.e_coeffs[i][k] - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn decomposition_uniform_effects_uniform_coefficients() {
        let probs = ProbabilityDistribution::uniform(2);
        let povm = Povm::new(vec![
            CMatrix::identity(2).scale_re(0.5),
            CMatrix::identity(2).scale_re(0.5),
        ])
        .unwrap();
        let states = vec![
            random_state(2, 2, 61).unwrap(),
            random_state(2, 2, 62).unwrap(),
        ];
        let d = povm_decomposition(&povm, &probs, &states).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                assert!((d.e_coeffs[i][k] - 0.5).abs() <= 1e-12);
            }
        }
        for k in 0..2 {
            let s: f64 = (0..2).map(|i| d.e_coeffs[i][k]).sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}
