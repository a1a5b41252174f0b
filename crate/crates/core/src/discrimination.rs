//! Minimum-error discrimination: the guessing probability
//! `P_g = max_POVM sum_i p_i Tr(rho_i P_i)` with certified optimality.
//!
//! Two states get the Helstrom closed form. For general ensembles a
//! fixed-point iteration on the optimality conditions (pretty-good
//! measurement start) runs first; when it stalls above the gap target the
//! solve escalates to a log-barrier interior-point method on the dual
//! `min Tr K  s.t.  K - p_i rho_i >= 0`, whose centered iterates yield both
//! a strictly feasible certificate `K` and a primal POVM. Reported values
//! are always the achievable primal; the certificate bounds the distance to
//! the optimum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{herm_eig, CMatrix, LuDecomposition};
use crate::quantum::{Ensemble, Povm};
use crate::tol::GAP_TOL;

/// Options for the certified discrimination solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Certified duality-gap target.
    pub gap_tol: f64,
    /// Fixed-point iterations before escalating to the interior point.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: GAP_TOL,
            max_iter: 400,
        }
    }
}

/// Ensemble size guard: `n * d` above this is refused.
pub const SIZE_GUARD: usize = 512;

/// Primal/dual pair for one discrimination solve.
///
/// `pg_primal` is achieved by `povm`; `dual_k` satisfies `K - p_i rho_i >= 0`
/// up to eigensolver precision, so `pg_dual = Tr K` upper-bounds the optimum
/// and `gap = pg_dual - pg_primal` certifies the distance to optimality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminationResult {
    pub pg_primal: f64,
    pub povm: Povm,
    pub dual_k: CMatrix,
    pub pg_dual: f64,
    pub gap: f64,
    pub iterations: usize,
}

impl DiscriminationResult {
    /// Max over i of the most negative eigenvalue of `K - p_i rho_i`
    /// (0 when exactly feasible).
    pub fn dual_feasibility_defect(&self, ensemble: &Ensemble) -> f64 {
        weighted_states(ensemble)
            .iter()
            .map(|w| {
                (-self.dual_k.sub(w).min_eig().expect("Hermitian")).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

fn weighted_states(ensemble: &Ensemble) -> Vec<CMatrix> {
    ensemble
        .probs()
        .weights()
        .iter()
        .zip(ensemble.states())
        .map(|(p, s)| s.matrix().scale_re(*p))
        .collect()
}

/// Achieved objective `sum_i p_i Tr(rho_i P_i)` of a POVM on an ensemble.
pub fn eval_povm(ensemble: &Ensemble, povm: &Povm) -> f64 {
    ensemble
        .probs()
        .weights()
        .iter()
        .zip(ensemble.states())
        .zip(povm.effects())
        .map(|((p, s), e)| p * s.matrix().matmul(e).trace().re)
        .sum()
}

/// Closed-form optimum for two states:
/// `P_g = (1 + ||p1 rho1 - p2 rho2||_1) / 2`, POVM from the +/- eigenspaces
/// of the Helstrom operator, dual certificate `K = p2 rho2 + M_+`.
pub fn helstrom(ensemble: &Ensemble) -> Result<DiscriminationResult> {
    if ensemble.len() != 2 {
        return Err(Error::InvalidEnsemble(format!(
            "helstrom needs exactly 2 states, got {}",
            ensemble.len()
        )));
    }
    let ws = weighted_states(ensemble);
    let m = ws[0].sub(&ws[1]).hermitize();
    let decomp = herm_eig(&m)?;
    let dim = ensemble.dim();

    let p_plus = decomp.reassemble(|x| if x > 0.0 { 1.0 } else { 0.0 });
    let p_minus = CMatrix::identity(dim).sub(&p_plus);
    let povm = Povm::new(vec![p_plus.hermitize(), p_minus.hermitize()])?;
    let pg_primal = eval_povm(ensemble, &povm);

    let m_plus = decomp.reassemble(|x| x.max(0.0));
    let (dual_k, pg_dual, _) = certify(&ws, &ws[1].add(&m_plus), dim);
    let gap = pg_dual - pg_primal;
    Ok(DiscriminationResult {
        pg_primal,
        povm,
        dual_k,
        pg_dual,
        gap,
        iterations: 0,
    })
}

/// Pretty-good measurement `P_i = S^{-1/2} p_i rho_i S^{-1/2}` with the
/// kernel projector of `S` assigned to the largest-probability effect.
/// Returns the achieved (lower-bound) value and the feasible POVM.
pub fn pgm(ensemble: &Ensemble) -> Result<(f64, Povm)> {
    let ws = weighted_states(ensemble);
    let dim = ensemble.dim();
    let mut s = CMatrix::zeros(dim, dim);
    for w in &ws {
        s = s.add(w);
    }
    let s = s.hermitize();
    let isqrt = s.inv_sqrt_psd(1e-13)?;
    let mut effects: Vec<CMatrix> = ws
        .iter()
        .map(|w| isqrt.matmul(w).matmul(&isqrt).hermitize())
        .collect();
    let kernel = CMatrix::identity(dim).sub(&s.support_projector(1e-13)?);
    let argmax = ensemble
        .probs()
        .weights()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        .map(|(k, _)| k)
        .expect("nonempty ensemble");
    effects[argmax] = effects[argmax].add(&kernel).hermitize();
    let povm = Povm::new(effects)?;
    Ok((eval_povm(ensemble, &povm), povm))
}

/// Certified guessing probability. `n = 1` is trivial, `n = 2` delegates to
/// [`helstrom`]; larger ensembles go through the general solver.
pub fn pg_opt(ensemble: &Ensemble, opts: &SolverOptions) -> Result<DiscriminationResult> {
    guard(ensemble)?;
    match ensemble.len() {
        1 => {
            let povm = Povm::trivial(ensemble.dim());
            let dual_k = ensemble.states()[0].matrix().clone();
            Ok(DiscriminationResult {
                pg_primal: 1.0,
                povm,
                dual_k,
                pg_dual: 1.0,
                gap: 0.0,
                iterations: 0,
            })
        }
        2 => helstrom(ensemble),
        _ => pg_opt_general(ensemble, opts),
    }
}

/// Running best primal/dual pair during a general solve.
struct Candidates {
    best_val: f64,
    best_povm: Povm,
    best_dual: Option<(CMatrix, f64)>,
}

impl Candidates {
    fn offer_primal(&mut self, val: f64, povm: impl FnOnce() -> Result<Povm>) -> Result<()> {
        if val > self.best_val + 1e-15 {
            self.best_val = val;
            self.best_povm = povm()?;
        }
        Ok(())
    }

    fn offer_dual(&mut self, k: CMatrix, tr: f64) {
        if self.best_dual.as_ref().map(|d| tr < d.1).unwrap_or(true) {
            self.best_dual = Some((k, tr));
        }
    }

    fn gap(&self) -> f64 {
        self.best_dual
            .as_ref()
            .map(|d| d.1 - self.best_val)
            .unwrap_or(f64::INFINITY)
    }
}

/// General certified solver without the two-state shortcut; exposed so the
/// iterative path can be validated against the Helstrom closed form.
pub fn pg_opt_general(ensemble: &Ensemble, opts: &SolverOptions) -> Result<DiscriminationResult> {
    guard(ensemble)?;
    let ws = weighted_states(ensemble);
    let dim = ensemble.dim();
    let n = ensemble.len();

    // Candidate pool: PGM start plus the trivial all-mass-on-p_max POVM.
    let (pgm_val, pgm_povm) = pgm(ensemble)?;
    let argmax = ensemble
        .probs()
        .weights()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        .map(|(k, _)| k)
        .expect("nonempty");
    let mut trivial_effects = vec![CMatrix::zeros(dim, dim); n];
    trivial_effects[argmax] = CMatrix::identity(dim);
    let trivial = Povm::new(trivial_effects)?;
    let trivial_val = eval_povm(ensemble, &trivial);

    let mut cand = Candidates {
        best_val: trivial_val,
        best_povm: trivial,
        best_dual: None,
    };
    cand.offer_primal(pgm_val, || Ok(pgm_povm.clone()))?;

    let mut iterations =
        fixed_point_rounds(ensemble, &ws, pgm_povm.effects().to_vec(), argmax, opts.max_iter, opts.gap_tol, &mut cand)?;
    if cand.gap() <= opts.gap_tol {
        return finish(cand, iterations, opts);
    }

    // Interior-point escalation on the dual; each centered stage offers a
    // recovered primal and a feasible dual, stopping once the certified gap
    // is comfortably inside the target.
    let steps = dual_barrier(&ws, dim, opts.gap_tol, &mut |k_center: &CMatrix, t: f64| {
        if let Some(povm) = recover_primal(&ws, dim, k_center, t) {
            let val = eval_povm(ensemble, &povm);
            let _ = cand.offer_primal(val, || Ok(povm));
        }
        let (k, tr, _) = certify(&ws, k_center, dim);
        cand.offer_dual(k, tr);
        cand.gap() <= 0.75 * opts.gap_tol
    })?;
    iterations += steps;

    if cand.gap() > opts.gap_tol {
        // Polish the best primal with additional optimality-condition rounds.
        let effects = cand.best_povm.effects().to_vec();
        iterations +=
            fixed_point_rounds(ensemble, &ws, effects, argmax, 200, opts.gap_tol, &mut cand)?;
    }
    finish(cand, iterations, opts)
}

fn finish(cand: Candidates, iterations: usize, opts: &SolverOptions) -> Result<DiscriminationResult> {
    let (dual_k, pg_dual) = cand.best_dual.clone().expect("dual always offered");
    let gap = pg_dual - cand.best_val;
    if gap > opts.gap_tol {
        return Err(Error::NoConvergence { gap, iterations });
    }
    Ok(DiscriminationResult {
        pg_primal: cand.best_val,
        povm: cand.best_povm,
        dual_k,
        pg_dual,
        gap,
        iterations,
    })
}

/// Fixed-point iteration `P_i <- L^{-1/2} W_i P_i W_i L^{-1/2}` with
/// `L = sum_j W_j P_j W_j`, kernel mass assigned to the largest-probability
/// effect. Offers primal values and periodic dual certificates to `cand`;
/// returns the number of rounds executed.
fn fixed_point_rounds(
    ensemble: &Ensemble,
    ws: &[CMatrix],
    mut effects: Vec<CMatrix>,
    argmax: usize,
    max_iter: usize,
    gap_tol: f64,
    cand: &mut Candidates,
) -> Result<usize> {
    let dim = ensemble.dim();
    let mut stall = 0usize;
    let mut last_val = f64::NEG_INFINITY;
    for iter in 0..max_iter {
        let mut l = CMatrix::zeros(dim, dim);
        for (w, p) in ws.iter().zip(&effects) {
            l = l.add(&w.matmul(p).matmul(w));
        }
        let decomp = herm_eig(&l.hermitize())?;
        let top = decomp.values.first().copied().unwrap_or(0.0).max(0.0);
        let cut = top * 1e-13;
        let isqrt = decomp.reassemble(|x| if x > cut { 1.0 / x.sqrt() } else { 0.0 });
        let kernel = CMatrix::identity(dim)
            .sub(&decomp.reassemble(|x| if x > cut { 1.0 } else { 0.0 }));
        let mut next: Vec<CMatrix> = ws
            .iter()
            .zip(&effects)
            .map(|(w, p)| {
                isqrt
                    .matmul(&w.matmul(p).matmul(w))
                    .matmul(&isqrt)
                    .hermitize()
            })
            .collect();
        next[argmax] = next[argmax].add(&kernel).hermitize();
        effects = next;

        let val = ensemble
            .probs()
            .weights()
            .iter()
            .zip(ensemble.states())
            .zip(&effects)
            .map(|((p, s), e)| p * s.matrix().matmul(e).trace().re)
            .sum::<f64>();
        cand.offer_primal(val, || Povm::new(effects.clone()))?;
        if val <= last_val + 1e-14 {
            stall += 1;
        } else {
            stall = 0;
        }
        last_val = val;

        if iter % 20 == 19 || iter + 1 == max_iter || stall > 50 {
            let mut k0 = CMatrix::zeros(dim, dim);
            for (w, p) in ws.iter().zip(&effects) {
                k0 = k0.add(&w.matmul(p));
            }
            let (k, tr, _) = certify(ws, &k0.hermitize(), dim);
            cand.offer_dual(k, tr);
            if cand.gap() <= gap_tol || stall > 50 {
                return Ok(iter + 1);
            }
        }
    }
    Ok(max_iter)
}

/// Centered-point primal recovery `P_i = (1/t) (K - W_i)^{-1}`, corrected to
/// an exact POVM by symmetric normalization.
fn recover_primal(ws: &[CMatrix], dim: usize, k_center: &CMatrix, t: f64) -> Option<Povm> {
    let mut effects: Vec<CMatrix> = Vec::with_capacity(ws.len());
    for w in ws {
        let s = k_center.sub(w).hermitize();
        let d = herm_eig(&s).ok()?;
        effects.push(d.reassemble(|x| if x > 0.0 { 1.0 / (t * x) } else { 0.0 }));
    }
    let mut total = CMatrix::zeros(dim, dim);
    for e in &effects {
        total = total.add(e);
    }
    let correction = total.hermitize().inv_sqrt_psd(1e-13).ok()?;
    let fixed: Vec<CMatrix> = effects
        .iter()
        .map(|e| correction.matmul(e).matmul(&correction).hermitize())
        .collect();
    Povm::new(fixed).ok()
}

fn guard(ensemble: &Ensemble) -> Result<()> {
    let nd = ensemble.len() * ensemble.dim();
    if nd > SIZE_GUARD {
        return Err(Error::SizeGuard(format!(
            "n*d = {nd} exceeds {SIZE_GUARD}"
        )));
    }
    Ok(())
}

/// Shift a dual candidate to exact feasibility: `K <- K0 + eps I` with the
/// minimal `eps` making all `K - W_i` PSD. Returns `(K, Tr K, eps)`.
fn certify(ws: &[CMatrix], k0: &CMatrix, dim: usize) -> (CMatrix, f64, f64) {
    let mut eps = 0.0f64;
    for w in ws {
        let min = k0.sub(w).min_eig().unwrap_or(f64::NEG_INFINITY);
        eps = eps.max(-min);
    }
    // Tiny cushion absorbs eigensolver error in the feasibility direction.
    let eps = if eps > 0.0 { eps * (1.0 + 1e-12) + 1e-15 } else { 0.0 };
    let k = k0.add(&CMatrix::identity(dim).scale_re(eps));
    let tr = k.trace().re;
    (k, tr, eps)
}

/// Log-barrier path following on `min Tr K : K - W_i >= 0`.
///
/// After each centering stage the callback receives the centered `(K, t)`;
/// returning `true` stops the path early (caller is satisfied with its
/// certified gap). Returns the total Newton step count.
fn dual_barrier(
    ws: &[CMatrix],
    dim: usize,
    gap_tol: f64,
    on_stage: &mut dyn FnMut(&CMatrix, f64) -> bool,
) -> Result<usize> {
    let n = ws.len();
    // Strictly feasible start: K = (max eigenvalue of any W_i + 1) I.
    let mut shift = 0.0f64;
    for w in ws {
        let top = herm_eig(w)?.values.first().copied().unwrap_or(0.0);
        shift = shift.max(top);
    }
    let mut k = CMatrix::identity(dim).scale_re(shift + 1.0);
    let mut t = 1.0f64;
    let t_final = 64.0 * (n * dim) as f64 / gap_tol;
    let mut newton_steps = 0usize;

    let basis = hermitian_basis(dim);
    loop {
        // Newton-center f_t(K) = t Tr K - sum_i log det (K - W_i).
        for _ in 0..80 {
            newton_steps += 1;
            let mut invs = Vec::with_capacity(n);
            for w in ws {
                let s = k.sub(w).hermitize();
                let d = herm_eig(&s)?;
                if d.values.last().copied().unwrap_or(0.0) <= 0.0 {
                    return Err(Error::NoConvergence {
                        gap: f64::INFINITY,
                        iterations: newton_steps,
                    });
                }
                invs.push(d.reassemble(|x| 1.0 / x));
            }
            let mut grad_mat = CMatrix::identity(dim).scale_re(t);
            for inv in &invs {
                grad_mat = grad_mat.sub(inv);
            }
            let grad_mat = grad_mat.hermitize();

            // Hessian over the real Hermitian parametrization.
            let m = basis.len();
            let mut h = CMatrix::zeros(m, m);
            let mut g = vec![0.0f64; m];
            for (a, ea) in basis.iter().enumerate() {
                g[a] = grad_mat.inner_re(ea);
                let mapped: Vec<CMatrix> =
                    invs.iter().map(|inv| inv.matmul(ea).matmul(inv)).collect();
                for (b, eb) in basis.iter().enumerate().skip(a) {
                    let mut acc = 0.0;
                    for mm in &mapped {
                        acc += mm.inner_re(eb);
                    }
                    h[(a, b)] = Complex64::new(acc, 0.0);
                    h[(b, a)] = Complex64::new(acc, 0.0);
                }
            }
            let rhs: Vec<Complex64> = g.iter().map(|&x| Complex64::new(-x, 0.0)).collect();
            let lu = LuDecomposition::new(&h)?;
            let delta_coeffs = lu.solve_vec(&rhs);
            let mut delta = CMatrix::zeros(dim, dim);
            for (c, e) in delta_coeffs.iter().zip(&basis) {
                delta = delta.add(&e.scale_re(c.re));
            }
            let decrement_sq: f64 = delta_coeffs
                .iter()
                .zip(&g)
                .map(|(c, &gi)| -c.re * gi)
                .sum();
            if decrement_sq <= 1e-16 {
                break;
            }

            // Backtracking: stay strictly feasible, then Armijo.
            let mut alpha = 1.0f64;
            let f_cur = barrier_value(ws, &k, t)?;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = k.add(&delta.scale_re(alpha)).hermitize();
                if let Some(f_new) = barrier_value_checked(ws, &cand, t) {
                    if f_new <= f_cur - 0.25 * alpha * decrement_sq {
                        k = cand;
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

        if on_stage(&k, t) || t >= t_final {
            break;
        }
        t = (t * 8.0).min(t_final);
    }
    Ok(newton_steps)
}

fn barrier_value(ws: &[CMatrix], k: &CMatrix, t: f64) -> Result<f64> {
    barrier_value_checked(ws, k, t).ok_or(Error::NoConvergence {
        gap: f64::INFINITY,
        iterations: 0,
    })
}

/// `None` when any slack matrix is not strictly positive.
fn barrier_value_checked(ws: &[CMatrix], k: &CMatrix, t: f64) -> Option<f64> {
    let mut val = t * k.trace().re;
    for w in ws {
        let s = k.sub(w).hermitize();
        let d = herm_eig(&s).ok()?;
        if d.values.last().copied().unwrap_or(0.0) <= 0.0 {
            return None;
        }
        val -= d.values.iter().map(|x| x.ln()).sum::<f64>();
    }
    Some(val)
}

/// Orthonormal real basis of Hermitian `dim x dim` matrices (d^2 elements).
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
