//! Flagged probe states, their evolution, and the time-grid backflow scan.
//!
//! The probe couples a classical flag register A (dimension `n`) to
//! `B = S (x) A' (x) A''`, where `A''` is an `n + 1`-dimensional flag space:
//!
//! `rho^(lambda) = sum_i p_i |i><i|_A (x) (lambda sigma (x) |i><i|_{A''}
//!                 + (1 - lambda) rho_i (x) |n><n|_{A''})`
//!
//! Only S evolves, so the classical-quantum block structure survives the
//! dynamics, the marginal on A is time independent, and the constrained
//! correlation measure with the base distribution becomes a non-Markovianity
//! witness: its increase over a step certifies that no CPTP intermediate map
//! exists there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{apply_on_middle_factor, cp_divisibility_scan, DivisibilityStep};
use crate::correlations::{
    c_a_measure, pg_split_check, CorrelationOptions, CorrelationResult, SplitCheck,
};
use crate::discrimination::{pg_opt, SolverOptions};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::numkernel::{kron, CMatrix};
use crate::quantum::{
    random_distribution, random_ket, random_state_with, DensityMatrix, Ensemble, Povm,
    ProbabilityDistribution, RngStream,
};
use crate::tol::DELTA_C_TOL;

/// Factor dimensions of a probe instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeDims {
    pub d_s: usize,
    pub d_a_prime: usize,
    pub n_bar: usize,
}

impl ProbeDims {
    pub fn dim_a(&self) -> usize {
        self.n_bar
    }

    /// `dim A'' = n + 1`.
    pub fn dim_flag(&self) -> usize {
        self.n_bar + 1
    }

    pub fn dim_sa(&self) -> usize {
        self.d_s * self.d_a_prime
    }

    pub fn dim_b(&self) -> usize {
        self.dim_sa() * self.dim_flag()
    }

    pub fn dim_total(&self) -> usize {
        self.dim_a() * self.dim_b()
    }
}

/// Base ensemble, sigma block and mixing weight defining a probe family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub base: Ensemble,
    pub sigma: DensityMatrix,
    pub lambda: f64,
    pub dims: ProbeDims,
}

impl ProbeSpec {
    pub fn new(
        base: Ensemble,
        sigma: DensityMatrix,
        lambda: f64,
        dims: ProbeDims,
    ) -> Result<Self> {
        if base.len() != dims.n_bar {
            return Err(Error::DimensionMismatch {
                expected: dims.n_bar,
                got: base.len(),
            });
        }
        if base.dim() != dims.dim_sa() || sigma.dim() != dims.dim_sa() {
            return Err(Error::DimensionMismatch {
                expected: dims.dim_sa(),
                got: base.dim(),
            });
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::InvalidDistribution(format!(
                "lambda = {lambda} outside [0, 1)"
            )));
        }
        Ok(Self {
            base,
            sigma,
            lambda,
            dims,
        })
    }

    /// Probe with the default sigma: maximally mixed on `S (x) A'`.
    pub fn with_mixed_sigma(
        base: Ensemble,
        lambda: f64,
        dims: ProbeDims,
    ) -> Result<Self> {
        let sigma = DensityMatrix::maximally_mixed(dims.dim_sa());
        Self::new(base, sigma, lambda, dims)
    }
}

/// Assemble the initial probe state on `A (x) S (x) A' (x) A''`.
pub fn build_probe(spec: &ProbeSpec) -> Result<DensityMatrix> {
    let d = spec.dims;
    let n = d.n_bar;
    let flag_dim = d.dim_flag();
    let total = d.dim_total();
    let lambda = spec.lambda;
    let mut acc = CMatrix::zeros(total, total);
    for (i, (p, rho_i)) in spec
        .base
        .probs()
        .weights()
        .iter()
        .zip(spec.base.states())
        .enumerate()
    {
        let flag_a = DensityMatrix::basis(n, i);
        let sigma_block = kron(spec.sigma.matrix(), DensityMatrix::basis(flag_dim, i).matrix());
        let base_block = kron(rho_i.matrix(), DensityMatrix::basis(flag_dim, n).matrix());
        let inner = sigma_block
            .scale_re(lambda)
            .add(&base_block.scale_re(1.0 - lambda));
        acc = acc.add(&kron(flag_a.matrix(), &inner).scale_re(*p));
    }
    DensityMatrix::new(acc)
}

/// Evolve the probe to grid time `t` by `I_A (x) Lambda_S(t) (x) I_{A'A''}`
/// and check that the classical-quantum block structure survived.
pub fn evolve_probe(spec: &ProbeSpec, traj: &Trajectory, t: f64) -> Result<DensityMatrix> {
    if traj.dim() != spec.dims.d_s {
        return Err(Error::DimensionMismatch {
            expected: spec.dims.d_s,
            got: traj.dim(),
        });
    }
    let idx = traj.index_of(t)?;
    let probe0 = build_probe(spec)?;
    let d = spec.dims;
    let right = d.d_a_prime * d.dim_flag();
    let evolved = apply_on_middle_factor(&traj.channels[idx], probe0.matrix(), d.dim_a(), right);

    let off_block = cq_off_block_norm(&evolved, d.dim_a(), d.dim_b());
    if off_block > 1e-10 {
        return Err(Error::InvalidDensityMatrix(format!(
            "classical-quantum structure broken: off-block norm {off_block:.3e}"
        )));
    }
    DensityMatrix::new(evolved.hermitize())
}

/// Largest entry magnitude outside the diagonal blocks of the A register.
pub fn cq_off_block_norm(m: &CMatrix, d_a: usize, d_b: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..d_a {
        for j in 0..d_a {
            if i == j {
                continue;
            }
            for r in 0..d_b {
                for c in 0..d_b {
                    worst = worst.max(m[(i * d_b + r, j * d_b + c)].norm());
                }
            }
        }
    }
    worst
}

/// Push an ensemble on `S (x) A'` through `Lambda_S(t) (x) I_{A'}`;
/// probabilities are unchanged.
pub fn evolve_ensemble(ensemble: &Ensemble, traj: &Trajectory, t: f64) -> Result<Ensemble> {
    let idx = traj.index_of(t)?;
    let ch = &traj.channels[idx];
    let d_s = ch.dim_in();
    if !ensemble.dim().is_multiple_of(d_s) {
        return Err(Error::DimensionMismatch {
            expected: d_s,
            got: ensemble.dim(),
        });
    }
    let d_ap = ensemble.dim() / d_s;
    let states: Result<Vec<DensityMatrix>> = ensemble
        .states()
        .iter()
        .map(|s| DensityMatrix::new(apply_on_middle_factor(ch, s.matrix(), 1, d_ap).hermitize()))
        .collect();
    Ensemble::new(ensemble.probs().clone(), states?)
}

/// Evolved sigma and base blocks at grid time `t` (blockwise form of the
/// probe evolution; used by the decomposition diagnostics).
pub fn evolved_blocks(
    spec: &ProbeSpec,
    traj: &Trajectory,
    t: f64,
) -> Result<(DensityMatrix, Vec<DensityMatrix>)> {
    let idx = traj.index_of(t)?;
    let ch = &traj.channels[idx];
    let d_ap = spec.dims.d_a_prime;
    let sigma_t = DensityMatrix::new(
        apply_on_middle_factor(ch, spec.sigma.matrix(), 1, d_ap).hermitize(),
    )?;
    let base_t: Result<Vec<DensityMatrix>> = spec
        .base
        .states()
        .iter()
        .map(|s| DensityMatrix::new(apply_on_middle_factor(ch, s.matrix(), 1, d_ap).hermitize()))
        .collect();
    Ok((sigma_t, base_t?))
}

/// Options of the backflow scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanOptions {
    pub correlation: CorrelationOptions,
    /// Significance threshold on a correlation increment.
    pub delta_c_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            correlation: CorrelationOptions::default(),
            delta_c_tol: DELTA_C_TOL,
        }
    }
}

/// A step whose correlation increment exceeds the significance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackflowInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub delta_c: f64,
}

/// Per-step comparison of the correlation verdict with the CP verdict.
/// `agree` is `None` when the intermediate map was indeterminate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRecord {
    pub t_start: f64,
    pub t_end: f64,
    pub delta_c: f64,
    pub backflow: bool,
    pub cp_flag: Option<bool>,
    pub agree: Option<bool>,
}

/// Full record of one scan at a fixed lambda.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessReport {
    pub lambda: f64,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub c_values: Vec<CorrelationResult>,
    /// Projective-candidate value `lambda + (1-lambda) P_g(ens(t)) - p_max`.
    pub c_projective: Vec<f64>,
    pub pg_ensemble: Vec<f64>,
    pub pg_perp: Vec<f64>,
    pub pg_par: Vec<f64>,
    pub steps: Vec<DivisibilityStep>,
    pub backflow_intervals: Vec<BackflowInterval>,
    pub verdict_consistency: Vec<ConsistencyRecord>,
    /// Per-point solver convergence; false entries fell back to the
    /// projective candidate value.
    pub convergence: Vec<bool>,
    pub no_convergence: bool,
}

impl WitnessReport {
    pub fn delta_c(&self, step: usize) -> f64 {
        self.c_values[step + 1].value - self.c_values[step].value
    }
}

/// Compute the correlation measure, guessing probabilities and CP flags on
/// every grid point of the trajectory, then assemble the per-step verdicts.
pub fn scan_backflow(
    spec: &ProbeSpec,
    traj: &Trajectory,
    dist: Option<&ProbabilityDistribution>,
    opts: &ScanOptions,
) -> Result<WitnessReport> {
    if traj.grid.len() < 2 {
        return Err(Error::Grid("scan needs at least 2 grid points".into()));
    }
    let dist = dist.cloned().unwrap_or_else(|| spec.base.probs().clone());
    let p_max = dist.max();
    let lambda = spec.lambda;
    let dims = (spec.dims.dim_a(), spec.dims.dim_b());
    let solver = SolverOptions {
        gap_tol: opts.correlation.gap_tol,
        ..SolverOptions::default()
    };

    struct PointRecord {
        c_value: CorrelationResult,
        c_projective: f64,
        pg_ensemble: f64,
        split: SplitCheck,
        converged: bool,
    }

    let points: Vec<Result<PointRecord>> = traj
        .grid
        .par_iter()
        .map(|&t| {
            let probe_t = evolve_probe(spec, traj, t)?;
            let ens_t = evolve_ensemble(&spec.base, traj, t)?;
            let pg_ens = pg_opt(&ens_t, &solver)?.pg_primal;
            let c_projective = lambda + (1.0 - lambda) * pg_ens - p_max;

            let (c_value, converged) =
                match c_a_measure(&probe_t, dims, &dist, &opts.correlation) {
                    Ok(r) => (r, true),
                    Err(Error::NoConvergence { gap, .. }) => {
                        // Fall back to the always-feasible projective
                        // candidate; its value is achievable, only possibly
                        // not seesaw-optimal.
                        let fallback =
                            projective_fallback(&probe_t, dims, &dist, &solver, gap)?;
                        (fallback, false)
                    }
                    Err(e) => return Err(e),
                };

            let (_, base_t) = evolved_blocks(spec, traj, t)?;
            let split = pg_split_check(
                &probe_t,
                dims,
                &c_value.a_povm,
                &dist,
                &base_t,
                lambda,
                &solver,
            )?;
            Ok(PointRecord {
                c_value,
                c_projective,
                pg_ensemble: pg_ens,
                split,
                converged,
            })
        })
        .collect();

    let mut c_values = Vec::with_capacity(points.len());
    let mut c_projective = Vec::with_capacity(points.len());
    let mut pg_ensemble = Vec::with_capacity(points.len());
    let mut pg_perp = Vec::with_capacity(points.len());
    let mut pg_par = Vec::with_capacity(points.len());
    let mut convergence = Vec::with_capacity(points.len());
    for point in points {
        let point = point?;
        c_values.push(point.c_value);
        c_projective.push(point.c_projective);
        pg_ensemble.push(point.pg_ensemble);
        pg_perp.push(point.split.pg_perp);
        pg_par.push(point.split.pg_par);
        convergence.push(point.converged);
    }
    let no_convergence = convergence.iter().any(|&c| !c);

    let steps = cp_divisibility_scan(traj);
    let mut backflow_intervals = Vec::new();
    let mut verdict_consistency = Vec::new();
    for (k, step) in steps.iter().enumerate() {
        let delta_c = c_values[k + 1].value - c_values[k].value;
        let backflow = delta_c > opts.delta_c_tol;
        if backflow {
            backflow_intervals.push(BackflowInterval {
                t_start: step.t_start,
                t_end: step.t_end,
                delta_c,
            });
        }
        let agree = step.cp_flag.map(|cp| backflow == !cp);
        verdict_consistency.push(ConsistencyRecord {
            t_start: step.t_start,
            t_end: step.t_end,
            delta_c,
            backflow,
            cp_flag: step.cp_flag,
            agree,
        });
    }

    Ok(WitnessReport {
        lambda,
        seed: opts.correlation.seed,
        grid: traj.grid.clone(),
        c_values,
        c_projective,
        pg_ensemble,
        pg_perp,
        pg_par,
        steps,
        backflow_intervals,
        verdict_consistency,
        convergence,
        no_convergence,
    })
}

/// Correlation record built from the projective (or trivial) candidate only.
fn projective_fallback(
    probe_t: &DensityMatrix,
    dims: (usize, usize),
    dist: &ProbabilityDistribution,
    solver: &SolverOptions,
    gap: f64,
) -> Result<CorrelationResult> {
    let n = dist.len();
    let marginal = probe_t.reduce(&[dims.0, dims.1], &[0])?;
    let constraint = crate::correlations::PPovmConstraint::new(dist.clone(), marginal);
    let candidate = Povm::projective(dims.0);
    let (ok, _) = crate::correlations::is_ppovm(&candidate, &constraint);
    let a_povm = if ok && dims.0 == n {
        candidate
    } else {
        Povm::new(
            dist.weights()
                .iter()
                .map(|&p| CMatrix::identity(dims.0).scale_re(p))
                .collect(),
        )?
    };
    let measured = crate::quantum::measure_ensemble(probe_t, dims, &a_povm)?;
    let (effective, _) = measured.effective()?;
    let inner = pg_opt(&effective, solver)?;
    Ok(CorrelationResult {
        value: inner.pg_primal - dist.max(),
        a_povm,
        b_povm: inner.povm,
        pg_inner: inner.pg_primal,
        restarts_used: 0,
        seesaw_trace: vec![(1, inner.pg_primal)],
        gap,
    })
}

/// Best ensemble found by random search plus refinement for a backflow of
/// the plain guessing probability over `[t_early, t_late]`. The achieved
/// increment may be nonpositive (reported honestly).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub ensemble: Ensemble,
    pub delta_pg: f64,
    pub pg_early: f64,
    pub pg_late: f64,
    pub trials: usize,
}

/// Random + refinement search over `n_bar`-state ensembles on `S (x) A'`
/// maximizing `P_g(t_late) - P_g(t_early)`.
pub fn search_ensemble(
    traj: &Trajectory,
    t_early: f64,
    t_late: f64,
    n_bar: usize,
    d_a_prime: usize,
    n_trials: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    traj.index_of(t_early)?;
    traj.index_of(t_late)?;
    let d_s = traj.dim();
    // A witnessing ensemble never needs an ancilla larger than the system.
    if d_a_prime == 0 || d_a_prime > d_s {
        return Err(Error::DimensionMismatch {
            expected: d_s,
            got: d_a_prime,
        });
    }
    let dim = d_s * d_a_prime;
    let solver = SolverOptions::default();

    let score = |ens: &Ensemble| -> Result<(f64, f64, f64)> {
        let early = pg_opt(&evolve_ensemble(ens, traj, t_early)?, &solver)?.pg_primal;
        let late = pg_opt(&evolve_ensemble(ens, traj, t_late)?, &solver)?.pg_primal;
        Ok((late - early, early, late))
    };

    // Deterministic candidate: computational basis states of S, padded with
    // |0> on the ancilla.
    let mut best: Option<(Ensemble, f64, f64, f64)> = None;
    let mut trials = 0usize;
    if n_bar <= d_s {
        let states: Vec<DensityMatrix> = (0..n_bar)
            .map(|k| {
                let mut ket = vec![num_complex::Complex64::new(0.0, 0.0); dim];
                ket[k * d_a_prime] = num_complex::Complex64::new(1.0, 0.0);
                DensityMatrix::pure(&ket)
            })
            .collect::<Result<_>>()?;
        let ens = Ensemble::new(ProbabilityDistribution::uniform(n_bar), states)?;
        let (delta, early, late) = score(&ens)?;
        trials += 1;
        best = Some((ens, delta, early, late));
    }

    for k in 0..n_trials {
        let mut rng = RngStream::split(seed, 10_000 + k as u64);
        let probs = random_distribution(n_bar, 0.1, &mut rng);
        let states: Vec<DensityMatrix> = (0..n_bar)
            .map(|_| {
                if rng.uniform() < 0.7 {
                    DensityMatrix::pure(&random_ket(dim, &mut rng))
                } else {
                    random_state_with(dim, dim.min(2), &mut rng)
                }
            })
            .collect::<Result<_>>()?;
        let ens = Ensemble::new(probs, states)?;
        let (delta, early, late) = score(&ens)?;
        trials += 1;
        let better = best.as_ref().map(|b| delta > b.1).unwrap_or(true);
        if better {
            best = Some((ens, delta, early, late));
        }
    }

    // Local refinement: mix the best states toward random directions.
    let (mut ens, mut delta, mut early, mut late) =
        best.ok_or_else(|| Error::InvalidEnsemble("search produced no candidate".into()))?;
    let refine_rounds = (n_trials / 2).max(8);
    for k in 0..refine_rounds {
        let mut rng = RngStream::split(seed, 50_000 + k as u64);
        let idx = (rng.uniform() * ens.len() as f64) as usize % ens.len();
        let mut states = ens.states().to_vec();
        let noise = DensityMatrix::pure(&random_ket(dim, &mut rng))?;
        let eps = 0.05 + 0.15 * rng.uniform();
        let mixed = DensityMatrix::new(
            states[idx]
                .matrix()
                .scale_re(1.0 - eps)
                .add(&noise.matrix().scale_re(eps))
                .hermitize(),
        )?;
        states[idx] = mixed;
        let cand = Ensemble::new(ens.probs().clone(), states)?;
        let (d_new, e_new, l_new) = score(&cand)?;
        trials += 1;
        if d_new > delta {
            ens = cand;
            delta = d_new;
            early = e_new;
            late = l_new;
        }
    }

    Ok(SearchOutcome {
        ensemble: ens,
        delta_pg: delta,
        pg_early: early,
        pg_late: late,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_trajectory, uniform_grid, DynamicsFamily};
    use num_complex::Complex64;

    fn computational_base(d_a_prime: usize) -> Ensemble {
        let dim = 2 * d_a_prime;
        let states = (0..2)
            .map(|k| {
                let mut ket = vec![Complex64::new(0.0, 0.0); dim];
                ket[k * d_a_prime] = Complex64::new(1.0, 0.0);
                DensityMatrix::pure(&ket).unwrap()
            })
            .collect();
        Ensemble::new(ProbabilityDistribution::uniform(2), states).unwrap()
    }

    fn probe_spec(lambda: f64) -> ProbeSpec {
        let dims = ProbeDims {
            d_s: 2,
            d_a_prime: 1,
            n_bar: 2,
        };
        ProbeSpec::with_mixed_sigma(computational_base(1), lambda, dims).unwrap()
    }

    fn ad_trajectory(n: usize, t_end: f64) -> Trajectory {
        make_trajectory(
            DynamicsFamily::AmplitudeDamping {
                g_decay: 1.0,
                g_freq: 3.0,
            },
            0.0,
            uniform_grid(0.0, t_end, n).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn lambda_zero_collapses_to_flagged_ensemble() {
        let spec = probe_spec(0.0);
        let probe = build_probe(&spec).unwrap();
        // dim = 2 * (2*1*3) = 12; the sigma blocks carry zero weight.
        assert_eq!(probe.dim(), 12);
        // Block (i=0): rho_0 (x) |2><2| on B with weight 1/2 at A-flag 0.
        let d_b = 6;
        // S (x) A'' index for |0><0| (x) |2><2|: row = 0*3+2 = 2.
        assert!((probe.matrix()[(2, 2)].re - 0.5).abs() <= 1e-12);
        // A-flag 1 block: |1><1|_S (x) |2><2| at offset d_b + 1*3+2 = 11.
        assert!((probe.matrix()[(d_b + 5, d_b + 5)].re - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn probe_dimensions_and_marginal() {
        let dims = ProbeDims {
            d_s: 2,
            d_a_prime: 2,
            n_bar: 2,
        };
        let base = computational_base(2);
        let spec = ProbeSpec::with_mixed_sigma(base, 0.5, dims).unwrap();
        let probe = build_probe(&spec).unwrap();
        assert_eq!(probe.dim(), 24);
        assert!((probe.matrix().trace().re - 1.0).abs() <= 1e-10);
        let marg = probe.reduce(&[2, 12], &[0]).unwrap();
        assert!((marg.matrix()[(0, 0)].re - 0.5).abs() <= 1e-10);
        assert!((marg.matrix()[(1, 1)].re - 0.5).abs() <= 1e-10);
        assert!(marg.matrix()[(0, 1)].norm() <= 1e-12);
    }

    #[test]
    fn sigma_and_base_blocks_are_orthogonal() {
        let spec = probe_spec(0.5);
        let probe = build_probe(&spec).unwrap();
        // The sigma blocks live on A'' flags 0..n-1, the base blocks on flag
        // n; their matrix supports are disjoint.
        let m = probe.matrix();
        let d_b = 6;
        for i in 0..2usize {
            for r in 0..2usize {
                // (S=r, A''=i) x (S=r', A''=2) cross entries vanish.
                for rp in 0..2usize {
                    let row = i * d_b + r * 3 + i;
                    let col = i * d_b + rp * 3 + 2;
                    assert!(m[(row, col)].norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_trajectory_leaves_probe_unchanged() {
        let spec = probe_spec(0.7);
        let traj = make_trajectory(
            DynamicsFamily::Depolarizing { rate: 0.0 },
            0.0,
            vec![0.0, 1.0],
        )
        .unwrap();
        let probe0 = build_probe(&spec).unwrap();
        let probe1 = evolve_probe(&spec, &traj, 1.0).unwrap();
        assert!(probe0.matrix().sub(probe1.matrix()).max_abs() <= 1e-10);
    }

    #[test]
    fn evolution_matches_blockwise_oracle() {
        let spec = probe_spec(0.6);
        let traj = ad_trajectory(5, 1.0);
        let t = traj.grid[3];
        let evolved = evolve_probe(&spec, &traj, t).unwrap();

        // Blockwise assembly oracle.
        let (sigma_t, base_t) = evolved_blocks(&spec, &traj, t).unwrap();
        let evolved_spec = ProbeSpec::new(
            Ensemble::new(spec.base.probs().clone(), base_t).unwrap(),
            sigma_t,
            spec.lambda,
            spec.dims,
        )
        .unwrap();
        let oracle = build_probe(&evolved_spec).unwrap();
        assert!(evolved.matrix().sub(oracle.matrix()).max_abs() <= 1e-10);
    }

    #[test]
    fn marginal_on_a_time_invariant() {
        let spec = probe_spec(0.5);
        let traj = ad_trajectory(20, 1.5);
        let marg0 = build_probe(&spec)
            .unwrap()
            .reduce(&[2, 6], &[0])
            .unwrap();
        for &t in traj.grid.iter().skip(1) {
            let marg_t = evolve_probe(&spec, &traj, t)
                .unwrap()
                .reduce(&[2, 6], &[0])
                .unwrap();
            assert!(marg_t.matrix().sub(marg0.matrix()).max_abs() <= 1e-10);
        }
    }

    #[test]
    fn evolved_ensemble_closed_form_pg() {
        // Amplitude damping on {|0>, |1>}: P_g(t) = (1 + |G(t)|^2) / 2.
        let traj = ad_trajectory(10, 1.0);
        let base = computational_base(1);
        let fam = &traj.family;
        for &t in &traj.grid {
            let ens_t = evolve_ensemble(&base, &traj, t).unwrap();
            let pg = pg_opt(&ens_t, &SolverOptions::default())
                .unwrap()
                .pg_primal;
            let g = fam.decoherence_g(t).unwrap();
            let expect = 0.5 * (1.0 + g * g);
            assert!((pg - expect).abs() <= 1e-9, "t = {t}: {pg} vs {expect}");
        }
    }

    #[test]
    fn ensemble_probabilities_constant_under_evolution() {
        let traj = ad_trajectory(5, 1.0);
        let base = computational_base(1);
        let ens_t = evolve_ensemble(&base, &traj, traj.grid[4]).unwrap();
        assert_eq!(ens_t.probs().weights(), base.probs().weights());
    }

    #[test]
    fn depolarizing_scan_has_no_backflow() {
        let spec = probe_spec(0.9);
        let traj = make_trajectory(
            DynamicsFamily::Depolarizing { rate: 1.0 },
            0.0,
            uniform_grid(0.0, 1.0, 8).unwrap(),
        )
        .unwrap();
        let opts = ScanOptions {
            correlation: CorrelationOptions {
                n_restarts: 1,
                ..CorrelationOptions::default()
            },
            ..ScanOptions::default()
        };
        let report = scan_backflow(&spec, &traj, None, &opts).unwrap();
        assert!(report.backflow_intervals.is_empty());
        for step in &report.steps {
            assert_eq!(step.cp_flag, Some(true));
        }
        for record in &report.verdict_consistency {
            assert_eq!(record.agree, Some(true));
        }
    }

    #[test]
    fn oscillatory_damping_backflow_matches_g_growth() {
        let spec = probe_spec(0.9);
        let traj = ad_trajectory(16, 1.2);
        let opts = ScanOptions {
            correlation: CorrelationOptions {
                n_restarts: 1,
                ..CorrelationOptions::default()
            },
            ..ScanOptions::default()
        };
        let report = scan_backflow(&spec, &traj, None, &opts).unwrap();
        let fam = &traj.family;
        for (k, record) in report.verdict_consistency.iter().enumerate() {
            let g1 = fam.decoherence_g(record.t_start).unwrap().abs();
            let g2 = fam.decoherence_g(record.t_end).unwrap().abs();
            let grows = g2 > g1;
            assert_eq!(
                record.backflow, grows,
                "step {k} [{:.3}, {:.3}]: |G| {:.4} -> {:.4}, dC = {:.3e}",
                record.t_start, record.t_end, g1, g2, record.delta_c
            );
        }
        assert!(!report.backflow_intervals.is_empty());
    }

    #[test]
    fn backflow_magnitude_scales_with_one_minus_lambda() {
        // When the projective POVM is optimal,
        // dC = (1 - lambda) (P_g(ens(t2)) - P_g(ens(t1))).
        let traj = ad_trajectory(10, 1.0);
        let opts = ScanOptions {
            correlation: CorrelationOptions {
                n_restarts: 1,
                ..CorrelationOptions::default()
            },
            ..ScanOptions::default()
        };
        let r1 = scan_backflow(&probe_spec(0.9), &traj, None, &opts).unwrap();
        let r2 = scan_backflow(&probe_spec(0.99), &traj, None, &opts).unwrap();
        // Pick the step with the largest increment at lambda = 0.9.
        let (k, dc1) = r1
            .verdict_consistency
            .iter()
            .enumerate()
            .map(|(k, r)| (k, r.delta_c))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        let dc2 = r2.verdict_consistency[k].delta_c;
        assert!(dc1 > 0.0);
        let ratio = dc2 / dc1;
        assert!(
            (ratio - 0.1).abs() <= 0.02,
            "expected ratio 0.1, got {ratio}"
        );
    }

    #[test]
    fn search_on_markovian_dynamics_finds_no_backflow() {
        let traj = make_trajectory(
            DynamicsFamily::Depolarizing { rate: 1.0 },
            0.0,
            uniform_grid(0.0, 1.0, 5).unwrap(),
        )
        .unwrap();
        let out = search_ensemble(&traj, traj.grid[1], traj.grid[3], 2, 1, 10, 3).unwrap();
        assert!(out.delta_pg <= 2.0 * crate::tol::GAP_TOL);
    }

    #[test]
    fn search_on_damping_revival_finds_known_gain() {
        // |G| grows from t = pi/6 (G = 0) onward; the basis ensemble
        // achieves (|G(t2)|^2 - |G(t1)|^2) / 2.
        let traj = ad_trajectory(16, 1.2);
        let fam = &traj.family;
        // Pick grid points bracketing the revival.
        let t1 = traj.grid[7];
        let t2 = traj.grid[11];
        let g1 = fam.decoherence_g(t1).unwrap();
        let g2 = fam.decoherence_g(t2).unwrap();
        assert!(g2.abs() > g1.abs(), "revival interval misidentified");
        let target = 0.5 * (g2 * g2 - g1 * g1);
        let out = search_ensemble(&traj, t1, t2, 2, 1, 12, 5).unwrap();
        assert!(
            out.delta_pg >= target - 1e-6,
            "search found {} < closed form {}",
            out.delta_pg,
            target
        );
    }

    #[test]
    fn eternal_search_runs_with_ancilla() {
        let traj = make_trajectory(
            DynamicsFamily::RandomUnitaryQubit {
                preset: crate::dynamics::RandomUnitaryPreset::Eternal,
            },
            0.0,
            uniform_grid(0.0, 1.0, 5).unwrap(),
        )
        .unwrap();
        let out = search_ensemble(&traj, traj.grid[1], traj.grid[2], 2, 2, 6, 9).unwrap();
        assert!(out.delta_pg.is_finite());
        assert_eq!(out.ensemble.dim(), 4);
    }

    #[test]
    fn scan_rejects_single_point_grid() {
        let spec = probe_spec(0.5);
        let traj = make_trajectory(
            DynamicsFamily::Depolarizing { rate: 1.0 },
            0.0,
            vec![0.0],
        )
        .unwrap();
        assert!(scan_backflow(&spec, &traj, None, &ScanOptions::default()).is_err());
    }

    #[test]
    fn eq13_projective_identity_along_scan() {
        let spec = probe_spec(0.9);
        let traj = ad_trajectory(6, 0.9);
        let solver = SolverOptions::default();
        for &t in &traj.grid {
            let probe_t = evolve_probe(&spec, &traj, t).unwrap();
            let measured =
                crate::quantum::measure_ensemble(&probe_t, (2, 6), &Povm::projective(2))
                    .unwrap();
            let (effective, _) = measured.effective().unwrap();
            let pg_probe = pg_opt(&effective, &solver).unwrap().pg_primal;
            let ens_t = evolve_ensemble(&spec.base, &traj, t).unwrap();
            let pg_ens = pg_opt(&ens_t, &solver).unwrap().pg_primal;
            let expect = spec.lambda + (1.0 - spec.lambda) * pg_ens;
            assert!(
                (pg_probe - expect).abs() <= 5e-7,
                "t = {t}: {pg_probe} vs {expect}"
            );
        }
    }
}
