//! Closed-form time-parametrized qubit channel families used as test
//! dynamics.
//!
//! Every family has an analytic decoherence profile with a closed-form rate
//! integral, so divisibility verdicts downstream are never polluted by
//! integration error:
//!
//! - `dephasing`: off-diagonals damped by `q(t) = exp(-2 gamma t)`.
//! - `amplitude_damping`: decoherence function `G(t) = exp(-g_decay t) cos(g_freq t)`.
//! - `random_unitary_qubit` (preset `eternal`): Pauli channel with rates
//!   `(1, 1, -tanh t)`; CPTP at every time, yet no intermediate map is CP.
//! - `depolarizing`: Markovian semigroup `rho -> e^{-rt} rho + (1-e^{-rt}) I/2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::QuantumChannel;
use crate::error::{Error, Result};
use crate::numkernel::CMatrix;

/// Preset selector for the random-unitary qubit family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomUnitaryPreset {
    /// Rates `gamma_1 = gamma_2 = 1`, `gamma_3(t) = -tanh t`.
    Eternal,
}

/// A time-parametrized channel family `t -> Lambda(t, t0)` evaluated at
/// elapsed time `s = t - t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum DynamicsFamily {
    Dephasing { gamma_const: f64 },
    AmplitudeDamping { g_decay: f64, g_freq: f64 },
    RandomUnitaryQubit { preset: RandomUnitaryPreset },
    Depolarizing { rate: f64 },
}

impl DynamicsFamily {
    /// Exact preset name as used by configs and the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Dephasing { .. } => "dephasing",
            Self::AmplitudeDamping { .. } => "amplitude_damping",
            Self::RandomUnitaryQubit { .. } => "random_unitary_qubit",
            Self::Depolarizing { .. } => "depolarizing",
        }
    }

    pub fn dim(&self) -> usize {
        2
    }

    /// Channel at elapsed time `s >= 0`.
    pub fn channel_at(&self, s: f64) -> Result<QuantumChannel> {
        match self {
            Self::Dephasing { gamma_const } => dephasing_at(s, *gamma_const),
            Self::AmplitudeDamping { g_decay, g_freq } => {
                amplitude_damping_at(s, *g_decay, *g_freq)
            }
            Self::RandomUnitaryQubit { preset } => random_unitary_qubit_at(s, *preset),
            Self::Depolarizing { rate } => depolarizing_at(s, *rate),
        }
    }

    /// Decoherence function of the amplitude-damping family, when applicable.
    pub fn decoherence_g(&self, s: f64) -> Option<f64> {
        match self {
            Self::AmplitudeDamping { g_decay, g_freq } => {
                Some((-g_decay * s).exp() * (g_freq * s).cos())
            }
            _ => None,
        }
    }
}

/// Qubit dephasing with constant rate: `q(s) = exp(-2 gamma s)` multiplies
/// the off-diagonal entries.
pub fn dephasing_at(s: f64, gamma_const: f64) -> Result<QuantumChannel> {
    if gamma_const < 0.0 {
        return Err(Error::InvalidRate(format!(
            "dephasing rate {gamma_const} must be nonnegative"
        )));
    }
    let q = (-2.0 * gamma_const * s).exp();
    if !(q > 0.0 && q <= 1.0 + 1e-12) {
        return Err(Error::InvalidRate(format!("decoherence factor q = {q}")));
    }
    let k0 = CMatrix::identity(2).scale_re(((1.0 + q) / 2.0).sqrt());
    let k1 = CMatrix::diag(&[1.0, -1.0]).scale_re(((1.0 - q) / 2.0).sqrt());
    QuantumChannel::from_kraus(vec![k0, k1])
}

/// Amplitude damping with decoherence function
/// `G(s) = exp(-g_decay s) cos(g_freq s)`; Kraus
/// `[[1,0],[0,G]]` and `[[0,sqrt(1-G^2)],[0,0]]`.
pub fn amplitude_damping_at(s: f64, g_decay: f64, g_freq: f64) -> Result<QuantumChannel> {
    if g_decay < 0.0 {
        return Err(Error::InvalidRate(format!(
            "amplitude damping decay {g_decay} must be nonnegative"
        )));
    }
    let g = (-g_decay * s).exp() * (g_freq * s).cos();
    if g.abs() > 1.0 + 1e-12 {
        return Err(Error::InvalidRate(format!("|G| = {} exceeds 1", g.abs())));
    }
    let g = g.clamp(-1.0, 1.0);
    let zero = Complex64::new(0.0, 0.0);
    let k0 = CMatrix::new(
        2,
        2,
        vec![
            Complex64::new(1.0, 0.0),
            zero,
            zero,
            Complex64::new(g, 0.0),
        ],
    )?;
    let k1 = CMatrix::new(
        2,
        2,
        vec![
            zero,
            Complex64::new((1.0 - g * g).max(0.0).sqrt(), 0.0),
            zero,
            zero,
        ],
    )?;
    QuantumChannel::from_kraus(vec![k0, k1])
}

/// Pauli eigenvalues of the eternal preset:
/// `lambda_j(s) = exp(-2 int_0^s (gamma_k + gamma_l))` for `{j,k,l} = {1,2,3}`
/// with `gamma_1 = gamma_2 = 1`, `gamma_3 = -tanh`, whose integral is
/// `log cosh s`.
pub fn eternal_pauli_eigenvalues(s: f64) -> [f64; 3] {
    let int_tanh = s.cosh().ln();
    let lam1 = (-2.0 * (s - int_tanh)).exp();
    let lam3 = (-4.0 * s).exp();
    [lam1, lam1, lam3]
}

/// Random-unitary qubit channel `rho -> sum_k p_k sigma_k rho sigma_k`.
pub fn random_unitary_qubit_at(s: f64, preset: RandomUnitaryPreset) -> Result<QuantumChannel> {
    let [lam1, lam2, lam3] = match preset {
        RandomUnitaryPreset::Eternal => eternal_pauli_eigenvalues(s),
    };
    pauli_channel_from_eigenvalues(lam1, lam2, lam3, s)
}

/// Build a Pauli channel from its transfer eigenvalues; errors when the
/// induced mixing probabilities leave the simplex (CPTP violation).
pub fn pauli_channel_from_eigenvalues(
    lam1: f64,
    lam2: f64,
    lam3: f64,
    t: f64,
) -> Result<QuantumChannel> {
    let p0 = (1.0 + lam1 + lam2 + lam3) / 4.0;
    let p1 = (1.0 + lam1 - lam2 - lam3) / 4.0;
    let p2 = (1.0 - lam1 + lam2 - lam3) / 4.0;
    let p3 = (1.0 - lam1 - lam2 + lam3) / 4.0;
    let probs = [p0, p1, p2, p3];
    if let Some(&bad) = probs.iter().find(|&&p| p < -1e-12) {
        return Err(Error::CptpViolation { t, min_eig: bad });
    }
    let c = Complex64::new;
    let paulis = [
        CMatrix::identity(2),
        CMatrix::new(2, 2, vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])?,
        CMatrix::new(2, 2, vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])?,
        CMatrix::diag(&[1.0, -1.0]),
    ];
    let kraus: Vec<CMatrix> = probs
        .iter()
        .zip(&paulis)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, sigma)| sigma.scale_re(p.sqrt()))
        .collect();
    QuantumChannel::from_kraus(kraus)
}

/// Depolarizing semigroup `rho -> e^{-r s} rho + (1 - e^{-r s}) I/2`.
pub fn depolarizing_at(s: f64, rate: f64) -> Result<QuantumChannel> {
    if rate < 0.0 {
        return Err(Error::InvalidRate(format!(
            "depolarizing rate {rate} must be nonnegative"
        )));
    }
    let q = (-rate * s).exp();
    pauli_channel_from_eigenvalues(q, q, q, s)
}

/// A dynamics family sampled on a strictly increasing time grid, with one
/// validated CPTP channel per grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub family: DynamicsFamily,
    pub t0: f64,
    pub grid: Vec<f64>,
    pub channels: Vec<QuantumChannel>,
}

impl Trajectory {
    /// Index of a grid time, matched within 1e-12.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.grid
            .iter()
            .position(|&g| (g - t).abs() <= 1e-12)
            .ok_or_else(|| Error::Grid(format!("t = {t} is not on the trajectory grid")))
    }

    pub fn channel_at(&self, t: f64) -> Result<&QuantumChannel> {
        Ok(&self.channels[self.index_of(t)?])
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }
}

/// Validate and materialize a trajectory. The grid must start at `t0` and
/// strictly increase; the channel at `t0` must be the identity.
pub fn make_trajectory(family: DynamicsFamily, t0: f64, grid: Vec<f64>) -> Result<Trajectory> {
    if grid.is_empty() {
        return Err(Error::Grid("empty grid".into()));
    }
    if (grid[0] - t0).abs() > 1e-12 {
        return Err(Error::Grid(format!(
            "grid starts at {} instead of t0 = {t0}",
            grid[0]
        )));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid("grid must be strictly increasing".into()));
    }
    let mut channels = Vec::with_capacity(grid.len());
    for &t in &grid {
        let ch = family.channel_at(t - t0)?;
        let min_eig = ch.min_choi_eig();
        if min_eig < -1e-9 {
            return Err(Error::CptpViolation { t, min_eig });
        }
        channels.push(ch);
    }
    let id = QuantumChannel::identity(family.dim());
    if channels[0].superop().sub(id.superop()).max_abs() > 1e-10 {
        return Err(Error::Grid("channel at t0 is not the identity".into()));
    }
    Ok(Trajectory {
        family,
        t0,
        grid,
        channels,
    })
}

/// Uniform grid of `n` points on `[t_start, t_end]`.
pub fn uniform_grid(t_start: f64, t_end: f64, n: usize) -> Result<Vec<f64>> {
    if n < 1 || (n == 1 && t_end != t_start) || t_end < t_start {
        return Err(Error::Grid(format!(
            "invalid grid spec [{t_start}, {t_end}] with {n} points"
        )));
    }
    if n == 1 {
        return Ok(vec![t_start]);
    }
    let step = (t_end - t_start) / (n - 1) as f64;
    Ok((0..n).map(|k| t_start + step * k as f64).collect())
}
