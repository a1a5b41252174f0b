//! Experiment configuration: JSON schema and validation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use backflow_core::dynamics::DynamicsFamily;
use backflow_core::numkernel::CMatrix;
use backflow_core::probe::ProbeDims;
use backflow_core::quantum::{DensityMatrix, Ensemble, ProbabilityDistribution};

/// Top-level experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dynamics: DynamicsFamily,
    pub grid: GridConfig,
    pub probe: ProbeConfig,
    pub solver: SolverConfig,
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub n_bar: usize,
    pub lambda_list: Vec<f64>,
    pub sigma: SigmaChoice,
    pub base_ensemble: BaseEnsembleSource,
    /// Ancilla dimension; defaults to 1 for presets/inline (inferred from
    /// state dimensions) and to `d_S` for search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_a_prime: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaChoice {
    /// `"maximally_mixed"`
    Named(String),
    /// Inline density matrix, rows of `[re, im]` pairs.
    Matrix(Vec<Vec<[f64; 2]>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseEnsembleSource {
    /// Inline `{probs, states}`.
    Inline(InlineEnsemble),
    /// `"preset:<name>"` or `"search"`.
    Preset(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InlineEnsemble {
    pub probs: Vec<f64>,
    pub states: Vec<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gap_tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    pub csv_path: String,
    pub svg_path: String,
    pub json_path: String,
}

impl ExperimentConfig {
    /// Structural validation; returns a message suitable for exit code 2.
    pub fn validate(&self) -> Result<(), String> {
        if self.grid.n_points < 2 {
            return Err(format!(
                "grid.n_points = {} but a scan needs at least 2 points",
                self.grid.n_points
            ));
        }
        if self.grid.t_end.is_nan() || self.grid.t_end <= self.grid.t_start {
            return Err("grid.t_end must exceed grid.t_start".into());
        }
        if self.probe.n_bar < 1 {
            return Err("probe.n_bar must be at least 1".into());
        }
        if self.probe.lambda_list.is_empty() {
            return Err("probe.lambda_list is empty".into());
        }
        for &l in &self.probe.lambda_list {
            if !(0.0..1.0).contains(&l) {
                return Err(format!("lambda = {l} outside [0, 1)"));
            }
        }
        if self.solver.gap_tol.is_nan() || self.solver.gap_tol <= 0.0 {
            return Err("solver.gap_tol must be positive".into());
        }
        match &self.probe.sigma {
            SigmaChoice::Named(name) if name == "maximally_mixed" => {}
            SigmaChoice::Named(name) => {
                return Err(format!(
                    "unknown sigma choice {name:?} (expected \"maximally_mixed\" or a matrix)"
                ))
            }
            SigmaChoice::Matrix(_) => {}
        }
        match &self.probe.base_ensemble {
            BaseEnsembleSource::Preset(s)
                if s == "search" || s.strip_prefix("preset:").is_some() => {}
            BaseEnsembleSource::Preset(s) => {
                return Err(format!(
                    "unknown base_ensemble {s:?} (expected \"preset:<name>\", \"search\" or an inline ensemble)"
                ))
            }
            BaseEnsembleSource::Inline(inline) => {
                inline.to_ensemble()?;
                if inline.probs.len() != self.probe.n_bar {
                    return Err(format!(
                        "inline ensemble has {} states but n_bar = {}",
                        inline.probs.len(),
                        self.probe.n_bar
                    ));
                }
            }
        }
        // Dynamics parameters are checked by constructing the t=0 channel.
        self.dynamics
            .channel_at(0.0)
            .map_err(|e| format!("dynamics: {e}"))?;
        Ok(())
    }

    /// The dynamics family with the `"search"` string normalized away.
    pub fn dynamics_family(&self) -> Result<DynamicsFamily, String> {
        Ok(self.dynamics.clone())
    }

    /// Probe dimensions implied by the base ensemble.
    pub fn probe_dims(&self, base: &Ensemble) -> ProbeDims {
        let d_s = self.dynamics.dim();
        let d_a_prime = base.dim() / d_s;
        ProbeDims {
            d_s,
            d_a_prime,
            n_bar: base.len(),
        }
    }

    /// Resolve a `"preset:<name>"` ensemble string.
    pub fn preset_ensemble(&self, spec: &str, d_s: usize) -> Result<Ensemble, String> {
        let name = match spec.strip_prefix("preset:") {
            Some(n) => n,
            None if spec == "search" => {
                return Err("search source resolved elsewhere".into());
            }
            None => return Err(format!("unknown base ensemble source {spec:?}")),
        };
        match name {
            "computational" => {
                let n = self.probe.n_bar;
                if n > d_s {
                    return Err(format!(
                        "preset:computational needs n_bar <= d_S = {d_s}, got {n}"
                    ));
                }
                let states: Result<Vec<DensityMatrix>, String> = (0..n)
                    .map(|k| {
                        let mut ket = vec![Complex64::new(0.0, 0.0); d_s];
                        ket[k] = Complex64::new(1.0, 0.0);
                        DensityMatrix::pure(&ket).map_err(|e| e.to_string())
                    })
                    .collect();
                Ensemble::new(ProbabilityDistribution::uniform(n), states?)
                    .map_err(|e| e.to_string())
            }
            other => Err(format!("unknown ensemble preset {other:?}")),
        }
    }

    /// Resolve the sigma block for the given `S (x) A'` dimension.
    pub fn sigma_state(&self, dim_sa: usize) -> Result<DensityMatrix, String> {
        match &self.probe.sigma {
            SigmaChoice::Named(_) => Ok(DensityMatrix::maximally_mixed(dim_sa)),
            SigmaChoice::Matrix(rows) => {
                let m = matrix_from_rows(rows)?;
                if m.rows() != dim_sa {
                    return Err(format!(
                        "sigma has dimension {} but S (x) A' has dimension {dim_sa}",
                        m.rows()
                    ));
                }
                DensityMatrix::new(m).map_err(|e| e.to_string())
            }
        }
    }
}

impl BaseEnsembleSource {
    pub fn is_search(&self) -> bool {
        matches!(self, BaseEnsembleSource::Preset(s) if s == "search")
    }
}

impl InlineEnsemble {
    pub fn to_ensemble(&self) -> Result<Ensemble, String> {
        let probs =
            ProbabilityDistribution::new(self.probs.clone()).map_err(|e| e.to_string())?;
        let states: Result<Vec<DensityMatrix>, String> = self
            .states
            .iter()
            .map(|rows| {
                DensityMatrix::new(matrix_from_rows(rows)?).map_err(|e| e.to_string())
            })
            .collect();
        Ensemble::new(probs, states?).map_err(|e| e.to_string())
    }
}

fn matrix_from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix, String> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err("matrix must be square and nonempty".into());
    }
    let entries: Vec<Complex64> = rows
        .iter()
        .flat_map(|r| r.iter().map(|&[re, im]| Complex64::new(re, im)))
        .collect();
    CMatrix::new(n, n, entries).map_err(|e| e.to_string())
}
