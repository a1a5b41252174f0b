//! Batch experiment runner: config ingestion, backflow scans, report
//! persistence (CSV + JSON + SVG).

pub mod config;
pub mod emit;

use backflow_core::correlations::CorrelationOptions;
use backflow_core::dynamics::{make_trajectory, uniform_grid, Trajectory};
use backflow_core::probe::{scan_backflow, search_ensemble, ProbeSpec, ScanOptions, WitnessReport};
use backflow_core::quantum::Ensemble;

use config::{BaseEnsembleSource, ExperimentConfig};

/// Failure modes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2: the config does not parse or validate.
    Validation(String),
    /// Exit 3: a solver failed to converge somewhere (partial results are
    /// still written).
    Solver(String),
    /// Exit 4: output files could not be written.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Solver(m) | CliError::Io(m) => m,
        }
    }
}

/// Load and validate a config file.
pub fn load_config(path: &str) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {path}: {e}")))?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("config parse error: {e}")))?;
    config.validate().map_err(CliError::Validation)?;
    Ok(config)
}

/// Execute a validated config: one scan per lambda, then emit all outputs.
/// Returns the reports; callers decide what to do with the convergence flag.
pub fn execute(config: &ExperimentConfig) -> Result<Vec<WitnessReport>, CliError> {
    let grid = uniform_grid(
        config.grid.t_start,
        config.grid.t_end,
        config.grid.n_points,
    )
    .map_err(|e| CliError::Validation(e.to_string()))?;
    let family = config
        .dynamics_family()
        .map_err(CliError::Validation)?;
    let traj = make_trajectory(family, config.grid.t_start, grid)
        .map_err(|e| CliError::Validation(e.to_string()))?;

    let base = resolve_base_ensemble(config, &traj)?;
    let dims = config.probe_dims(&base);
    let sigma = config
        .sigma_state(dims.dim_sa())
        .map_err(CliError::Validation)?;

    let mut reports = Vec::new();
    for &lambda in &config.probe.lambda_list {
        let spec = ProbeSpec::new(base.clone(), sigma.clone(), lambda, dims)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let opts = ScanOptions {
            correlation: CorrelationOptions {
                n_restarts: config.solver.n_restarts,
                gap_tol: config.solver.gap_tol,
                seed: config.solver.seed,
                ..CorrelationOptions::default()
            },
            ..ScanOptions::default()
        };
        let report = scan_backflow(&spec, &traj, None, &opts)
            .map_err(|e| CliError::Solver(e.to_string()))?;
        reports.push(report);
    }
    Ok(reports)
}

/// Full `run` subcommand: execute and persist. Returns the exit code.
pub fn run(config_path: &str) -> i32 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return e.exit_code();
        }
    };
    let reports = match execute(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return e.exit_code();
        }
    };
    if let Err(e) = emit::emit_all(&reports, &config.outputs) {
        eprintln!("error: {}", e.message());
        return e.exit_code();
    }
    if reports.iter().any(|r| r.no_convergence) {
        eprintln!("warning: solver fell back on at least one grid point (see convergence flags)");
        return 3;
    }
    0
}

/// `validate` subcommand. Returns the exit code.
pub fn validate(config_path: &str) -> i32 {
    match load_config(config_path) {
        Ok(_) => {
            println!("ok");
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

/// `presets` subcommand: list dynamics presets and their parameter keys.
pub fn presets() {
    println!("dynamics presets (config key: dynamics.kind / dynamics.params):");
    println!("  dephasing              gamma_const");
    println!("  amplitude_damping      g_decay, g_freq   [G(t) = exp(-g_decay*t) * cos(g_freq*t)]");
    println!("  random_unitary_qubit   preset = \"eternal\"");
    println!("  depolarizing           rate");
    println!();
    println!("probe base-ensemble sources (config key: probe.base_ensemble):");
    println!("  \"preset:computational\"   equal-weight computational basis states of S");
    println!("  \"search\"                 heuristic search for a witnessing ensemble");
    println!("  inline object            {{\"probs\": [...], \"states\": [[[re, im], ...], ...]}}");
    println!();
    println!("environment: BACKFLOW_LAB_THREADS caps the worker count");
}

fn resolve_base_ensemble(
    config: &ExperimentConfig,
    traj: &Trajectory,
) -> Result<Ensemble, CliError> {
    match &config.probe.base_ensemble {
        BaseEnsembleSource::Preset(name) if name != "search" => config
            .preset_ensemble(name, traj.dim())
            .map_err(CliError::Validation),
        BaseEnsembleSource::Inline(inline) => {
            inline.to_ensemble().map_err(CliError::Validation)
        }
        BaseEnsembleSource::Preset(_) => {
            // Search on the most non-CP step of the trajectory (the full
            // span when every step is CP).
            let steps = backflow_core::channels::cp_divisibility_scan(traj);
            let worst = steps
                .iter()
                .filter_map(|s| s.min_choi_eig.map(|e| (s.t_start, s.t_end, e)))
                .min_by(|a, b| a.2.partial_cmp(&b.2).expect("finite"));
            let (t1, t2) = match worst {
                Some((t1, t2, eig)) if eig < 0.0 => (t1, t2),
                _ => (
                    traj.grid[0],
                    *traj.grid.last().expect("grid validated nonempty"),
                ),
            };
            let d_a_prime = config.probe.d_a_prime.unwrap_or(traj.dim());
            let outcome = search_ensemble(
                traj,
                t1,
                t2,
                config.probe.n_bar,
                d_a_prime,
                40,
                config.solver.seed,
            )
            .map_err(|e| CliError::Solver(e.to_string()))?;
            eprintln!(
                "search: best ensemble gains dPg = {:.6e} on [{t1:.6}, {t2:.6}]",
                outcome.delta_pg
            );
            Ok(outcome.ensemble)
        }
    }
}
