//! Deterministic report emission: CSV table, lossless JSON, hand-built SVG.

use std::fmt::Write as _;

use backflow_core::probe::WitnessReport;
use serde::{Deserialize, Serialize};

use crate::config::OutputConfig;
use crate::CliError;

/// CSV header, one row per (lambda, grid point). Step-resolved columns
/// (`min_choi_eig_step`, `cp_flag`, `backflow_flag`) describe the interval
/// ending at the row's time and are empty on the first row of each lambda
/// and on indeterminate steps.
pub const CSV_HEADER: &str = "time,lambda,c_value,c_projective,pg_ensemble,pg_perp,pg_par,min_choi_eig_step,cp_flag,backflow_flag,gap,restarts_used";

/// Format with 12 significant digits (deterministic across platforms).
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{x:.11e}")
}

/// Write the CSV table for a batch of per-lambda reports.
pub fn emit_csv(reports: &[WitnessReport], path: &str) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for report in reports {
        for (k, &t) in report.grid.iter().enumerate() {
            let c = &report.c_values[k];
            let (min_eig, cp_flag, backflow) = if k == 0 {
                (String::new(), String::new(), String::new())
            } else {
                let step = &report.steps[k - 1];
                let record = &report.verdict_consistency[k - 1];
                (
                    step.min_choi_eig.map(sig12).unwrap_or_default(),
                    step.cp_flag
                        .map(|f| f.to_string())
                        .unwrap_or_default(),
                    record.backflow.to_string(),
                )
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                sig12(t),
                sig12(report.lambda),
                sig12(c.value),
                sig12(report.c_projective[k]),
                sig12(report.pg_ensemble[k]),
                sig12(report.pg_perp[k]),
                sig12(report.pg_par[k]),
                min_eig,
                cp_flag,
                backflow,
                sig12(c.gap),
                c.restarts_used,
            );
        }
    }
    std::fs::write(path, out).map_err(|e| CliError::Io(format!("writing {path}: {e}")))
}

/// Envelope for the JSON report file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub reports: Vec<WitnessReport>,
}

/// Lossless JSON dump (shortest round-trippable float representation).
pub fn emit_json(reports: &[WitnessReport], path: &str) -> Result<(), CliError> {
    let file = ReportFile {
        reports: reports.to_vec(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Io(format!("serializing JSON: {e}")))?;
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("writing {path}: {e}")))
}

/// Reload a JSON report file.
pub fn load_json(path: &str) -> Result<ReportFile, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading {path}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("parsing {path}: {e}")))
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Single-panel SVG: correlation curves per lambda, the ensemble guessing
/// probability, and shaded non-CP steps. No plotting dependency; paths are
/// emitted by hand.
pub fn emit_svg(reports: &[WitnessReport], path: &str) -> Result<(), CliError> {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");

    if let Some(first) = reports.first() {
        let t0 = *first.grid.first().expect("nonempty grid");
        let t1 = *first.grid.last().expect("nonempty grid");
        // y range: cover all curves with a small pad.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in reports {
            for c in &r.c_values {
                lo = lo.min(c.value);
                hi = hi.max(c.value);
            }
            for &v in &r.pg_ensemble {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let pad = ((hi - lo) * 0.08).max(1e-6);
        let (lo, hi) = (lo - pad, hi + pad);
        let x = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
        let y = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);

        // Shade non-CP (light red) and indeterminate (light gray) steps.
        for step in &first.steps {
            let fill = match step.cp_flag {
                Some(false) => Some("#fddcdc"),
                None => Some("#e8e8e8"),
                Some(true) => None,
            };
            if let Some(fill) = fill {
                let _ = writeln!(
                    svg,
                    "<rect x=\"{:.3}\" y=\"{MARGIN}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{fill}\"/>",
                    x(step.t_start),
                    x(step.t_end) - x(step.t_start),
                    HEIGHT - 2.0 * MARGIN,
                );
            }
        }

        // Axes.
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\" stroke=\"black\"/>",
            HEIGHT - MARGIN,
            WIDTH - MARGIN,
            HEIGHT - MARGIN
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{:.3}\" stroke=\"black\"/>",
            HEIGHT - MARGIN
        );
        let _ = writeln!(
            svg,
            "<text x=\"{MARGIN}\" y=\"{:.3}\" font-size=\"12\">t = {}</text>",
            HEIGHT - MARGIN + 16.0,
            sig12(t0)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"12\" text-anchor=\"end\">t = {}</text>",
            WIDTH - MARGIN,
            HEIGHT - MARGIN + 16.0,
            sig12(t1)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"12\">{}</text>",
            8.0,
            HEIGHT - MARGIN,
            sig12(lo)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"12\">{}</text>",
            8.0,
            MARGIN + 4.0,
            sig12(hi)
        );

        // P_g of the bare ensemble (dashed, from the first report).
        let mut points = String::new();
        for (k, &t) in first.grid.iter().enumerate() {
            let _ = write!(points, "{:.3},{:.3} ", x(t), y(first.pg_ensemble[k]));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#555555\" stroke-dasharray=\"5,4\" stroke-width=\"1.5\"/>",
            points.trim_end()
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"12\" fill=\"#555555\">Pg(ensemble)</text>",
            WIDTH - MARGIN - 110.0,
            MARGIN + 14.0
        );

        // C(t) per lambda.
        for (idx, r) in reports.iter().enumerate() {
            let color = PALETTE[idx % PALETTE.len()];
            let mut points = String::new();
            for (k, &t) in r.grid.iter().enumerate() {
                let _ = write!(points, "{:.3},{:.3} ", x(t), y(r.c_values[k].value));
            }
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                points.trim_end()
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"12\" fill=\"{color}\">C(t), lambda = {}</text>",
                WIDTH - MARGIN - 110.0,
                MARGIN + 30.0 + 16.0 * idx as f64,
                r.lambda
            );
        }
    }
    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg).map_err(|e| CliError::Io(format!("writing {path}: {e}")))
}

/// Write all three outputs of a run.
pub fn emit_all(reports: &[WitnessReport], outputs: &OutputConfig) -> Result<(), CliError> {
    emit_csv(reports, &outputs.csv_path)?;
    emit_json(reports, &outputs.json_path)?;
    emit_svg(reports, &outputs.svg_path)
}
