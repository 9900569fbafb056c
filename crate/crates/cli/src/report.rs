//! CSV, JSON and trace writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use doa_core::metrics::{MonteCarloReport, TrialRecord};
use doa_core::moea::Objectives;
use doa_core::solver::{EstimationResult, TraceEntry};

use crate::CliError;

pub const CSV_HEADER: [&str; 6] = ["sweep_param", "value", "rmse", "admitted", "avg_k", "mean_runtime_s"];

/// One row of a sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub report: MonteCarloReport,
}

/// Sweep table. An undefined RMSE (no admitted trial) is written as `NA`.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io_error)?;
    for row in rows {
        let r = &row.report;
        w.write_record([
            row.param.clone(),
            row.value.to_string(),
            r.rmse.map_or_else(|| "NA".to_string(), |v| v.to_string()),
            r.rmse_trial_count.to_string(),
            r.avg_source_number.to_string(),
            r.mean_runtime_seconds.to_string(),
        ])
        .map_err(io_error)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn save_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    write_sweep_csv(file, rows)
}

#[derive(Debug, Serialize)]
pub struct TrialJson<'a> {
    pub sweep_param: &'a str,
    pub value: f64,
    pub trial: u64,
    pub seed: u64,
    pub estimated_doas: &'a [f64],
    pub source_number: usize,
    pub runtime_seconds: f64,
    pub converged: bool,
    pub generations: usize,
    pub failure: Option<&'a str>,
}

impl<'a> TrialJson<'a> {
    pub fn new(param: &'a str, value: f64, t: &'a TrialRecord) -> Self {
        Self {
            sweep_param: param,
            value,
            trial: t.trial,
            seed: t.seed,
            estimated_doas: &t.estimated_doas,
            source_number: t.source_number,
            runtime_seconds: t.runtime_seconds,
            converged: t.converged,
            generations: t.generations,
            failure: t.failure.as_deref(),
        }
    }
}

/// Every trial of every sweep point as a JSON array.
pub fn save_trials_json(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let records: Vec<TrialJson> = rows
        .iter()
        .flat_map(|row| row.report.trials.iter().map(move |t| TrialJson::new(&row.param, row.value, t)))
        .collect();
    write_json(path, &records)
}

#[derive(Debug, Serialize)]
pub struct EstimateJson<'a> {
    pub seed: u64,
    pub true_doas: &'a [f64],
    pub estimated_doas: &'a [f64],
    pub source_number: usize,
    pub knee_sources: usize,
    pub knee_loss: f64,
    pub converged: bool,
    pub generations: usize,
    /// `(grid angle, offset)` for every refined grid point.
    pub refined_points: Vec<(f64, f64)>,
}

pub fn save_estimate_json(
    path: &Path,
    seed: u64,
    truth: &[f64],
    grid: &[f64],
    result: &EstimationResult,
) -> Result<(), CliError> {
    let refined_points = grid
        .iter()
        .zip(result.mismatch.offsets())
        .filter(|(_, &z)| z != 0.0)
        .map(|(&g, &z)| (g, z))
        .collect();
    write_json(
        path,
        &EstimateJson {
            seed,
            true_doas: truth,
            estimated_doas: &result.doas,
            source_number: result.source_number,
            knee_sources: result.knee_objectives.sources,
            knee_loss: result.knee_objectives.loss,
            converged: result.converged,
            generations: result.generations,
            refined_points,
        },
    )
}

/// `<stem>_trace.csv` with one line per outer generation and
/// `<stem>_front.csv` with the final first front.
pub fn save_trace(dir: &Path, stem: &str, trace: &[TraceEntry], front: &[Objectives]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let opt = |v: Option<String>| v.unwrap_or_default();

    let path = dir.join(format!("{stem}_trace.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(io_error)?;
    w.write_record(["generation", "knee_sources", "knee_loss", "sigma", "inner_generations", "elapsed_s"])
        .map_err(io_error)?;
    for t in trace {
        w.write_record([
            t.generation.to_string(),
            opt(t.knee_sources.map(|v| v.to_string())),
            opt(t.knee_loss.map(|v| v.to_string())),
            t.sigma.to_string(),
            t.inner_generations.to_string(),
            t.elapsed_seconds.to_string(),
        ])
        .map_err(io_error)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;

    let path = dir.join(format!("{stem}_front.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(io_error)?;
    w.write_record(["sources", "loss"]).map_err(io_error)?;
    let mut sorted = front.to_vec();
    sorted.sort_by(|a, b| a.sources.cmp(&b.sources).then(a.loss.total_cmp(&b.loss)));
    sorted.dedup();
    for p in sorted {
        w.write_record([p.sources.to_string(), p.loss.to_string()]).map_err(io_error)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn io_error(e: csv::Error) -> CliError {
    CliError::Runtime(e.to_string())
}
