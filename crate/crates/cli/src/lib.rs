//! Std companion to `doa-core`: experiment files, the Monte Carlo driver and
//! report writers behind the `doa` binary.

pub mod config;
pub mod experiment;
pub mod report;

use std::path::Path;

use config::{ExperimentConfig, Sweep};
use experiment::{run_monte_carlo, MonteCarloOptions, TrialOutcome};
use report::SweepRow;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// One Monte Carlo report per sweep value, in sweep order.
pub fn run_sweep(
    base: &ExperimentConfig,
    sweep: &Sweep,
    opts: &MonteCarloOptions,
    trace_dir: Option<&Path>,
) -> Result<Vec<SweepRow>, CliError> {
    // Validate every point before spending time on any of them.
    let configs = sweep
        .values
        .iter()
        .map(|&v| base.with_sweep(sweep.param, v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(configs.len());
    for (cfg, &value) in configs.iter().zip(&sweep.values) {
        let name = sweep.param.name();
        let (report, outcomes) = run_monte_carlo(cfg, &format!("{name}={value}"), opts);
        if let Some(dir) = trace_dir {
            save_traces(dir, &format!("{name}_{value}"), &outcomes)?;
        }
        rows.push(SweepRow { param: name.to_string(), value, report });
    }
    Ok(rows)
}

fn save_traces(dir: &Path, prefix: &str, outcomes: &[TrialOutcome]) -> Result<(), CliError> {
    for o in outcomes {
        report::save_trace(dir, &format!("{prefix}_trial{}", o.record.trial), &o.trace, &o.front)?;
    }
    Ok(())
}
