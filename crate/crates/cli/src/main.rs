use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use doa_cli::config::{ExperimentConfig, Sweep, SweepParam};
use doa_cli::experiment::{default_workers, estimate, MonteCarloOptions, WallClock};
use doa_cli::report::{save_estimate_json, save_sweep_csv, save_trace, save_trials_json, SweepRow};
use doa_cli::{run_sweep, CliError};
use doa_core::solver::RefinementMode;

/// Off-grid direction-of-arrival estimation under impulsive noise.
#[derive(Parser, Debug)]
#[command(name = "doa", version, about)]
struct Cli {
    /// Write per-generation knee traces and final fronts as CSV into this directory
    #[arg(long, global = true, value_name = "DIR")]
    emit_trace: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario and estimate its directions
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Write the estimate as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo sweep over one scenario parameter
    Montecarlo {
        #[command(flatten)]
        run: RunArgs,
        /// param=v1,v2,... with param one of snr_db, gsnr_db, grid_interval, snapshots, separation
        #[arg(long)]
        sweep: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// The same sweep once per refinement mode
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "forward,on-grid,taylor")]
        modes: Vec<String>,
        /// Defaults to the config's own grid interval
        #[arg(long)]
        sweep: Option<String>,
        /// Base name; one CSV per mode is written as <stem>-<mode>.csv
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    /// Worker threads (defaults to the available parallelism)
    #[arg(long)]
    workers: Option<usize>,
    /// Measure wall-clock runtimes; output is then no longer reproducible
    #[arg(long)]
    timing: bool,
    /// Also dump every trial record as JSON
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

impl RunArgs {
    fn options(&self) -> Result<MonteCarloOptions, CliError> {
        if self.trials == 0 {
            return Err(CliError::Config("--trials must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        Ok(MonteCarloOptions {
            trials: self.trials,
            base_seed: self.seed,
            workers: self.workers.unwrap_or_else(default_workers),
            timing: self.timing,
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let trace_dir = cli.emit_trace.as_deref();
    match cli.command {
        Command::Estimate { config, seed, out } => run_estimate(&config, seed, out.as_deref(), trace_dir),
        Command::Montecarlo { run, sweep, out } => {
            let cfg = ExperimentConfig::from_file(&run.config)?;
            let sweep: Sweep = sweep.parse()?;
            let opts = run.options()?;
            let rows = run_sweep(&cfg, &sweep, &opts, trace_dir)?;
            save_sweep_csv(&out, &rows)?;
            if let Some(path) = &run.json {
                save_trials_json(path, &rows)?;
            }
            print_rows(None, &rows);
            Ok(())
        }
        Command::Ablate { run, modes, sweep, out } => {
            let cfg = ExperimentConfig::from_file(&run.config)?;
            let sweep = match sweep {
                Some(s) => s.parse()?,
                None => Sweep { param: SweepParam::GridInterval, values: vec![cfg.grid_interval] },
            };
            let modes = modes
                .iter()
                .map(|m| m.parse::<RefinementMode>().map_err(|e| CliError::Config(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let opts = run.options()?;
            for mode in modes {
                let mut mode_cfg = cfg.clone();
                mode_cfg.solver.refinement = mode;
                let mode_trace = trace_dir.map(|d| d.join(mode.name()));
                let rows = run_sweep(&mode_cfg, &sweep, &opts, mode_trace.as_deref())?;
                save_sweep_csv(&suffixed(&out, mode.name(), "csv"), &rows)?;
                if let Some(path) = &run.json {
                    save_trials_json(&suffixed(path, mode.name(), "json"), &rows)?;
                }
                print_rows(Some(mode.name()), &rows);
            }
            Ok(())
        }
    }
}

fn run_estimate(config: &Path, seed: u64, out: Option<&Path>, trace_dir: Option<&Path>) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_file(config)?;
    let result = estimate(&cfg, seed, &WallClock::start())?;
    let doas: Vec<String> = result.doas.iter().map(|d| format!("{d:.4}")).collect();
    println!("K = {}", result.source_number);
    println!("doas = [{}]", doas.join(", "));
    if let Some(path) = out {
        let geometry = cfg.geometry()?;
        save_estimate_json(path, seed, &cfg.doas, geometry.grid.points(), &result)?;
    }
    if let Some(dir) = trace_dir {
        save_trace(dir, "estimate", &result.trace, &result.final_front)?;
    }
    Ok(())
}

/// `runs/out.csv` + `taylor` -> `runs/out-taylor.csv`
fn suffixed(path: &Path, tag: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}-{tag}.{ext}"))
}

fn print_rows(mode: Option<&str>, rows: &[SweepRow]) {
    for row in rows {
        let r = &row.report;
        let rmse = r.rmse.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
        let prefix = mode.map(|m| format!("{m:>8} ")).unwrap_or_default();
        println!(
            "{prefix}{}={:<6} rmse={rmse:<8} admitted={:<4} avg_k={:.3}",
            row.param, row.value, r.rmse_trial_count, r.avg_source_number
        );
    }
}
