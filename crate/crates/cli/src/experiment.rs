//! Trial synthesis and the Monte Carlo worker pool.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use doa_core::array::{synthesize, SnapshotMatrix};
use doa_core::metrics::{MonteCarloReport, TrialRecord};
use doa_core::moea::Objectives;
use doa_core::rng::{derive_seed, stream, trial_seed};
use doa_core::solver::{run_with_clock, Clock, EstimationResult, NoClock, TraceEntry};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Wall-clock time since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Clock for WallClock {
    fn elapsed_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Noisy snapshots for one seed: signal and noise come from separate streams.
pub fn simulate(cfg: &ExperimentConfig, seed: u64) -> Result<SnapshotMatrix, CliError> {
    let scenario = cfg.scenario()?;
    let (clean, _) = synthesize(&scenario, derive_seed(seed, stream::SIGNAL)).map_err(runtime_error)?;
    let noise = cfg.noise_model()?.sample(cfg.num_sensors, cfg.snapshots, derive_seed(seed, stream::NOISE));
    clean.with_noise(&noise).map_err(runtime_error)
}

/// Snapshots plus a solver run for one seed.
pub fn estimate(cfg: &ExperimentConfig, seed: u64, clock: &dyn Clock) -> Result<EstimationResult, CliError> {
    let y = simulate(cfg, seed)?;
    let geometry = cfg.geometry()?;
    run_with_clock(&y, &geometry, &cfg.solver, derive_seed(seed, stream::SOLVER), clock).map_err(runtime_error)
}

/// Everything one trial produced; the trace and front are kept for `--emit-trace`.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub trace: Vec<TraceEntry>,
    pub front: Vec<Objectives>,
}

pub fn run_trial(cfg: &ExperimentConfig, base_seed: u64, index: u64, timing: bool) -> TrialOutcome {
    let seed = trial_seed(base_seed, index);
    let clock = WallClock::start();
    let result = if timing { estimate(cfg, seed, &clock) } else { estimate(cfg, seed, &NoClock) };
    let runtime_seconds = if timing { clock.elapsed_seconds() } else { 0.0 };
    match result {
        Ok(r) => TrialOutcome {
            record: TrialRecord {
                trial: index,
                seed,
                source_number: r.source_number,
                estimated_doas: r.doas,
                runtime_seconds,
                converged: r.converged,
                generations: r.generations,
                failure: None,
            },
            trace: r.trace,
            front: r.final_front,
        },
        Err(e) => TrialOutcome {
            record: TrialRecord {
                trial: index,
                seed,
                source_number: 0,
                estimated_doas: Vec::new(),
                runtime_seconds,
                converged: false,
                generations: 0,
                failure: Some(e.to_string()),
            },
            trace: Vec::new(),
            front: Vec::new(),
        },
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MonteCarloOptions {
    pub trials: u64,
    pub base_seed: u64,
    pub workers: usize,
    /// Record wall-clock runtimes. Off by default so output is reproducible.
    pub timing: bool,
}

/// Runs `trials` independent trials on `workers` threads. Outcomes are
/// returned in trial order whatever order they finished in.
pub fn run_trials(cfg: &ExperimentConfig, opts: &MonteCarloOptions) -> Vec<TrialOutcome> {
    let next = AtomicU64::new(0);
    let done = Mutex::new(Vec::with_capacity(opts.trials as usize));
    let workers = opts.workers.clamp(1, opts.trials.max(1) as usize);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= opts.trials {
                    break;
                }
                let outcome = run_trial(cfg, opts.base_seed, index, opts.timing);
                done.lock().unwrap().push(outcome);
            });
        }
    });
    let mut outcomes = done.into_inner().unwrap();
    outcomes.sort_by_key(|o| o.record.trial);
    outcomes
}

pub fn run_monte_carlo(
    cfg: &ExperimentConfig,
    descriptor: &str,
    opts: &MonteCarloOptions,
) -> (MonteCarloReport, Vec<TrialOutcome>) {
    let outcomes = run_trials(cfg, opts);
    let records = outcomes.iter().map(|o| o.record.clone()).collect();
    (MonteCarloReport::aggregate(descriptor, &cfg.doas, records), outcomes)
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn runtime_error(e: doa_core::Error) -> CliError {
    CliError::Runtime(e.to_string())
}
