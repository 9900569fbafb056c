//! Flat `key = value` experiment files.
//!
//! ```text
//! # three sources on a 2 degree grid
//! num_sensors = 8
//! grid_interval = 2
//! doas = -2, 6, 20
//! noise = gmm
//! snr_db = 10
//! ```
//!
//! Unknown keys are rejected so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use doa_core::array::{ArrayConfig, Geometry, Grid, Scenario};
use doa_core::noise::{GmmNoiseModel, NoiseModel, SasNoiseModel};
use doa_core::solver::SolverConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Gmm,
    Sas,
}

impl FromStr for NoiseKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "none" => Ok(NoiseKind::None),
            "gmm" => Ok(NoiseKind::Gmm),
            "sas" => Ok(NoiseKind::Sas),
            other => Err(CliError::Config(format!("unknown noise model `{other}` (none, gmm, sas)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub snr_db: f64,
    pub outlier_prob: f64,
    pub gsnr_db: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub num_sensors: usize,
    pub spacing: f64,
    pub grid_interval: f64,
    pub doas: Vec<f64>,
    pub snapshots: usize,
    pub source_power: f64,
    pub noise: NoiseSpec,
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_sensors: 8,
            spacing: 0.5,
            grid_interval: 2.0,
            doas: vec![-2.0, 6.0, 20.0],
            snapshots: 20,
            source_power: 1.0,
            noise: NoiseSpec { kind: NoiseKind::None, snr_db: 10.0, outlier_prob: 0.1, gsnr_db: 10.0, alpha: 1.4 },
            solver: SolverConfig::default(),
        }
    }
}

/// Parameters `montecarlo --sweep` may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    SnrDb,
    GsnrDb,
    GridInterval,
    Snapshots,
    /// Moves the second source to `doas[0] + value`, dropping any others.
    Separation,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::SnrDb => "snr_db",
            SweepParam::GsnrDb => "gsnr_db",
            SweepParam::GridInterval => "grid_interval",
            SweepParam::Snapshots => "snapshots",
            SweepParam::Separation => "separation",
        }
    }
}

impl FromStr for SweepParam {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "snr_db" => Ok(SweepParam::SnrDb),
            "gsnr_db" => Ok(SweepParam::GsnrDb),
            "grid_interval" => Ok(SweepParam::GridInterval),
            "snapshots" => Ok(SweepParam::Snapshots),
            "separation" => Ok(SweepParam::Separation),
            other => Err(CliError::Config(format!(
                "`{other}` is not sweepable (snr_db, gsnr_db, grid_interval, snapshots, separation)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = CliError;

    /// `param=v1,v2,...`
    fn from_str(s: &str) -> Result<Self, CliError> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("sweep `{s}` should look like param=v1,v2")))?;
        let param = name.trim().parse()?;
        let values = parse_list(list).map_err(|e| CliError::Config(format!("sweep values: {e}")))?;
        if values.is_empty() {
            return Err(CliError::Config("sweep needs at least one value".into()));
        }
        Ok(Sweep { param, values })
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    /// Copy with one sweep parameter replaced.
    pub fn with_sweep(&self, param: SweepParam, value: f64) -> Result<Self, CliError> {
        let mut out = self.clone();
        match param {
            SweepParam::SnrDb => out.noise.snr_db = value,
            SweepParam::GsnrDb => out.noise.gsnr_db = value,
            SweepParam::GridInterval => out.grid_interval = value,
            SweepParam::Snapshots => out.snapshots = to_count("snapshots", value)?,
            SweepParam::Separation => {
                let first = out.doas[0];
                out.doas = vec![first, first + value];
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn geometry(&self) -> Result<Geometry, CliError> {
        let array = ArrayConfig::new(self.num_sensors, self.spacing).map_err(config_error)?;
        let grid = Grid::uniform(self.grid_interval).map_err(config_error)?;
        Ok(Geometry::new(array, grid))
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        Scenario::new(self.geometry()?, self.doas.clone(), self.snapshots, self.source_power).map_err(config_error)
    }

    pub fn noise_model(&self) -> Result<NoiseModel, CliError> {
        let n = &self.noise;
        Ok(match n.kind {
            NoiseKind::None => NoiseModel::None,
            NoiseKind::Gmm => NoiseModel::Gmm(
                GmmNoiseModel::from_snr(n.snr_db, self.source_power, n.outlier_prob).map_err(config_error)?,
            ),
            NoiseKind::Sas => NoiseModel::Sas(
                SasNoiseModel::from_gsnr(n.gsnr_db, self.source_power, n.alpha).map_err(config_error)?,
            ),
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario()?;
        self.noise_model()?;
        self.solver.validate().map_err(config_error)?;
        let geometry = self.geometry()?;
        if geometry.num_points() < 2 * self.num_sensors {
            return Err(CliError::Config(format!(
                "grid of {} points is smaller than twice the {} sensors",
                geometry.num_points(),
                self.num_sensors
            )));
        }
        Ok(())
    }
}

impl FromStr for ExperimentConfig {
    type Err = CliError;

    fn from_str(text: &str) -> Result<Self, CliError> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (n + 1, value.trim().to_string())).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }

        let mut cfg = ExperimentConfig::default();
        for (key, (line, value)) in &entries {
            let bad = |e: &dyn fmt::Display| CliError::Config(format!("line {line}: `{key}`: {e}"));
            let v = value.as_str();
            match key.as_str() {
                "num_sensors" => cfg.num_sensors = v.parse().map_err(|e| bad(&e))?,
                "spacing" => cfg.spacing = v.parse().map_err(|e| bad(&e))?,
                "grid_interval" => cfg.grid_interval = v.parse().map_err(|e| bad(&e))?,
                "doas" => cfg.doas = parse_list(v).map_err(|e| bad(&e))?,
                "snapshots" => cfg.snapshots = v.parse().map_err(|e| bad(&e))?,
                "source_power" => cfg.source_power = v.parse().map_err(|e| bad(&e))?,
                "noise" => cfg.noise.kind = v.parse()?,
                "snr_db" => cfg.noise.snr_db = v.parse().map_err(|e| bad(&e))?,
                "outlier_prob" => cfg.noise.outlier_prob = v.parse().map_err(|e| bad(&e))?,
                "gsnr_db" => cfg.noise.gsnr_db = v.parse().map_err(|e| bad(&e))?,
                "alpha" => cfg.noise.alpha = v.parse().map_err(|e| bad(&e))?,
                "population_size" => cfg.solver.population_size = v.parse().map_err(|e| bad(&e))?,
                "crossover_prob" => cfg.solver.crossover_prob = v.parse().map_err(|e| bad(&e))?,
                "mutation_prob" => cfg.solver.mutation_prob = parse_auto(v).map_err(|e| bad(&e))?,
                "inner_max" => cfg.solver.inner_max = v.parse().map_err(|e| bad(&e))?,
                "knee_patience" => cfg.solver.knee_patience = v.parse().map_err(|e| bad(&e))?,
                "forward_max" => cfg.solver.forward_max = v.parse().map_err(|e| bad(&e))?,
                "step" => cfg.solver.step = parse_auto(v).map_err(|e| bad(&e))?,
                "max_generations" => cfg.solver.max_generations = v.parse().map_err(|e| bad(&e))?,
                "convergence_tol" => cfg.solver.convergence_tol = v.parse().map_err(|e| bad(&e))?,
                "convergence_window" => cfg.solver.convergence_window = v.parse().map_err(|e| bad(&e))?,
                "refinement" => cfg.solver.refinement = v.parse().map_err(config_error)?,
                other => return Err(CliError::Config(format!("line {line}: unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, std::num::ParseFloatError> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect()
}

/// `auto` maps to `None`, meaning the solver's grid-dependent default.
fn parse_auto(s: &str) -> Result<Option<f64>, std::num::ParseFloatError> {
    if s == "auto" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

fn to_count(name: &str, value: f64) -> Result<usize, CliError> {
    if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(CliError::Config(format!("{name} must be a positive integer, got {value}")))
    }
}

fn config_error(e: doa_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use doa_core::solver::RefinementMode;

    #[test]
    fn parses_comments_and_lists() {
        let cfg: ExperimentConfig = "# scenario\nnum_sensors = 8\ndoas = 1.6, 13.2  # two\nnoise = gmm\nstep = auto\nrefinement = taylor\n"
            .parse()
            .unwrap();
        assert_eq!(cfg.doas, vec![1.6, 13.2]);
        assert_eq!(cfg.noise.kind, NoiseKind::Gmm);
        assert_eq!(cfg.solver.step, None);
        assert_eq!(cfg.solver.refinement, RefinementMode::Taylor);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(matches!("bogus = 1".parse::<ExperimentConfig>(), Err(CliError::Config(_))));
        assert!(matches!("snr_db = 1\nsnr_db = 2".parse::<ExperimentConfig>(), Err(CliError::Config(_))));
        assert!(matches!("snapshots = many".parse::<ExperimentConfig>(), Err(CliError::Config(_))));
        assert!(matches!("doas = 1, 2, 3, 4, 5, 6, 7, 8".parse::<ExperimentConfig>(), Err(CliError::Config(_))));
    }

    #[test]
    fn sweeps_apply_to_the_right_field() {
        let base = ExperimentConfig::default();
        let s: Sweep = "separation=4,8".parse().unwrap();
        assert_eq!(s.values, vec![4.0, 8.0]);
        assert_eq!(base.with_sweep(s.param, 4.0).unwrap().doas, vec![-2.0, 2.0]);
        assert_eq!(base.with_sweep(SweepParam::Snapshots, 50.0).unwrap().snapshots, 50);
        assert!(base.with_sweep(SweepParam::Snapshots, 2.5).is_err());
        assert_eq!(base.with_sweep(SweepParam::GridInterval, 4.0).unwrap().grid_interval, 4.0);
        assert!("latency=1".parse::<Sweep>().is_err());
        assert!("snr_db".parse::<Sweep>().is_err());
    }
}
