//! Bilevel estimation loop.
//!
//! Each outer generation runs the on-grid evolutionary search with the
//! current annealed kernel size, refines the grid points of the knee solution
//! (forward search by default), and re-decodes the whole population on the
//! refined grid. The loop stops after `max_generations` or once the knee
//! signal has settled for `convergence_window` consecutive generations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::array::{steering_derivative, within_box, Geometry, GridMismatch, SnapshotMatrix};
use crate::correntropy::{clf_of_residuals, kernel_norm_sqr, KernelSchedule};
use crate::decode::{decode_one, weight_matrix, ActiveSet, SignalMatrix, WeightMatrix};
use crate::moea::{
    crossover_mutation, environmental_selection, evaluate, initialize, knee_index, limit_support,
    nondominated_fronts, Individual, KneeSolution, Objectives,
};
use crate::rng::rng_from_seed;
use crate::{CMatrix, Error, Result, C64};

/// Loss changes at or below this are treated as "unchanged" by the direction probe.
pub const LOSS_EQ_TOL: f64 = 1e-14;
const TAYLOR_DAMPING: f64 = 0.5;
const TAYLOR_ITERATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementMode {
    /// Derivative-free coordinate-direction search (the default).
    ForwardSearch,
    /// No grid refinement at all.
    OnGridOnly,
    /// First-order Taylor linearization of the manifold.
    Taylor,
}

impl RefinementMode {
    pub fn name(&self) -> &'static str {
        match self {
            RefinementMode::ForwardSearch => "forward",
            RefinementMode::OnGridOnly => "on-grid",
            RefinementMode::Taylor => "taylor",
        }
    }
}

impl core::str::FromStr for RefinementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "forward" | "forward-search" => Ok(RefinementMode::ForwardSearch),
            "on-grid" | "ongrid" | "on-grid-only" => Ok(RefinementMode::OnGridOnly),
            "taylor" => Ok(RefinementMode::Taylor),
            other => Err(Error::config(format!("unknown refinement mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub population_size: usize,
    pub crossover_prob: f64,
    /// `None` means `1/N` for a grid of `N` points.
    pub mutation_prob: Option<f64>,
    /// Cap on on-grid generations per outer generation.
    pub inner_max: usize,
    /// The on-grid level also stops once the knee is unchanged this many times in a row.
    pub knee_patience: usize,
    /// Cap on joint steps of one forward search.
    pub forward_max: usize,
    /// Forward-search step in degrees. `None` means `r/100`.
    pub step: Option<f64>,
    pub max_generations: usize,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub refinement: RefinementMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            crossover_prob: 0.9,
            mutation_prob: None,
            inner_max: 50,
            knee_patience: 5,
            forward_max: 200,
            step: None,
            max_generations: 200,
            convergence_tol: 1e-6,
            convergence_window: 5,
            refinement: RefinementMode::ForwardSearch,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if self.population_size < 2 {
            return Err(Error::config("population size must be at least 2"));
        }
        if !prob_ok(self.crossover_prob) || !self.mutation_prob.is_none_or(prob_ok) {
            return Err(Error::config("probabilities must lie in [0, 1]"));
        }
        if self.step.is_some_and(|mu| !(mu.is_finite() && mu > 0.0)) {
            return Err(Error::config("forward-search step must be positive"));
        }
        if self.inner_max == 0
            || self.knee_patience == 0
            || self.forward_max == 0
            || self.max_generations == 0
            || self.convergence_window == 0
        {
            return Err(Error::config("iteration caps must be at least 1"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::config("convergence tolerance must be non-negative"));
        }
        Ok(())
    }

    pub fn mutation_prob_for(&self, grid_len: usize) -> f64 {
        self.mutation_prob.unwrap_or(1.0 / grid_len as f64)
    }

    pub fn step_for(&self, interval: f64) -> f64 {
        self.step.unwrap_or(interval / 100.0)
    }
}

/// One outer generation as seen after its on-grid level.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub generation: usize,
    pub knee_sources: Option<usize>,
    pub knee_loss: Option<f64>,
    pub sigma: f64,
    pub inner_generations: usize,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    /// `(θ0 + ζ)` restricted to the knee's non-zero rows, ascending grid order.
    pub doas: Vec<f64>,
    pub source_number: usize,
    pub knee_objectives: Objectives,
    pub mismatch: GridMismatch,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub generations: usize,
    /// First front of the final population.
    pub final_front: Vec<Objectives>,
}

/// Time source for trace timestamps.
pub trait Clock {
    fn elapsed_seconds(&self) -> f64;
}

/// Always reports zero; keeps results bit-reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_seconds(&self) -> f64 {
        0.0
    }
}

/// `F(S̈, ζ) = V_CLF(Y, A(θ0 + ζ) S̈)`, evaluated on the stored rows of `S̈` only.
pub fn refinement_loss(
    y: &SnapshotMatrix,
    geometry: &Geometry,
    mismatch: &GridMismatch,
    signal: &SignalMatrix,
    sigma: f64,
) -> f64 {
    let y = y.values();
    let mut fit = CMatrix::zeros(y.nrows(), y.ncols());
    for (r, &i) in signal.support().iter().enumerate() {
        let a = geometry.steering_at(i, mismatch.offsets()[i]);
        for t in 0..y.ncols() {
            fit.column_mut(t).axpy(signal.rows()[(r, t)], &a, C64::new(1.0, 0.0));
        }
    }
    clf_of_residuals(y.iter().zip(fit.iter()).map(|(a, b)| a - b), sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSearchOutcome {
    pub mismatch: GridMismatch,
    /// Accepted direction per grid point (`-1`, `0`, `+1`); zero off the knee.
    pub directions: Vec<i8>,
    /// Joint steps attempted in the second phase.
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Forward search on the knee's active grid points.
///
/// First each active component is probed on its own from the input `ζ` with
/// a random direction. The direction is kept if the loss drops; otherwise the
/// opposite direction is probed and kept if it drops the loss; otherwise the
/// component does not move. Probes outside the box count as failures. Then all
/// components step together by `step` along their directions while the loss
/// strictly decreases, for at most `max_steps` steps. A component whose next
/// step would leave `(-r/2, r/2]` stays where it is.
#[allow(clippy::too_many_arguments)]
pub fn forward_search<R: Rng + ?Sized>(
    y: &SnapshotMatrix,
    geometry: &Geometry,
    mismatch: &GridMismatch,
    knee_set: &ActiveSet,
    knee_signal: &SignalMatrix,
    sigma: f64,
    step: f64,
    max_steps: usize,
    rng: &mut R,
) -> ForwardSearchOutcome {
    let interval = geometry.grid.interval();
    let loss = |z: &GridMismatch| refinement_loss(y, geometry, z, knee_signal, sigma);
    let base = loss(mismatch);
    let mut directions = alloc::vec![0i8; mismatch.len()];

    for i in knee_set.indices() {
        let first: i8 = if rng.random::<bool>() { 1 } else { -1 };
        directions[i] = [first, -first]
            .into_iter()
            .find(|&beta| {
                let mut probe = mismatch.clone();
                probe.try_set(i, mismatch.offsets()[i] + step * f64::from(beta), interval)
                    && loss(&probe) < base - LOSS_EQ_TOL
            })
            .unwrap_or(0);
    }

    let mut current = mismatch.clone();
    let mut current_loss = base;
    let mut steps = 0;
    if directions.iter().any(|&b| b != 0) {
        while steps < max_steps {
            steps += 1;
            let mut next = current.clone();
            let mut moved = false;
            for (i, &beta) in directions.iter().enumerate() {
                if beta != 0 {
                    moved |= next.try_set(i, current.offsets()[i] + step * f64::from(beta), interval);
                }
            }
            if !moved {
                break;
            }
            let next_loss = loss(&next);
            if next_loss >= current_loss {
                break;
            }
            current = next;
            current_loss = next_loss;
        }
    }

    ForwardSearchOutcome { mismatch: current, directions, steps, initial_loss: base, final_loss: current_loss }
}

/// Grid refinement through the first-order model
/// `A(θ0 + ζ) ≈ A(θ0) + A'(θ0) diag(ζ)`.
///
/// The correntropy loss of the linearized residual is minimized over the
/// active offsets by damped half-quadratic iterations (reweighted least
/// squares in real `ζ`). A singular system leaves `ζ` untouched; the result
/// is clipped into `(-r/2, r/2]`.
pub fn taylor_refine(
    y: &SnapshotMatrix,
    geometry: &Geometry,
    mismatch: &GridMismatch,
    knee_set: &ActiveSet,
    knee_signal: &SignalMatrix,
    sigma: f64,
) -> GridMismatch {
    let active: Vec<(usize, usize)> = knee_signal
        .support()
        .iter()
        .enumerate()
        .filter(|(_, &i)| knee_set.contains(i))
        .map(|(r, &i)| (r, i))
        .collect();
    if active.is_empty() {
        return mismatch.clone();
    }
    let yv = y.values();
    let (m, t) = yv.shape();
    let len = m * t;

    // R0 = Y - A(θ0) S and B_i = a'_i s_iᵀ, flattened column-major.
    let on_grid = geometry.manifold(&GridMismatch::zeros(geometry.num_points()));
    let base_residual = knee_signal.residual(yv, &on_grid);
    let directions: Vec<Vec<C64>> = active
        .iter()
        .map(|&(r, i)| {
            let da = steering_derivative(geometry.grid.points()[i], &geometry.array);
            let mut b = Vec::with_capacity(len);
            for col in 0..t {
                let s = knee_signal.rows()[(r, col)];
                b.extend(da.iter().map(|&v| v * s));
            }
            b
        })
        .collect();

    let k = active.len();
    let mut zeta = DVector::from_iterator(k, active.iter().map(|&(_, i)| mismatch.offsets()[i]));
    for _ in 0..TAYLOR_ITERATIONS {
        let weights: Vec<f64> = (0..len)
            .map(|e| {
                let mut r = base_residual.as_slice()[e];
                for (b, z) in directions.iter().zip(zeta.iter()) {
                    r -= b[e] * *z;
                }
                kernel_norm_sqr(r.norm_sqr(), sigma)
            })
            .collect();
        let mut hess = DMatrix::<f64>::zeros(k, k);
        let mut grad = DVector::<f64>::zeros(k);
        for p in 0..k {
            for e in 0..len {
                let wb = directions[p][e].conj() * weights[e];
                grad[p] += (wb * base_residual.as_slice()[e]).re;
                for q in p..k {
                    hess[(p, q)] += (wb * directions[q][e]).re;
                }
            }
            for q in 0..p {
                hess[(p, q)] = hess[(q, p)];
            }
        }
        let Some(chol) = hess.cholesky() else {
            return mismatch.clone();
        };
        let target = chol.solve(&grad);
        if target.iter().any(|v| !v.is_finite()) {
            return mismatch.clone();
        }
        zeta += (target - &zeta) * TAYLOR_DAMPING;
    }

    let half = geometry.grid.interval() / 2.0;
    let mut out = mismatch.clone();
    for (&(_, i), &z) in active.iter().zip(zeta.iter()) {
        let clipped = z.min(half).max((-half).next_up());
        debug_assert!(within_box(clipped, geometry.grid.interval()));
        out.try_set(i, clipped, geometry.grid.interval());
    }
    out
}

/// Decoder with a fixed weight matrix; remembers every active set it solved.
struct CachedDecoder {
    weights: WeightMatrix,
    reference: SignalMatrix,
    sigma: f64,
    epoch: u64,
    solved: BTreeMap<ActiveSet, SignalMatrix>,
}

impl CachedDecoder {
    fn new(y: &SnapshotMatrix, manifold: &CMatrix, reference: &SignalMatrix, sigma: f64, epoch: u64) -> Result<Self> {
        Ok(Self {
            weights: weight_matrix(y, manifold, reference, sigma)?,
            reference: reference.clone(),
            sigma,
            epoch,
            solved: BTreeMap::new(),
        })
    }

    fn matches(&self, reference: &SignalMatrix, sigma: f64, epoch: u64) -> bool {
        self.epoch == epoch && self.sigma == sigma && &self.reference == reference
    }

    fn decode(&mut self, y: &SnapshotMatrix, manifold: &CMatrix, set: &ActiveSet) -> SignalMatrix {
        if let Some(hit) = self.solved.get(set) {
            return hit.clone();
        }
        let signal = decode_one(y.values(), manifold, &self.weights, set);
        self.solved.insert(set.clone(), signal.clone());
        signal
    }
}

/// Mutable state of one estimation run.
struct Run<'a> {
    y: &'a SnapshotMatrix,
    geometry: &'a Geometry,
    config: &'a SolverConfig,
    manifold: CMatrix,
    manifold_epoch: u64,
    mismatch: GridMismatch,
    population: Vec<Individual>,
    knee: Option<KneeSolution>,
    decoder: Option<CachedDecoder>,
    zero_signal: SignalMatrix,
}

impl Run<'_> {
    fn num_sensors(&self) -> usize {
        self.geometry.num_sensors()
    }

    fn reference(&self) -> SignalMatrix {
        self.knee.as_ref().map_or_else(|| self.zero_signal.clone(), |k| k.signal.clone())
    }

    fn decoder(&mut self, reference: &SignalMatrix, sigma: f64) -> Result<&mut CachedDecoder> {
        let fresh = self.decoder.as_ref().is_none_or(|d| !d.matches(reference, sigma, self.manifold_epoch));
        if fresh {
            self.decoder = Some(CachedDecoder::new(self.y, &self.manifold, reference, sigma, self.manifold_epoch)?);
        }
        Ok(self.decoder.as_mut().unwrap())
    }

    fn decode_all(&mut self, sets: Vec<ActiveSet>, reference: &SignalMatrix, sigma: f64) -> Result<Vec<Individual>> {
        let (y, manifold) = (self.y, self.manifold.clone());
        let decoder = self.decoder(reference, sigma)?;
        Ok(sets
            .into_iter()
            .map(|set| {
                let signal = decoder.decode(y, &manifold, &set);
                let objectives = evaluate(&signal, &manifold, y, sigma);
                Individual { active_set: set, signal, objectives }
            })
            .collect())
    }

    fn reevaluate(&mut self, sigma: f64) {
        for ind in &mut self.population {
            ind.objectives = evaluate(&ind.signal, &self.manifold, self.y, sigma);
        }
    }

    /// Knee of the first front, with the empty solution as a zero-source anchor.
    fn identify_knee(&self, sigma: f64) -> Option<KneeSolution> {
        let points: Vec<Objectives> = self.population.iter().map(|i| i.objectives).collect();
        let front = nondominated_fronts(&points).into_iter().next().unwrap_or_default();
        let mut candidates: Vec<Objectives> = front.iter().map(|&i| points[i]).collect();
        let empty_loss = clf_of_residuals(self.y.values().iter().copied(), sigma);
        candidates.push(Objectives::new(0, empty_loss));
        let pick = knee_index(&candidates, self.num_sensors()).ok()?;
        Some(KneeSolution::from(&self.population[front[pick]]))
    }

    fn first_front(&self) -> Vec<Objectives> {
        let points: Vec<Objectives> = self.population.iter().map(|i| i.objectives).collect();
        nondominated_fronts(&points)
            .into_iter()
            .next()
            .map(|f| f.into_iter().map(|i| points[i]).collect())
            .unwrap_or_default()
    }

    /// On-grid level. Returns the number of inner generations used.
    fn on_grid<R: Rng + ?Sized>(&mut self, sigma: f64, rng: &mut R) -> Result<usize> {
        let m = self.num_sensors();
        let pc = self.config.crossover_prob;
        let pm = self.config.mutation_prob_for(self.geometry.num_points());
        let mut unchanged = 0;
        let mut used = 0;
        for _ in 0..self.config.inner_max {
            used += 1;
            let mut offspring = crossover_mutation(&self.population, pc, pm, rng);
            for set in &mut offspring {
                limit_support(set, m, rng);
            }
            let reference = self.reference();
            let children = self.decode_all(offspring, &reference, sigma)?;
            let mut combined = core::mem::take(&mut self.population);
            combined.extend(children);
            self.population = environmental_selection(combined, self.config.population_size);

            match self.identify_knee(sigma) {
                Some(knee) => {
                    let same = self.knee.as_ref().is_some_and(|k| k.active_set == knee.active_set);
                    unchanged = if same { unchanged + 1 } else { 0 };
                    self.knee = Some(knee);
                }
                None => unchanged += 1,
            }
            if unchanged >= self.config.knee_patience {
                break;
            }
        }
        Ok(used)
    }

    fn set_mismatch(&mut self, mismatch: GridMismatch) {
        if mismatch != self.mismatch {
            self.mismatch = mismatch;
            self.manifold = self.geometry.manifold(&self.mismatch);
            self.manifold_epoch += 1;
        }
    }
}

/// Runs the estimator with results independent of wall-clock time.
pub fn run(y: &SnapshotMatrix, geometry: &Geometry, config: &SolverConfig, seed: u64) -> Result<EstimationResult> {
    run_with_clock(y, geometry, config, seed, &NoClock)
}

pub fn run_with_clock(
    y: &SnapshotMatrix,
    geometry: &Geometry,
    config: &SolverConfig,
    seed: u64,
    clock: &dyn Clock,
) -> Result<EstimationResult> {
    config.validate()?;
    if y.num_sensors() != geometry.num_sensors() {
        return Err(Error::config(format!(
            "snapshots have {} rows but the array has {} sensors",
            y.num_sensors(),
            geometry.num_sensors()
        )));
    }
    let schedule = KernelSchedule::from_data(y)?;
    let mut rng = rng_from_seed(seed);
    let n = geometry.num_points();
    let t = y.snapshots();
    let interval = geometry.grid.interval();
    let step = config.step_for(interval);

    let mismatch = GridMismatch::zeros(n);
    let manifold = geometry.manifold(&mismatch);
    let sets = initialize(&manifold, y, config.population_size, &mut rng)?;
    let mut state = Run {
        y,
        geometry,
        config,
        manifold,
        manifold_epoch: 0,
        mismatch,
        population: Vec::new(),
        knee: None,
        decoder: None,
        zero_signal: SignalMatrix::zeros(n, t),
    };
    let sigma0 = schedule.kernel_size(0);
    let zero = state.zero_signal.clone();
    state.population = state.decode_all(sets, &zero, sigma0)?;
    state.knee = state.identify_knee(sigma0);

    let mut trace = Vec::new();
    let mut previous_knee_signal: Option<SignalMatrix> = None;
    let mut settled = 0;
    let mut converged = false;
    let mut generations = 0;

    for generation in 0..config.max_generations {
        let sigma = schedule.kernel_size(generation as u64);
        state.reevaluate(sigma);
        let inner = state.on_grid(sigma, &mut rng)?;
        trace.push(TraceEntry {
            generation,
            knee_sources: state.knee.as_ref().map(|k| k.objectives.sources),
            knee_loss: state.knee.as_ref().map(|k| k.objectives.loss),
            sigma,
            inner_generations: inner,
            elapsed_seconds: clock.elapsed_seconds(),
        });

        if let Some(knee) = &state.knee {
            if let Some(prev) = &previous_knee_signal {
                let change = knee.signal.squared_distance(prev) / (n * t) as f64;
                settled = if change < config.convergence_tol { settled + 1 } else { 0 };
            }
            previous_knee_signal = Some(knee.signal.clone());
        }

        if let Some(knee) = state.knee.clone() {
            if knee.active_set.popcount() > 0 {
                let refined = match config.refinement {
                    RefinementMode::ForwardSearch => {
                        forward_search(
                            y,
                            geometry,
                            &state.mismatch,
                            &knee.active_set,
                            &knee.signal,
                            sigma,
                            step,
                            config.forward_max,
                            &mut rng,
                        )
                        .mismatch
                    }
                    RefinementMode::Taylor => {
                        taylor_refine(y, geometry, &state.mismatch, &knee.active_set, &knee.signal, sigma)
                    }
                    RefinementMode::OnGridOnly => state.mismatch.clone(),
                };
                if refined != state.mismatch {
                    state.set_mismatch(refined);
                    let sets: Vec<ActiveSet> = state.population.iter().map(|i| i.active_set.clone()).collect();
                    state.population = state.decode_all(sets, &knee.signal, sigma)?;
                }
            }
        }

        generations = generation + 1;
        if settled >= config.convergence_window {
            converged = true;
            break;
        }
    }

    let final_sigma = schedule.kernel_size(generations.saturating_sub(1) as u64);
    state.reevaluate(final_sigma);
    let Some(knee) = state.knee.clone() else {
        return Err(Error::EstimationFailed { trace });
    };
    let rows = knee.signal.nonzero_rows();
    let doas = rows
        .iter()
        .map(|&i| geometry.grid.points()[i] + state.mismatch.offsets()[i])
        .collect();
    Ok(EstimationResult {
        doas,
        source_number: rows.len(),
        knee_objectives: knee.objectives,
        mismatch: state.mismatch.clone(),
        trace,
        converged,
        generations,
        final_front: state.first_front(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{synthesize, ArrayConfig, Grid, Scenario};

    fn geometry(interval: f64) -> Geometry {
        Geometry::new(ArrayConfig::half_wavelength(8).unwrap(), Grid::uniform(interval).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { crossover_prob: 1.5, ..SolverConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { step: Some(0.0), ..SolverConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { max_generations: 0, ..SolverConfig::default() };
        assert!(bad.validate().is_err());
        assert_eq!(SolverConfig::default().step_for(2.0), 0.02);
        assert_eq!(SolverConfig::default().mutation_prob_for(91), 1.0 / 91.0);
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in [RefinementMode::ForwardSearch, RefinementMode::OnGridOnly, RefinementMode::Taylor] {
            assert_eq!(mode.name().parse::<RefinementMode>().unwrap(), mode);
        }
        assert!("bogus".parse::<RefinementMode>().is_err());
    }

    #[test]
    fn forward_search_ignores_zero_signal() {
        let g = geometry(2.0);
        let y = SnapshotMatrix::new(CMatrix::from_element(8, 4, C64::new(1.0, -0.5))).unwrap();
        let set = ActiveSet::from_indices(91, &[40, 50]);
        let mut rng = rng_from_seed(1);
        let out = forward_search(&y, &g, &GridMismatch::zeros(91), &set, &SignalMatrix::zeros(91, 4), 1.0, 0.02, 200, &mut rng);
        assert_eq!(out.mismatch, GridMismatch::zeros(91));
        assert!(out.directions.iter().all(|&b| b == 0));
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn forward_search_rejects_steps_past_the_box() {
        let g = geometry(2.0);
        let scenario = Scenario::new(g.clone(), alloc::vec![1.5], 10, 1.0).unwrap();
        let (y, waves) = synthesize(&scenario, 2).unwrap();
        // Grid point 0° (index 45) with ζ already at the upper edge r/2 = 1.
        let mut z = GridMismatch::zeros(91);
        assert!(z.try_set(45, 1.0, 2.0));
        let signal = SignalMatrix::from_rows(91, alloc::vec![45], waves).unwrap();
        let set = ActiveSet::from_indices(91, &[45]);
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            let out = forward_search(&y, &g, &z, &set, &signal, 1.0, 0.02, 200, &mut rng);
            assert!(out.mismatch.offsets()[45] <= 1.0);
            assert!(out.mismatch.is_feasible(2.0));
            assert!(out.final_loss <= out.initial_loss);
        }
    }

    #[test]
    fn taylor_is_stationary_at_on_grid_truth() {
        let g = geometry(2.0);
        let scenario = Scenario::new(g.clone(), alloc::vec![-10.0, 20.0], 12, 1.0).unwrap();
        let (y, waves) = synthesize(&scenario, 5).unwrap();
        let support = alloc::vec![g.grid.nearest(-10.0), g.grid.nearest(20.0)];
        let signal = SignalMatrix::from_rows(91, support.clone(), waves).unwrap();
        let set = ActiveSet::from_indices(91, &support);
        let out = taylor_refine(&y, &g, &GridMismatch::zeros(91), &set, &signal, 1.0);
        assert!(out.offsets().iter().all(|z| z.abs() < 1e-6));
        let zero = taylor_refine(&y, &g, &GridMismatch::zeros(91), &set, &SignalMatrix::zeros(91, 12), 1.0);
        assert_eq!(zero, GridMismatch::zeros(91));
    }

    #[test]
    fn taylor_moves_toward_an_off_grid_source() {
        let g = geometry(2.0);
        let scenario = Scenario::new(g.clone(), alloc::vec![10.4], 20, 1.0).unwrap();
        let (y, waves) = synthesize(&scenario, 7).unwrap();
        let idx = g.grid.nearest(10.4);
        let signal = SignalMatrix::from_rows(91, alloc::vec![idx], waves).unwrap();
        let set = ActiveSet::from_indices(91, &[idx]);
        let out = taylor_refine(&y, &g, &GridMismatch::zeros(91), &set, &signal, 2.0);
        let z = out.offsets()[idx];
        assert!(z > 0.1 && z <= 1.0, "offset {z}");
    }

    #[test]
    fn run_rejects_mismatched_array() {
        let g = geometry(2.0);
        let y = SnapshotMatrix::new(CMatrix::from_element(4, 3, C64::new(1.0, 0.0))).unwrap();
        assert!(matches!(run(&y, &g, &SolverConfig::default(), 0), Err(Error::Configuration(_))));
    }
}
