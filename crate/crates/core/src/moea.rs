//! On-grid multiobjective search over active sets.
//!
//! Every individual is scored by `(f1, f2)` = (number of non-zero signal rows,
//! correntropy loss of the fit). Survivor selection follows NSGA-II: fast
//! nondominated sorting, then crowding distance inside the last admitted
//! front. The working solution handed to decoding and grid refinement is the
//! knee of the first front.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;

use crate::array::SnapshotMatrix;
use crate::correntropy::clf_of_residuals;
use crate::decode::{ActiveSet, SignalMatrix};
use crate::{CMatrix, Error, Result};

/// Objective pair `(‖S‖_{2,0}, V_CLF)`, both minimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objectives {
    pub sources: usize,
    pub loss: f64,
}

impl Objectives {
    pub fn new(sources: usize, loss: f64) -> Self {
        Self { sources, loss }
    }

    /// Weak-and-strict Pareto dominance for minimization.
    pub fn dominates(&self, other: &Objectives) -> bool {
        self.sources <= other.sources
            && self.loss <= other.loss
            && (self.sources < other.sources || self.loss < other.loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub active_set: ActiveSet,
    pub signal: SignalMatrix,
    pub objectives: Objectives,
}

/// Knee of the current front: the working estimate of support and signal.
#[derive(Debug, Clone, PartialEq)]
pub struct KneeSolution {
    pub active_set: ActiveSet,
    pub signal: SignalMatrix,
    pub objectives: Objectives,
}

impl From<&Individual> for KneeSolution {
    fn from(ind: &Individual) -> Self {
        Self {
            active_set: ind.active_set.clone(),
            signal: ind.signal.clone(),
            objectives: ind.objectives,
        }
    }
}

/// `f1` counts non-zero rows of the decoded signal; `f2 = V_CLF(Y, A S)`.
pub fn evaluate(signal: &SignalMatrix, manifold: &CMatrix, y: &SnapshotMatrix, sigma: f64) -> Objectives {
    let residual = signal.residual(y.values(), manifold);
    Objectives::new(signal.source_count(), clf_of_residuals(residual.iter().copied(), sigma))
}

/// Grid indices ranked by `τ_j = Σ_t |a_jᴴ y(t)|`, strongest first. Ties keep
/// the lower index first.
pub fn correlation_ranking(manifold: &CMatrix, y: &SnapshotMatrix) -> Vec<usize> {
    let corr = manifold.adjoint() * y.values();
    let tau: Vec<f64> = (0..manifold.ncols())
        .map(|j| corr.row(j).iter().map(|&v| crate::modulus(v)).sum())
        .collect();
    let mut order: Vec<usize> = (0..tau.len()).collect();
    order.sort_by(|&a, &b| tau[b].total_cmp(&tau[a]).then(a.cmp(&b)));
    order
}

/// Initial active sets: each draws a cardinality uniformly from
/// `1..=M-1` and that many distinct indices from the `2M` grid points most
/// correlated with the data.
pub fn initialize<R: Rng + ?Sized>(
    manifold: &CMatrix,
    y: &SnapshotMatrix,
    population_size: usize,
    rng: &mut R,
) -> Result<Vec<ActiveSet>> {
    let m = manifold.nrows();
    let n = manifold.ncols();
    if n < 2 * m {
        return Err(Error::config(alloc::format!(
            "grid of {n} points is smaller than twice the {m} sensors"
        )));
    }
    if m < 2 {
        return Err(Error::config("at least two sensors are required"));
    }
    let pool: Vec<usize> = correlation_ranking(manifold, y).into_iter().take(2 * m).collect();
    let sets = (0..population_size)
        .map(|_| {
            let card = rng.random_range(1..m);
            let picks: Vec<usize> = sample(rng, pool.len(), card).into_iter().map(|i| pool[i]).collect();
            ActiveSet::from_indices(n, &picks)
        })
        .collect();
    Ok(sets)
}

/// Fast nondominated sorting. Fronts list input indices in ascending order.
pub fn nondominated_fronts(points: &[Objectives]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_count = alloc::vec![0usize; n];
    let mut dominates: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for p in 0..n {
        for q in (p + 1)..n {
            if points[p].dominates(&points[q]) {
                dominates[p].push(q);
                dominated_by_count[q] += 1;
            } else if points[q].dominates(&points[p]) {
                dominates[q].push(p);
                dominated_by_count[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominates[p] {
                dominated_by_count[q] -= 1;
                if dominated_by_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(core::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each member of `front`, aligned with `front`.
/// Boundary points get infinity.
pub fn crowding_distance(points: &[Objectives], front: &[usize]) -> Vec<f64> {
    let len = front.len();
    let mut distance = alloc::vec![0.0; len];
    if len <= 2 {
        distance.fill(f64::INFINITY);
        return distance;
    }
    let objectives: [fn(&Objectives) -> f64; 2] = [|o| o.sources as f64, |o| o.loss];
    for value in objectives {
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| value(&points[front[a]]).total_cmp(&value(&points[front[b]])).then(a.cmp(&b)));
        let lo = value(&points[front[order[0]]]);
        let hi = value(&points[front[order[len - 1]]]);
        distance[order[0]] = f64::INFINITY;
        distance[order[len - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..len - 1 {
            let gap = value(&points[front[order[w + 1]]]) - value(&points[front[order[w - 1]]]);
            distance[order[w]] += gap / range;
        }
    }
    distance
}

/// Front rank and crowding distance for every point.
pub fn rank_and_crowding(points: &[Objectives]) -> (Vec<usize>, Vec<f64>) {
    let mut rank = alloc::vec![0usize; points.len()];
    let mut crowding = alloc::vec![0.0; points.len()];
    for (r, front) in nondominated_fronts(points).iter().enumerate() {
        for (&i, d) in front.iter().zip(crowding_distance(points, front)) {
            rank[i] = r;
            crowding[i] = d;
        }
    }
    (rank, crowding)
}

/// NSGA-II survivor selection. Returns `size` indices into `points`: whole
/// fronts first, then the last admitted front by descending crowding
/// distance with ties broken by lower `f1`, lower `f2`, then input order.
pub fn select_survivors(points: &[Objectives], size: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(size);
    for front in nondominated_fronts(points) {
        if chosen.len() + front.len() <= size {
            chosen.extend_from_slice(&front);
            if chosen.len() == size {
                break;
            }
            continue;
        }
        let crowd = crowding_distance(points, &front);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&points[front[a]], &points[front[b]]);
            crowd[b]
                .total_cmp(&crowd[a])
                .then(pa.sources.cmp(&pb.sources))
                .then(pa.loss.total_cmp(&pb.loss))
                .then(front[a].cmp(&front[b]))
        });
        let missing = size - chosen.len();
        chosen.extend(order.into_iter().take(missing).map(|w| front[w]));
        break;
    }
    chosen
}

/// Keeps `size` individuals out of parents plus offspring.
///
/// Individuals repeating an objective vector already seen compete only for
/// slots the distinct ones cannot fill. Otherwise copies of one solution, or
/// the many saturated supports that all fit exactly, crowd out the rest of
/// the front. Losses closer than `1e-12` count as equal.
pub fn environmental_selection(combined: Vec<Individual>, size: usize) -> Vec<Individual> {
    let mut seen = BTreeSet::new();
    let (distinct, repeats): (Vec<Individual>, Vec<Individual>) = combined
        .into_iter()
        .partition(|ind| seen.insert(objective_key(&ind.objectives)));
    if distinct.len() >= size {
        return select_from(distinct, size);
    }
    let missing = size - distinct.len();
    let mut kept = distinct;
    kept.extend(select_from(repeats, missing));
    kept
}

fn objective_key(o: &Objectives) -> (usize, i64) {
    (o.sources, libm::round(o.loss * 1e12) as i64)
}

fn select_from(pool: Vec<Individual>, size: usize) -> Vec<Individual> {
    let points: Vec<Objectives> = pool.iter().map(|i| i.objectives).collect();
    let keep = select_survivors(&points, size);
    let mut slots: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
    keep.into_iter().filter_map(|i| slots[i].take()).collect()
}

/// Binary tournament on `(rank, crowding)`; the first contestant wins ties.
pub fn binary_tournament<R: Rng + ?Sized>(rank: &[usize], crowding: &[f64], rng: &mut R) -> usize {
    let a = rng.random_range(0..rank.len());
    let b = rng.random_range(0..rank.len());
    match rank[a].cmp(&rank[b]) {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal if crowding[b] > crowding[a] => b,
        Ordering::Equal => a,
    }
}

/// One-point crossover on consecutive parent pairs with probability
/// `crossover_prob`, then independent bit flips with probability
/// `mutation_prob`. Output has the same length as `parents`.
pub fn recombine<R: Rng + ?Sized>(
    parents: &[ActiveSet],
    crossover_prob: f64,
    mutation_prob: f64,
    rng: &mut R,
) -> Vec<ActiveSet> {
    let mut children = Vec::with_capacity(parents.len() + 1);
    for pair in parents.chunks(2) {
        let (first, second) = match pair {
            [a, b] => (a, b),
            [a] => (a, a),
            _ => unreachable!(),
        };
        let (mut c1, mut c2) = (first.clone(), second.clone());
        let len = first.len();
        if len > 1 && rng.random::<f64>() < crossover_prob {
            let cut = rng.random_range(1..len);
            one_point_crossover(first, second, cut, &mut c1, &mut c2);
        }
        children.push(c1);
        if pair.len() == 2 {
            children.push(c2);
        }
    }
    for child in &mut children {
        for bit in child.bits_mut() {
            if rng.random::<f64>() < mutation_prob {
                *bit = !*bit;
            }
        }
    }
    children
}

/// `child1 = p1[..cut] ++ p2[cut..]`, `child2 = p2[..cut] ++ p1[cut..]`.
pub fn one_point_crossover(p1: &ActiveSet, p2: &ActiveSet, cut: usize, child1: &mut ActiveSet, child2: &mut ActiveSet) {
    let (a, b) = (p1.bits(), p2.bits());
    let mut x = a[..cut].to_vec();
    x.extend_from_slice(&b[cut..]);
    let mut y = b[..cut].to_vec();
    y.extend_from_slice(&a[cut..]);
    *child1 = ActiveSet::from_bits(x);
    *child2 = ActiveSet::from_bits(y);
}

/// Tournament-selects `population.len()` parents and recombines them.
pub fn crossover_mutation<R: Rng + ?Sized>(
    population: &[Individual],
    crossover_prob: f64,
    mutation_prob: f64,
    rng: &mut R,
) -> Vec<ActiveSet> {
    let points: Vec<Objectives> = population.iter().map(|i| i.objectives).collect();
    let (rank, crowding) = rank_and_crowding(&points);
    let parents: Vec<ActiveSet> = (0..population.len())
        .map(|_| population[binary_tournament(&rank, &crowding, rng)].active_set.clone())
        .collect();
    recombine(&parents, crossover_prob, mutation_prob, rng)
}

/// Clears random bits until at most `max_active` remain.
pub fn limit_support<R: Rng + ?Sized>(set: &mut ActiveSet, max_active: usize, rng: &mut R) {
    let mut active = set.indices();
    while active.len() > max_active {
        let victim = active.swap_remove(rng.random_range(0..active.len()));
        set.bits_mut()[victim] = false;
    }
}

/// Margin an angle change must exceed to displace an earlier (lower `f1`)
/// knee candidate, so rounding noise cannot reorder exact ties.
const KNEE_TIE_EPS: f64 = 1e-12;

/// Kink-method knee over a set of points.
///
/// Points with `f1 >= max_sources` are discarded, each `f1` keeps its lowest
/// loss, and dominated leftovers are dropped. The front is treated as flat
/// from its last point out to `f1 = max_sources - 1`, since extra sources
/// cannot be worse than the best fit found. Both objectives are normalized to
/// `[0, 1]` over that extended front and each point after the first scores
/// how much the front turns there: the angle of the incoming segment minus
/// the angle of the outgoing one. The largest turn wins, ties going to lower
/// `f1`. A zero-source point shapes the front but is never returned. With at
/// most two non-zero points the one with the lowest loss is returned. The
/// result indexes `points`.
pub fn knee_index(points: &[Objectives], max_sources: usize) -> Result<usize> {
    let mut best_per_count: Vec<Option<usize>> = alloc::vec![None; max_sources];
    for (i, p) in points.iter().enumerate() {
        if p.sources < max_sources {
            let slot = &mut best_per_count[p.sources];
            if slot.is_none_or(|j| p.loss < points[j].loss) {
                *slot = Some(i);
            }
        }
    }
    let mut front: Vec<usize> = Vec::new();
    for idx in best_per_count.into_iter().flatten() {
        if front.last().is_none_or(|&prev| points[idx].loss < points[prev].loss) {
            front.push(idx);
        }
    }
    let nonzero = front.iter().filter(|&&i| points[i].sources > 0).count();
    if nonzero == 0 {
        return Err(Error::KneeUnavailable { max_sources });
    }
    if nonzero <= 2 {
        // Losses strictly decrease along the front, so the last point is lowest.
        return Ok(*front.last().unwrap());
    }

    let first = &points[front[0]];
    let last = &points[*front.last().unwrap()];
    let f1_span = (max_sources - 1 - first.sources) as f64;
    let f2_span = first.loss - last.loss;
    let norm = |p: &Objectives| ((p.sources - first.sources) as f64 / f1_span, (p.loss - last.loss) / f2_span);
    // Angle below the horizontal of the segment from `a` to `b`.
    let descent = |a: (f64, f64), b: (f64, f64)| libm::atan2(a.1 - b.1, b.0 - a.0);

    let mut best: Option<(usize, f64)> = None;
    for pos in 1..front.len() {
        let idx = front[pos];
        if points[idx].sources == 0 {
            continue;
        }
        let here = norm(&points[idx]);
        let incoming = descent(norm(&points[front[pos - 1]]), here);
        let outgoing = match front.get(pos + 1) {
            Some(&next) => descent(here, norm(&points[next])),
            None => 0.0,
        };
        let turn = incoming - outgoing;
        if best.is_none_or(|(_, b)| turn > b + KNEE_TIE_EPS) {
            best = Some((idx, turn));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::KneeUnavailable { max_sources })
}

/// Knee of a nondominated front for an array of `num_sensors` sensors.
pub fn knee_identification(front: &[Individual], num_sensors: usize) -> Result<KneeSolution> {
    let points: Vec<Objectives> = front.iter().map(|i| i.objectives).collect();
    let idx = knee_index(&points, num_sensors)?;
    Ok(KneeSolution::from(&front[idx]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn pts(raw: &[(usize, f64)]) -> Vec<Objectives> {
        raw.iter().map(|&(s, l)| Objectives::new(s, l)).collect()
    }

    #[test]
    fn dominance_example() {
        let p = pts(&[(1, 0.9), (2, 0.5), (3, 0.4), (2, 0.7)]);
        let fronts = nondominated_fronts(&p);
        assert_eq!(fronts, alloc::vec![alloc::vec![0, 1, 2], alloc::vec![3]]);
    }

    #[test]
    fn equal_points_share_a_front() {
        let p = pts(&[(2, 0.5), (2, 0.5), (1, 0.9)]);
        assert_eq!(nondominated_fronts(&p), alloc::vec![alloc::vec![0, 1, 2]]);
    }

    #[test]
    fn selection_keeps_full_nondominated_input() {
        let p = pts(&[(3, 0.1), (1, 0.8), (2, 0.3)]);
        assert_eq!(select_survivors(&p, 3), alloc::vec![0, 1, 2]);
    }

    #[test]
    fn selection_prefers_boundary_points_of_split_front() {
        let p = pts(&[(1, 0.9), (2, 0.5), (3, 0.45), (4, 0.1), (5, 0.0), (3, 0.9)]);
        let keep = select_survivors(&p, 3);
        assert_eq!(keep.len(), 3);
        assert!(keep.contains(&0) && keep.contains(&4));
        assert!(!keep.contains(&5));
    }

    #[test]
    fn knee_examples() {
        let p = pts(&[(1, 0.8), (3, 0.1), (5, 0.09)]);
        assert_eq!(knee_index(&p, 8).unwrap(), 1);
        let p = pts(&[(1, 0.5), (2, 0.1)]);
        assert_eq!(knee_index(&p, 8).unwrap(), 1);
        // Entries at f1 = M are ignored even with the lowest loss.
        let p = pts(&[(1, 0.8), (3, 0.1), (5, 0.09), (8, 0.0)]);
        assert_eq!(knee_index(&p, 8).unwrap(), 1);
        let p = pts(&[(8, 0.0), (9, 0.0)]);
        assert_eq!(knee_index(&p, 8), Err(Error::KneeUnavailable { max_sources: 8 }));
        let p = pts(&[(0, 0.7)]);
        assert_eq!(knee_index(&p, 8), Err(Error::KneeUnavailable { max_sources: 8 }));
    }

    #[test]
    fn knee_at_the_end_of_a_saturated_front() {
        // Noise-free data: nothing beyond the true count improves the loss,
        // so the front stops at the knee.
        let p = pts(&[(0, 0.9), (1, 0.6), (2, 0.3), (3, 0.0)]);
        assert_eq!(knee_index(&p, 8).unwrap(), 3);
        let p = pts(&[(0, 0.9), (1, 0.1), (2, 0.08), (3, 0.07)]);
        assert_eq!(knee_index(&p, 8).unwrap(), 1);
        // Geometrically shrinking gains: the turn is sharpest where the
        // gains collapse, not where the front is steepest.
        let p = pts(&[(0, 0.64), (1, 0.37), (2, 0.107), (3, 0.0)]);
        assert_eq!(knee_index(&p, 8).unwrap(), 3);
        let p = pts(&[(0, 0.64), (1, 0.4), (2, 0.15), (3, 0.05), (4, 0.045), (5, 0.041), (7, 0.035)]);
        assert_eq!(knee_index(&p, 8).unwrap(), 3);
    }

    #[test]
    fn knee_dedupes_by_source_count() {
        let p = pts(&[(1, 0.8), (3, 0.3), (3, 0.1), (5, 0.09), (4, 0.5)]);
        assert_eq!(knee_index(&p, 8).unwrap(), 2);
    }

    #[test]
    fn recombination_operator_contracts() {
        let mut rng = rng_from_seed(3);
        let a = ActiveSet::from_indices(6, &[0, 1, 2]);
        let b = ActiveSet::from_indices(6, &[3, 4, 5]);
        let same = recombine(&[a.clone(), b.clone()], 0.0, 0.0, &mut rng);
        assert_eq!(same, alloc::vec![a.clone(), b.clone()]);

        let flipped = recombine(&[a.clone(), b.clone()], 0.0, 1.0, &mut rng);
        assert_eq!(flipped[0], ActiveSet::from_indices(6, &[3, 4, 5]));
        assert_eq!(flipped[1], ActiveSet::from_indices(6, &[0, 1, 2]));

        let (mut c1, mut c2) = (a.clone(), b.clone());
        one_point_crossover(&a, &b, 2, &mut c1, &mut c2);
        assert_eq!(c1, ActiveSet::from_indices(6, &[0, 1, 3, 4, 5]));
        assert_eq!(c2, ActiveSet::from_indices(6, &[2]));

        let odd = recombine(&[a.clone(), b.clone(), a.clone()], 0.9, 0.1, &mut rng);
        assert_eq!(odd.len(), 3);
    }

    #[test]
    fn limit_support_caps_popcount() {
        let mut rng = rng_from_seed(4);
        let mut set = ActiveSet::from_indices(20, &[1, 3, 5, 7, 9, 11]);
        limit_support(&mut set, 4, &mut rng);
        assert_eq!(set.popcount(), 4);
    }
}
