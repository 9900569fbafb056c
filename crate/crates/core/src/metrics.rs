//! Monte Carlo metrics: assignment-based RMSE and average source number.

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Optimal matching of every true direction to a distinct estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `estimate_for[k]` is the estimate index matched to truth `k`.
    pub estimate_for: Vec<usize>,
    /// Sum of squared angular errors in degrees².
    pub cost: f64,
}

/// Rectangular assignment minimizing `Σ_k (θ̃_π(k) - θ̄_k)²`.
///
/// Excess estimates stay unmatched. Returns [`Error::NotAdmissible`] when
/// there are fewer estimates than true directions.
pub fn hungarian_assign(estimates: &[f64], truth: &[f64]) -> Result<Assignment> {
    if estimates.len() < truth.len() {
        return Err(Error::NotAdmissible { estimated: estimates.len(), truth: truth.len() });
    }
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| estimates.iter().map(|e| (e - t) * (e - t)).collect())
        .collect();
    let estimate_for = min_cost_assignment(&cost);
    let total = estimate_for.iter().enumerate().map(|(k, &j)| cost[k][j]).sum();
    Ok(Assignment { estimate_for, cost: total })
}

/// Shortest augmenting path Hungarian method with potentials for an
/// `n x m` cost matrix, `n <= m`. Returns the column assigned to each row.
fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = alloc::vec![0.0; n + 1];
    let mut v = alloc::vec![0.0; m + 1];
    let mut row_of = alloc::vec![0usize; m + 1];
    let mut way = alloc::vec![0usize; m + 1];
    for row in 1..=n {
        row_of[0] = row;
        let mut col0 = 0;
        let mut min_to = alloc::vec![f64::INFINITY; m + 1];
        let mut used = alloc::vec![false; m + 1];
        loop {
            used[col0] = true;
            let r = row_of[col0];
            let mut delta = f64::INFINITY;
            let mut next = 0;
            for col in 1..=m {
                if used[col] {
                    continue;
                }
                let reduced = cost[r - 1][col - 1] - u[r] - v[col];
                if reduced < min_to[col] {
                    min_to[col] = reduced;
                    way[col] = col0;
                }
                if min_to[col] < delta {
                    delta = min_to[col];
                    next = col;
                }
            }
            for col in 0..=m {
                if used[col] {
                    u[row_of[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = next;
            if row_of[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            row_of[col0] = row_of[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut out = alloc::vec![0usize; n];
    for col in 1..=m {
        if row_of[col] != 0 {
            out[row_of[col] - 1] = col - 1;
        }
    }
    out
}

/// Outcome of one Monte Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub estimated_doas: Vec<f64>,
    pub source_number: usize,
    pub runtime_seconds: f64,
    pub converged: bool,
    pub generations: usize,
    /// Set when the estimator returned an error; the trial then counts with zero sources.
    pub failure: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseSummary {
    /// `None` when no trial was admitted.
    pub rmse: Option<f64>,
    pub admitted: usize,
}

/// `sqrt( Σ_i Σ_k ((θ̃_k)_i - θ̄_k)² / (K υ') )` over the `υ'` trials whose
/// estimated source number is at least `K`.
pub fn compute_rmse(trials: &[TrialRecord], truth: &[f64]) -> RmseSummary {
    let mut total = 0.0;
    let mut admitted = 0;
    for trial in trials.iter().filter(|t| !t.failed()) {
        if let Ok(assignment) = hungarian_assign(&trial.estimated_doas, truth) {
            total += assignment.cost;
            admitted += 1;
        }
    }
    let rmse = (admitted > 0 && !truth.is_empty())
        .then(|| libm::sqrt(total / (truth.len() * admitted) as f64));
    RmseSummary { rmse, admitted }
}

/// Mean estimated source number over all trials, failures counting as zero.
pub fn avg_source_number(trials: &[TrialRecord]) -> f64 {
    if trials.is_empty() {
        return 0.0;
    }
    let sum: usize = trials.iter().map(|t| if t.failed() { 0 } else { t.source_number }).sum();
    sum as f64 / trials.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub descriptor: String,
    pub trials: Vec<TrialRecord>,
    pub rmse: Option<f64>,
    pub rmse_trial_count: usize,
    pub avg_source_number: f64,
    pub mean_runtime_seconds: f64,
}

impl MonteCarloReport {
    /// Aggregates trials after ordering them by trial index, so the result
    /// does not depend on completion order.
    pub fn aggregate(descriptor: impl Into<String>, truth: &[f64], mut trials: Vec<TrialRecord>) -> Self {
        trials.sort_by_key(|t| t.trial);
        let summary = compute_rmse(&trials, truth);
        let mean_runtime_seconds = if trials.is_empty() {
            0.0
        } else {
            trials.iter().map(|t| t.runtime_seconds).sum::<f64>() / trials.len() as f64
        };
        Self {
            descriptor: descriptor.into(),
            rmse: summary.rmse,
            rmse_trial_count: summary.admitted,
            avg_source_number: avg_source_number(&trials),
            mean_runtime_seconds,
            trials,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn record(trial: u64, doas: Vec<f64>) -> TrialRecord {
        TrialRecord {
            trial,
            seed: trial,
            source_number: doas.len(),
            estimated_doas: doas,
            runtime_seconds: 0.0,
            converged: true,
            generations: 1,
            failure: None,
        }
    }

    #[test]
    fn assignment_examples() {
        let a = hungarian_assign(&[10.0, 0.0], &[0.0, 10.0]).unwrap();
        assert_eq!(a.cost, 0.0);
        assert_eq!(a.estimate_for, vec![1, 0]);

        let a = hungarian_assign(&[9.0, 1.0], &[0.0, 10.0]).unwrap();
        assert_eq!(a.estimate_for, vec![1, 0]);
        assert_eq!(a.cost, 2.0);

        let a = hungarian_assign(&[1.0, 9.0, 50.0], &[0.0, 10.0]).unwrap();
        assert_eq!(a.estimate_for, vec![0, 1]);
        assert_eq!(a.cost, 2.0);

        assert_eq!(
            hungarian_assign(&[1.0], &[0.0, 10.0]),
            Err(Error::NotAdmissible { estimated: 1, truth: 2 })
        );
        assert_eq!(hungarian_assign(&[3.0], &[]).unwrap().cost, 0.0);
    }

    #[test]
    fn rmse_examples() {
        let exact = [record(0, vec![0.0, 5.0]), record(1, vec![5.0, 0.0])];
        assert_eq!(compute_rmse(&exact, &[0.0, 5.0]).rmse, Some(0.0));

        let one = [record(0, vec![2.0])];
        assert_eq!(compute_rmse(&one, &[0.0]).rmse, Some(2.0));

        let two = [record(0, vec![1.0]), record(1, vec![-3.0])];
        let s = compute_rmse(&two, &[0.0]);
        assert!((s.rmse.unwrap() - libm::sqrt(5.0)).abs() < 1e-15);
        assert_eq!(s.admitted, 2);

        let short = [record(0, vec![])];
        assert_eq!(compute_rmse(&short, &[0.0]), RmseSummary { rmse: None, admitted: 0 });
    }

    #[test]
    fn average_source_number_examples() {
        let all3: Vec<_> = (0..4).map(|i| record(i, vec![0.0, 1.0, 2.0])).collect();
        assert_eq!(avg_source_number(&all3), 3.0);
        let mixed = [
            record(0, vec![0.0; 2]),
            record(1, vec![0.0; 3]),
            record(2, vec![0.0; 4]),
            record(3, vec![0.0; 3]),
        ];
        assert_eq!(avg_source_number(&mixed), 3.0);
        let mut failed = record(1, vec![]);
        failed.source_number = 5;
        failed.failure = Some("estimation failed".into());
        assert_eq!(avg_source_number(&[record(0, vec![0.0; 3]), failed]), 1.5);
    }

    #[test]
    fn aggregation_ignores_completion_order() {
        let trials: Vec<_> = (0..6).map(|i| record(i, vec![i as f64 * 0.1, 10.0])).collect();
        let mut shuffled = trials.clone();
        shuffled.reverse();
        shuffled.swap(1, 4);
        let a = MonteCarloReport::aggregate("x", &[0.0, 10.0], trials);
        let b = MonteCarloReport::aggregate("x", &[0.0, 10.0], shuffled);
        assert_eq!(a, b);
    }
}
