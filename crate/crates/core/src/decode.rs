//! Signal recovery for a fixed support.
//!
//! An [`ActiveSet`] marks the grid points that carry a source. Decoding turns
//! it into a row-sparse [`SignalMatrix`] by solving, for every snapshot, a
//! least squares problem on the active columns of the manifold. Each
//! measurement is weighted by the Gaussian kernel of the residual left by a
//! reference solution, so entries hit by outliers barely influence the fit.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::array::{Geometry, GridMismatch, SnapshotMatrix};
use crate::correntropy::kernel_norm_sqr;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Weighted Gram matrices with an estimated condition number above this are
/// solved with a truncated pseudo-inverse.
pub const MAX_CONDITION: f64 = 1e12;
/// Rows with an ℓ2 norm at or below this count as zero.
pub const ROW_ZERO_TOL: f64 = 1e-12;

/// Binary support indicator over the grid.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActiveSet(Vec<bool>);

impl ActiveSet {
    pub fn empty(len: usize) -> Self {
        Self(alloc::vec![false; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Self {
        let mut bits = alloc::vec![false; len];
        for &i in indices {
            bits[i] = true;
        }
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0[index]
    }
}

/// `N x T` row-sparse signal estimate. Only the rows listed in `support` are
/// stored; every other row is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    num_points: usize,
    support: Vec<usize>,
    rows: CMatrix,
}

impl SignalMatrix {
    pub fn zeros(num_points: usize, snapshots: usize) -> Self {
        Self { num_points, support: Vec::new(), rows: CMatrix::zeros(0, snapshots) }
    }

    /// `support` must be strictly increasing and match `rows.nrows()`.
    pub fn from_rows(num_points: usize, support: Vec<usize>, rows: CMatrix) -> Result<Self> {
        if support.len() != rows.nrows() {
            return Err(Error::domain("support length does not match stored rows"));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) || support.last().is_some_and(|&i| i >= num_points) {
            return Err(Error::domain("support must be increasing and inside the grid"));
        }
        Ok(Self { num_points, support, rows })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn snapshots(&self) -> usize {
        self.rows.ncols()
    }

    /// Grid indices of the stored rows.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Stored rows, `support().len() x T`.
    pub fn rows(&self) -> &CMatrix {
        &self.rows
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut dense = CMatrix::zeros(self.num_points, self.snapshots());
        for (r, &i) in self.support.iter().enumerate() {
            dense.set_row(i, &self.rows.row(r));
        }
        dense
    }

    /// Grid indices whose row has an ℓ2 norm above [`ROW_ZERO_TOL`].
    pub fn nonzero_rows(&self) -> Vec<usize> {
        self.support
            .iter()
            .enumerate()
            .filter(|(r, _)| self.rows.row(*r).norm() > ROW_ZERO_TOL)
            .map(|(_, &i)| i)
            .collect()
    }

    /// `‖S‖_{2,0}`
    pub fn source_count(&self) -> usize {
        self.nonzero_rows().len()
    }

    /// `A S` using only the stored rows of `S`.
    pub fn synthesize(&self, manifold: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(manifold.nrows(), self.snapshots());
        for (r, &i) in self.support.iter().enumerate() {
            let column = manifold.column(i);
            for t in 0..self.snapshots() {
                let s = self.rows[(r, t)];
                if s != C64::new(0.0, 0.0) {
                    out.column_mut(t).axpy(s, &column, C64::new(1.0, 0.0));
                }
            }
        }
        out
    }

    /// `Y - A S`
    pub fn residual(&self, y: &CMatrix, manifold: &CMatrix) -> CMatrix {
        y - self.synthesize(manifold)
    }

    /// `‖S - other‖_F²`, with both treated as dense `N x T` matrices.
    pub fn squared_distance(&self, other: &SignalMatrix) -> f64 {
        let mut total = 0.0;
        let (mut a, mut b) = (0usize, 0usize);
        while a < self.support.len() || b < other.support.len() {
            let ia = self.support.get(a).copied().unwrap_or(usize::MAX);
            let ib = other.support.get(b).copied().unwrap_or(usize::MAX);
            if ia == ib {
                total += (self.rows.row(a) - other.rows.row(b)).norm_squared();
                a += 1;
                b += 1;
            } else if ia < ib {
                total += self.rows.row(a).norm_squared();
                a += 1;
            } else {
                total += other.rows.row(b).norm_squared();
                b += 1;
            }
        }
        total
    }
}

/// Per-measurement weights in `(0, 1]`, `M x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `W_ij = g_σ((Y - A S̈)_ij)`
pub fn weight_matrix(y: &SnapshotMatrix, manifold: &CMatrix, reference: &SignalMatrix, sigma: f64) -> Result<WeightMatrix> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("kernel size must be positive, got {sigma}")));
    }
    let y = y.values();
    if manifold.nrows() != y.nrows()
        || manifold.ncols() != reference.num_points()
        || reference.snapshots() != y.ncols()
    {
        return Err(Error::domain("weight matrix operands have inconsistent shapes"));
    }
    let residual = reference.residual(y, manifold);
    Ok(WeightMatrix(residual.map(|r| kernel_norm_sqr(r.norm_sqr(), sigma))))
}

/// Minimizes `‖diag(√w) (y - A s)‖²` over `s`.
///
/// Uses the weighted normal equations `(Aᴴ W A) s = Aᴴ W y` through a Cholesky
/// factorization. When that fails or the estimated condition number exceeds
/// [`MAX_CONDITION`], falls back to a truncated eigen pseudo-inverse, which
/// yields the minimum-norm minimizer.
pub fn wls_solve(a_active: &CMatrix, weights: &[f64], y: &[C64]) -> Result<CVector> {
    let (m, k) = a_active.shape();
    if k > m {
        return Err(Error::OvercompleteSupport { support: k, sensors: m });
    }
    if weights.len() != m || y.len() != m {
        return Err(Error::domain("weights and measurements must have one entry per sensor"));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::domain("weights must be positive"));
    }
    let mut gram = CMatrix::zeros(k, k);
    let mut rhs = CVector::zeros(k);
    accumulate_normal_equations(a_active, weights, y, &mut gram, &mut rhs);
    Ok(solve_hermitian(gram, rhs))
}

fn accumulate_normal_equations(a: &CMatrix, weights: &[f64], y: &[C64], gram: &mut CMatrix, rhs: &mut CVector) {
    let k = a.ncols();
    gram.fill(C64::new(0.0, 0.0));
    rhs.fill(C64::new(0.0, 0.0));
    for (mrow, (&w, &ym)) in weights.iter().zip(y).enumerate() {
        for i in 0..k {
            let wai = a[(mrow, i)].conj() * w;
            rhs[i] += wai * ym;
            for j in i..k {
                gram[(i, j)] += wai * a[(mrow, j)];
            }
        }
    }
    for i in 0..k {
        gram[(i, i)].im = 0.0;
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)].conj();
        }
    }
}

fn solve_hermitian(gram: CMatrix, rhs: CVector) -> CVector {
    if gram.nrows() == 0 {
        return rhs;
    }
    if let Some(chol) = gram.clone().cholesky() {
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .map(|d| d.re)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        if lo > 0.0 && (hi / lo) * (hi / lo) <= MAX_CONDITION {
            return chol.solve(&rhs);
        }
    }
    truncated_pinv_solve(gram, &rhs)
}

fn truncated_pinv_solve(gram: CMatrix, rhs: &CVector) -> CVector {
    let eigen = SymmetricEigen::new(gram);
    let largest = eigen.eigenvalues.iter().fold(0.0f64, |acc, &l| acc.max(l));
    let cutoff = largest / MAX_CONDITION;
    let mut out = CVector::zeros(rhs.len());
    if largest <= 0.0 {
        return out;
    }
    for (idx, &lambda) in eigen.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let v = eigen.eigenvectors.column(idx);
            let coeff = v.dotc(rhs) / C64::new(lambda, 0.0);
            out.axpy(coeff, &v, C64::new(1.0, 0.0));
        }
    }
    out
}

/// Decodes one active set against precomputed weights.
pub(crate) fn decode_one(y: &CMatrix, manifold: &CMatrix, weights: &WeightMatrix, set: &ActiveSet) -> SignalMatrix {
    let support = set.indices();
    let (m, t) = y.shape();
    let k = support.len();
    let sub = CMatrix::from_fn(m, k, |row, col| manifold[(row, support[col])]);
    let mut rows = CMatrix::zeros(k, t);
    let mut gram = CMatrix::zeros(k, k);
    let mut rhs = CVector::zeros(k);
    let mut w_col = alloc::vec![0.0; m];
    let mut y_col = alloc::vec![C64::new(0.0, 0.0); m];
    for col in 0..t {
        for row in 0..m {
            w_col[row] = weights.0[(row, col)];
            y_col[row] = y[(row, col)];
        }
        accumulate_normal_equations(&sub, &w_col, &y_col, &mut gram, &mut rhs);
        let s = solve_hermitian(gram.clone(), rhs.clone());
        rows.set_column(col, &s);
    }
    SignalMatrix { num_points: manifold.ncols(), support, rows }
}

/// Decodes every active set with one shared weight matrix built from
/// `reference` on the given manifold. Duplicate active sets are solved once.
pub fn decode_with_manifold(
    y: &SnapshotMatrix,
    manifold: &CMatrix,
    sets: &[ActiveSet],
    reference: &SignalMatrix,
    sigma: f64,
) -> Result<Vec<SignalMatrix>> {
    let m = y.num_sensors();
    for set in sets {
        if set.len() != manifold.ncols() {
            return Err(Error::domain(format!(
                "active set of length {} on a grid of {} points",
                set.len(),
                manifold.ncols()
            )));
        }
        let k = set.popcount();
        if k > m {
            return Err(Error::OvercompleteSupport { support: k, sensors: m });
        }
    }
    let weights = weight_matrix(y, manifold, reference, sigma)?;
    let mut solved: BTreeMap<&ActiveSet, SignalMatrix> = BTreeMap::new();
    let mut out = Vec::with_capacity(sets.len());
    for set in sets {
        let signal = solved
            .entry(set)
            .or_insert_with(|| decode_one(y.values(), manifold, &weights, set))
            .clone();
        out.push(signal);
    }
    Ok(out)
}

/// Decodes on the perturbed grid `θ0 + ζ`.
pub fn decode(
    y: &SnapshotMatrix,
    geometry: &Geometry,
    mismatch: &GridMismatch,
    sets: &[ActiveSet],
    reference: &SignalMatrix,
    sigma: f64,
) -> Result<Vec<SignalMatrix>> {
    let manifold = geometry.manifold(mismatch);
    decode_with_manifold(y, &manifold, sets, reference, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{ArrayConfig, Grid};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn active_set_basics() {
        let set = ActiveSet::from_indices(6, &[4, 1]);
        assert_eq!(set.indices(), alloc::vec![1, 4]);
        assert_eq!(set.popcount(), 2);
        assert!(set.contains(4) && !set.contains(0));
    }

    #[test]
    fn weights_are_one_for_exact_reference() {
        let geometry = Geometry::new(ArrayConfig::half_wavelength(4).unwrap(), Grid::uniform(10.0).unwrap());
        let a = geometry.manifold(&GridMismatch::zeros(geometry.num_points()));
        let zero_y = SnapshotMatrix::new(CMatrix::zeros(4, 3)).unwrap();
        let w = weight_matrix(&zero_y, &a, &SignalMatrix::zeros(19, 3), 0.5).unwrap();
        assert!(w.values().iter().all(|&v| v == 1.0));

        let rows = CMatrix::from_fn(2, 3, |i, j| c(i as f64 + 1.0, j as f64));
        let s = SignalMatrix::from_rows(19, alloc::vec![3, 11], rows).unwrap();
        let y = SnapshotMatrix::new(s.synthesize(&a)).unwrap();
        let w = weight_matrix(&y, &a, &s, 0.5).unwrap();
        assert!(w.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn single_residual_entry_weight() {
        let a = CMatrix::from_element(2, 1, c(1.0, 0.0));
        let sigma = 0.8;
        let mut y = CMatrix::zeros(2, 2);
        y[(1, 0)] = c(0.0, sigma);
        let w = weight_matrix(&SnapshotMatrix::new(y).unwrap(), &a, &SignalMatrix::zeros(1, 2), sigma).unwrap();
        assert!((w.values()[(1, 0)] - libm::exp(-0.5)).abs() < 1e-15);
        assert_eq!(w.values()[(0, 0)], 1.0);
        assert_eq!(w.values()[(0, 1)], 1.0);
        assert_eq!(w.values()[(1, 1)], 1.0);
    }

    #[test]
    fn orthonormal_columns_reduce_to_projection() {
        // Columns of a scaled DFT matrix are orthonormal.
        let m = 4;
        let q = CMatrix::from_fn(m, 2, |row, col| {
            let phase = -2.0 * core::f64::consts::PI * (row * col) as f64 / m as f64;
            c(libm::cos(phase), libm::sin(phase)) / c(2.0, 0.0)
        });
        let y = [c(1.0, 2.0), c(-0.5, 0.3), c(0.0, -1.0), c(2.0, 0.0)];
        let s = wls_solve(&q, &[1.0; 4], &y).unwrap();
        let expected = q.adjoint() * CVector::from_column_slice(&y);
        assert!((s - expected).norm() < 1e-14);
    }

    #[test]
    fn scalar_normal_equation() {
        let a = CMatrix::from_column_slice(3, 1, &[c(1.0, 1.0), c(0.0, -2.0), c(0.5, 0.0)]);
        let w = [0.2, 0.9, 0.5];
        let y = [c(1.0, 0.0), c(2.0, -1.0), c(0.0, 3.0)];
        let mut num = c(0.0, 0.0);
        let mut den = 0.0;
        for i in 0..3 {
            num += a[(i, 0)].conj() * y[i] * w[i];
            den += w[i] * a[(i, 0)].norm_sqr();
        }
        let s = wls_solve(&a, &w, &y).unwrap();
        assert!(crate::modulus(s[0] - num / den) < 1e-14);
    }

    #[test]
    fn consistent_system_is_recovered() {
        let geometry = Geometry::new(ArrayConfig::half_wavelength(8).unwrap(), Grid::uniform(2.0).unwrap());
        let a = geometry.manifold(&GridMismatch::zeros(geometry.num_points()));
        let cols = [30usize, 45, 60];
        let sub = CMatrix::from_fn(8, 3, |r, j| a[(r, cols[j])]);
        let truth = CVector::from_column_slice(&[c(1.0, -0.5), c(0.2, 0.9), c(-1.3, 0.1)]);
        let y = &sub * &truth;
        let w = [0.1, 0.5, 1.0, 0.9, 0.3, 0.7, 0.05, 0.6];
        let s = wls_solve(&sub, &w, y.as_slice()).unwrap();
        assert!((s - &truth).norm() / truth.norm() < 1e-10);
    }

    #[test]
    fn overcomplete_support_is_rejected() {
        let a = CMatrix::from_element(2, 3, c(1.0, 0.0));
        assert_eq!(
            wls_solve(&a, &[1.0, 1.0], &[c(1.0, 0.0), c(0.0, 0.0)]),
            Err(Error::OvercompleteSupport { support: 3, sensors: 2 })
        );
    }

    #[test]
    fn duplicate_columns_fall_back_to_pseudo_inverse() {
        // -90° and +90° produce identical steering vectors at half-wavelength spacing.
        let geometry = Geometry::new(ArrayConfig::half_wavelength(4).unwrap(), Grid::uniform(45.0).unwrap());
        let a = geometry.manifold(&GridMismatch::zeros(5));
        let sub = CMatrix::from_fn(4, 2, |r, j| a[(r, [0, 4][j])]);
        let y: alloc::vec::Vec<C64> = (0..4).map(|r| a[(r, 0)] * c(2.0, 0.0)).collect();
        let s = wls_solve(&sub, &[1.0; 4], &y).unwrap();
        assert!(s.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        // Minimum-norm split of the amplitude across the two identical columns.
        assert!(crate::modulus(s[0] - c(1.0, 0.0)) < 1e-9);
        assert!(crate::modulus(s[1] - c(1.0, 0.0)) < 1e-9);
    }

    #[test]
    fn empty_set_decodes_to_zero() {
        let geometry = Geometry::new(ArrayConfig::half_wavelength(4).unwrap(), Grid::uniform(10.0).unwrap());
        let y = SnapshotMatrix::new(CMatrix::from_element(4, 5, c(1.0, 1.0))).unwrap();
        let out = decode(
            &y,
            &geometry,
            &GridMismatch::zeros(19),
            &[ActiveSet::empty(19)],
            &SignalMatrix::zeros(19, 5),
            1.0,
        )
        .unwrap();
        assert_eq!(out[0].to_dense(), CMatrix::zeros(19, 5));
        assert_eq!(out[0].source_count(), 0);
    }

    #[test]
    fn squared_distance_handles_disjoint_supports() {
        let a = SignalMatrix::from_rows(5, alloc::vec![1, 3], CMatrix::from_element(2, 2, c(1.0, 0.0))).unwrap();
        let b = SignalMatrix::from_rows(5, alloc::vec![3, 4], CMatrix::from_element(2, 2, c(0.0, 1.0))).unwrap();
        let dense = (a.to_dense() - b.to_dense()).norm_squared();
        assert!((a.squared_distance(&b) - dense).abs() < 1e-14);
        assert_eq!(a.squared_distance(&a), 0.0);
    }
}
