//! Correntropy loss and kernel-size annealing.

use alloc::format;
use alloc::vec::Vec;

use crate::array::SnapshotMatrix;
use crate::{CMatrix, Error, Result, C64};

/// Floor of the annealed kernel size.
pub const SIGMA_MIN: f64 = 0.03;
/// Per-generation decay rate of the annealed kernel size.
pub const DECAY_RATE: f64 = 2e-4;

/// `g_σ(p) = exp(-|p|² / (2σ²))`
pub fn gaussian_kernel(p: C64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(kernel_norm_sqr(p.norm_sqr(), sigma))
}

/// Kernel from a precomputed `|p|²`; `sigma` is trusted.
#[inline]
pub(crate) fn kernel_norm_sqr(norm_sqr: f64, sigma: f64) -> f64 {
    libm::exp(-norm_sqr / (2.0 * sigma * sigma))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && !sigma.is_nan() {
        Ok(())
    } else {
        Err(Error::domain(format!("kernel size must be positive, got {sigma}")))
    }
}

/// Correntropy loss `1 - mean g_σ(x - z)` over every element of two
/// equally-shaped matrices.
pub fn clf(x: &CMatrix, z: &CMatrix, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if x.shape() != z.shape() {
        return Err(Error::domain(format!(
            "shape mismatch {:?} vs {:?}",
            x.shape(),
            z.shape()
        )));
    }
    if x.is_empty() {
        return Err(Error::domain("correntropy loss of an empty matrix"));
    }
    Ok(clf_of_residuals(x.iter().zip(z.iter()).map(|(a, b)| a - b), sigma))
}

/// Loss from an iterator of residuals. Returns 0 for an empty iterator.
pub(crate) fn clf_of_residuals(residuals: impl IntoIterator<Item = C64>, sigma: f64) -> f64 {
    let mut count = 0usize;
    let mut acc = 0.0;
    for r in residuals {
        acc += kernel_norm_sqr(r.norm_sqr(), sigma);
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        1.0 - acc / count as f64
    }
}

/// Quantile by linear interpolation between order statistics of an already
/// sorted slice (`h = (n - 1) p`).
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(σ_max, σ_min)` from the spread of `|Y|`:
/// `σ_max = 0.5 (q(0.875) - q(0.125)) - σ_min`.
pub fn sigma_bounds_from_data(y: &SnapshotMatrix) -> Result<(f64, f64)> {
    let mut moduli: Vec<f64> = y.values().iter().map(|&v| crate::modulus(v)).collect();
    moduli.sort_by(f64::total_cmp);
    let spread = sorted_quantile(&moduli, 0.875) - sorted_quantile(&moduli, 0.125);
    let sigma_max = 0.5 * spread - SIGMA_MIN;
    if !(sigma_max > 0.0) {
        return Err(Error::DegenerateData(format!(
            "modulus spread {spread} too small for a positive kernel size"
        )));
    }
    Ok((sigma_max, SIGMA_MIN))
}

/// `σ(G) = σ_max exp(-ν G) + σ_min`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSchedule {
    sigma_max: f64,
    sigma_min: f64,
    decay: f64,
}

impl KernelSchedule {
    pub fn new(sigma_max: f64, sigma_min: f64, decay: f64) -> Result<Self> {
        for (name, v) in [("sigma_max", sigma_max), ("sigma_min", sigma_min), ("decay", decay)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { sigma_max, sigma_min, decay })
    }

    pub fn from_data(y: &SnapshotMatrix) -> Result<Self> {
        let (sigma_max, sigma_min) = sigma_bounds_from_data(y)?;
        Self::new(sigma_max, sigma_min, DECAY_RATE)
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn kernel_size(&self, generation: u64) -> f64 {
        self.sigma_max * libm::exp(-self.decay * generation as f64) + self.sigma_min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(gaussian_kernel(c(0.0, 0.0), 0.7).unwrap(), 1.0);
        let sigma = 1.3;
        let at_sigma = gaussian_kernel(c(0.0, sigma), sigma).unwrap();
        assert!((at_sigma - libm::exp(-0.5)).abs() < 1e-15);
        let v = gaussian_kernel(c(3.0, 4.0), 5.0).unwrap();
        assert!((v - libm::exp(-0.5)).abs() < 1e-15);
        assert!(gaussian_kernel(c(1.0, 0.0), 0.0).is_err());
        assert!(gaussian_kernel(c(1.0, 0.0), -1.0).is_err());
    }

    #[test]
    fn clf_examples() {
        let x = CMatrix::from_fn(2, 3, |i, j| c(i as f64, j as f64 - 1.0));
        assert_eq!(clf(&x, &x, 0.5).unwrap(), 0.0);

        let one = CMatrix::from_element(1, 1, c(2.0, 0.0));
        let zero = CMatrix::zeros(1, 1);
        assert!((clf(&one, &zero, 2.0).unwrap() - 0.393_469_340_287_366_6).abs() < 1e-15);

        let pair = CMatrix::from_row_slice(1, 2, &[c(0.0, 0.0), c(0.0, 2.0)]);
        let zeros = CMatrix::zeros(1, 2);
        assert!((clf(&pair, &zeros, 2.0).unwrap() - 0.196_734_670_143_683_3).abs() < 1e-15);

        assert!(clf(&pair, &CMatrix::zeros(2, 1), 1.0).is_err());
        assert!(clf(&pair, &zeros, 0.0).is_err());
    }

    #[test]
    fn quantile_matches_linear_interpolation() {
        let xs: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(sorted_quantile(&xs, 0.875), 7.125);
        assert_eq!(sorted_quantile(&xs, 0.125), 1.875);
        assert_eq!(sorted_quantile(&xs, 0.0), 1.0);
        assert_eq!(sorted_quantile(&xs, 1.0), 8.0);
        assert_eq!(sorted_quantile(&[4.0], 0.3), 4.0);
    }

    #[test]
    fn sigma_bounds_examples() {
        let y = SnapshotMatrix::new(CMatrix::from_fn(2, 4, |i, j| c((i * 4 + j + 1) as f64, 0.0))).unwrap();
        let (hi, lo) = sigma_bounds_from_data(&y).unwrap();
        assert_eq!(lo, 0.03);
        assert!((hi - 2.595).abs() < 1e-12);

        let scaled = SnapshotMatrix::new(y.values() * c(0.0, 10.0)).unwrap();
        let (hi10, _) = sigma_bounds_from_data(&scaled).unwrap();
        assert!(((hi10 + 0.03) - 10.0 * (hi + 0.03)).abs() < 1e-10);

        let flat = SnapshotMatrix::new(CMatrix::from_element(3, 3, c(0.0, 2.0))).unwrap();
        assert!(matches!(sigma_bounds_from_data(&flat), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn schedule_examples() {
        let s = KernelSchedule::new(1.0, SIGMA_MIN, DECAY_RATE).unwrap();
        assert_eq!(s.kernel_size(0), 1.03);
        assert!((s.kernel_size(200) - 0.990_789_439_152_323_2).abs() < 1e-15);
        assert!((s.kernel_size(u32::MAX as u64) - SIGMA_MIN).abs() < 1e-15);
        assert!(KernelSchedule::new(0.0, 0.03, 1e-4).is_err());
    }
}
