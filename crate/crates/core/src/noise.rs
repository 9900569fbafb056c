//! Impulsive noise models.
//!
//! Two families are supported: a two-term complex Gaussian mixture where rare
//! large-variance outliers are embedded in dense background noise, and complex
//! noise whose real and imaginary parts are independent symmetric α-stable
//! variables.

use alloc::format;
use core::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::array::complex_gaussian;
use crate::rng::rng_from_seed;
use crate::{CMatrix, Error, Result, C64};

/// Outlier-to-background variance ratio used when a mixture is built from an SNR.
pub const OUTLIER_VARIANCE_RATIO: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmNoiseModel {
    outlier_prob: f64,
    base_variance: f64,
    outlier_variance: f64,
}

impl GmmNoiseModel {
    /// `outlier_prob` must lie in `[0, 0.5)`; zero degenerates to plain
    /// complex Gaussian noise.
    pub fn new(outlier_prob: f64, base_variance: f64, outlier_variance: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&outlier_prob) {
            return Err(Error::domain(format!(
                "outlier probability must lie in [0, 0.5), got {outlier_prob}"
            )));
        }
        for v in [base_variance, outlier_variance] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("mixture variances must be positive, got {v}")));
            }
        }
        Ok(Self { outlier_prob, base_variance, outlier_variance })
    }

    /// Background variance from `SNR = η_s² / η1²`, outliers at 100× that.
    pub fn from_snr(snr_db: f64, source_power: f64, outlier_prob: f64) -> Result<Self> {
        if !(outlier_prob > 0.0 && outlier_prob < 0.5) {
            return Err(Error::domain(format!(
                "outlier probability must lie in (0, 0.5), got {outlier_prob}"
            )));
        }
        if !(source_power.is_finite() && source_power > 0.0) {
            return Err(Error::domain(format!("source power must be positive, got {source_power}")));
        }
        let base = source_power / libm::pow(10.0, snr_db / 10.0);
        Self::new(outlier_prob, base, OUTLIER_VARIANCE_RATIO * base)
    }

    pub fn outlier_prob(&self) -> f64 {
        self.outlier_prob
    }

    pub fn base_prob(&self) -> f64 {
        1.0 - self.outlier_prob
    }

    pub fn base_variance(&self) -> f64 {
        self.base_variance
    }

    pub fn outlier_variance(&self) -> f64 {
        self.outlier_variance
    }

    /// `E|x|² = c1 η1² + c2 η2²`
    pub fn second_moment(&self) -> f64 {
        self.base_prob() * self.base_variance + self.outlier_prob * self.outlier_variance
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> C64 {
        let outlier = rng.random::<f64>() < self.outlier_prob;
        let variance = if outlier { self.outlier_variance } else { self.base_variance };
        complex_gaussian(rng, variance)
    }

    pub fn sample(&self, rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = rng_from_seed(seed);
        fill_row_major(rows, cols, || self.sample_one(&mut rng))
    }
}

/// Symmetric α-stable law with characteristic function `exp(-γ^α |x|^α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SasNoiseModel {
    alpha: f64,
    scale: f64,
}

impl SasNoiseModel {
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::domain(format!("characteristic exponent must lie in (0, 2], got {alpha}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::domain(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { alpha, scale })
    }

    /// Scale from `GSNR = η_s² / γ^α`.
    pub fn from_gsnr(gsnr_db: f64, source_power: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::domain(format!("characteristic exponent must lie in (0, 2], got {alpha}")));
        }
        if !(source_power.is_finite() && source_power > 0.0) {
            return Err(Error::domain(format!("source power must be positive, got {source_power}")));
        }
        let dispersion = source_power / libm::pow(10.0, gsnr_db / 10.0);
        Self::new(alpha, libm::pow(dispersion, 1.0 / alpha))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// One real draw via the Chambers–Mallows–Stuck transform (β = 0).
    pub fn sample_real<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let v = (rng.random::<f64>() - 0.5) * 2.0 * FRAC_PI_2;
            let w: f64 = Exp1.sample(rng);
            let x = standard_symmetric_stable(self.alpha, v, w);
            // cos(v) underflow or w == 0 can blow up for tiny α.
            if x.is_finite() {
                return self.scale * x;
            }
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> C64 {
        let re = self.sample_real(rng);
        let im = self.sample_real(rng);
        C64::new(re, im)
    }

    pub fn sample(&self, rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = rng_from_seed(seed);
        fill_row_major(rows, cols, || self.sample_one(&mut rng))
    }
}

/// Unit-scale symmetric stable variate from a uniform angle `v ∈ [-π/2, π/2)`
/// and a unit exponential `w`.
fn standard_symmetric_stable(alpha: f64, v: f64, w: f64) -> f64 {
    if (alpha - 1.0).abs() < 1e-12 {
        return libm::tan(v);
    }
    let av = alpha * v;
    let head = libm::sin(av) / libm::pow(libm::cos(v), 1.0 / alpha);
    let tail = libm::pow(libm::cos(v - av) / w, (1.0 - alpha) / alpha);
    head * tail
}

fn fill_row_major(rows: usize, cols: usize, mut draw: impl FnMut() -> C64) -> CMatrix {
    let mut out = CMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out[(r, c)] = draw();
        }
    }
    out
}

/// Noise model attached to a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    Gmm(GmmNoiseModel),
    Sas(SasNoiseModel),
}

impl NoiseModel {
    pub fn sample(&self, rows: usize, cols: usize, seed: u64) -> CMatrix {
        match self {
            NoiseModel::None => CMatrix::zeros(rows, cols),
            NoiseModel::Gmm(model) => model.sample(rows, cols, seed),
            NoiseModel::Sas(model) => model.sample(rows, cols, seed),
        }
    }
}
