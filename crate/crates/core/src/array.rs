//! Uniform linear array model.
//!
//! Angles are carried in degrees everywhere and converted to radians only when
//! the phase is evaluated. Sensor `m` of an array with spacing `d/λ` responds
//! to a far-field source at `θ` with phase `exp(-j 2π m (d/λ) sin θ)`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::rng_from_seed;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Tolerance used when checking grid spacing and range membership.
const ANGLE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    num_sensors: usize,
    spacing: f64,
}

impl ArrayConfig {
    /// `spacing` is the sensor spacing expressed in wavelengths.
    pub fn new(num_sensors: usize, spacing: f64) -> Result<Self> {
        if num_sensors < 2 {
            return Err(Error::domain(format!(
                "array needs at least 2 sensors, got {num_sensors}"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::domain(format!("sensor spacing must be positive, got {spacing}")));
        }
        Ok(Self { num_sensors, spacing })
    }

    pub fn half_wavelength(num_sensors: usize) -> Result<Self> {
        Self::new(num_sensors, 0.5)
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Phase slope `2π (d/λ)` per sensor index and unit `sin θ`.
    fn phase_scale(&self) -> f64 {
        2.0 * PI * self.spacing
    }
}

/// Equi-spaced angular grid starting at -90°.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    interval: f64,
}

impl Grid {
    /// Grid covering [-90°, 90°] with the given interval. The +90° endpoint is
    /// included whenever the interval divides 180°.
    pub fn uniform(interval: f64) -> Result<Self> {
        if !(interval.is_finite() && interval > 0.0 && interval <= 180.0) {
            return Err(Error::domain(format!(
                "grid interval must lie in (0, 180] degrees, got {interval}"
            )));
        }
        let steps = libm::floor(180.0 / interval + ANGLE_EPS) as usize;
        let points = (0..=steps).map(|i| -90.0 + i as f64 * interval).collect();
        Ok(Self { points, interval })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    /// Index of the grid point nearest to `angle`.
    pub fn nearest(&self, angle: f64) -> usize {
        let raw = libm::round((angle + 90.0) / self.interval);
        (raw.max(0.0) as usize).min(self.points.len() - 1)
    }
}

/// Per-grid-point angular offsets, each confined to `(-r/2, r/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMismatch {
    offsets: Vec<f64>,
}

impl GridMismatch {
    pub fn zeros(len: usize) -> Self {
        Self { offsets: alloc::vec![0.0; len] }
    }

    pub fn new(offsets: Vec<f64>, interval: f64) -> Result<Self> {
        if let Some(bad) = offsets.iter().find(|&&z| !within_box(z, interval)) {
            return Err(Error::domain(format!(
                "mismatch {bad} outside (-{h}, {h}]",
                h = interval / 2.0
            )));
        }
        Ok(Self { offsets })
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn is_feasible(&self, interval: f64) -> bool {
        self.offsets.iter().all(|&z| within_box(z, interval))
    }

    /// Sets one component if the value is feasible. Returns whether it moved.
    pub fn try_set(&mut self, index: usize, value: f64, interval: f64) -> bool {
        if within_box(value, interval) {
            self.offsets[index] = value;
            true
        } else {
            false
        }
    }
}

/// `-r/2 < z <= r/2`
pub fn within_box(z: f64, interval: f64) -> bool {
    let half = interval / 2.0;
    z.is_finite() && z > -half && z <= half
}

/// Array plus grid: everything needed to build a (perturbed) manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub array: ArrayConfig,
    pub grid: Grid,
}

impl Geometry {
    pub fn new(array: ArrayConfig, grid: Grid) -> Self {
        Self { array, grid }
    }

    pub fn num_sensors(&self) -> usize {
        self.array.num_sensors
    }

    pub fn num_points(&self) -> usize {
        self.grid.len()
    }

    /// Angles of the perturbed grid `θ0 + ζ`.
    pub fn perturbed_angles(&self, mismatch: &GridMismatch) -> Vec<f64> {
        self.grid
            .points
            .iter()
            .zip(mismatch.offsets())
            .map(|(p, z)| p + z)
            .collect()
    }

    /// Manifold of the perturbed grid `A(θ0 + ζ)`. Perturbed endpoints may sit
    /// up to half an interval beyond ±90°, so no range check is applied.
    pub fn manifold(&self, mismatch: &GridMismatch) -> CMatrix {
        let m = self.array.num_sensors;
        let angles = self.perturbed_angles(mismatch);
        CMatrix::from_fn(m, angles.len(), |row, col| steering_entry(&self.array, angles[col], row))
    }

    /// Steering column for a single perturbed grid point.
    pub fn steering_at(&self, index: usize, offset: f64) -> CVector {
        steering_unchecked(self.grid.points[index] + offset, &self.array)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: Geometry,
    pub true_doas: Vec<f64>,
    pub snapshots: usize,
    pub source_power: f64,
}

impl Scenario {
    pub fn new(
        geometry: Geometry,
        true_doas: Vec<f64>,
        snapshots: usize,
        source_power: f64,
    ) -> Result<Self> {
        let m = geometry.num_sensors();
        if true_doas.is_empty() {
            return Err(Error::domain("scenario needs at least one source"));
        }
        if true_doas.len() > m - 1 {
            return Err(Error::domain(format!(
                "{} sources exceed the {} resolvable by {m} sensors",
                true_doas.len(),
                m - 1
            )));
        }
        for (i, &doa) in true_doas.iter().enumerate() {
            if !(doa > -90.0 && doa <= 90.0) {
                return Err(Error::domain(format!("source direction {doa} outside (-90, 90]")));
            }
            if true_doas[..i].contains(&doa) {
                return Err(Error::domain(format!("duplicate source direction {doa}")));
            }
        }
        if snapshots == 0 {
            return Err(Error::domain("snapshot count must be positive"));
        }
        if !(source_power.is_finite() && source_power > 0.0) {
            return Err(Error::domain(format!("source power must be positive, got {source_power}")));
        }
        Ok(Self { geometry, true_doas, snapshots, source_power })
    }

    pub fn num_sources(&self) -> usize {
        self.true_doas.len()
    }
}

/// The `M x T` array output.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix(CMatrix);

impl SnapshotMatrix {
    pub fn new(values: CMatrix) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::domain("snapshot matrix is empty"));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::domain("snapshot matrix has non-finite entries"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn num_sensors(&self) -> usize {
        self.0.nrows()
    }

    pub fn snapshots(&self) -> usize {
        self.0.ncols()
    }

    /// Adds a noise matrix of identical shape.
    pub fn with_noise(&self, noise: &CMatrix) -> Result<Self> {
        if noise.shape() != self.0.shape() {
            return Err(Error::domain(format!(
                "noise shape {:?} does not match snapshots {:?}",
                noise.shape(),
                self.0.shape()
            )));
        }
        Self::new(&self.0 + noise)
    }
}

fn steering_entry(array: &ArrayConfig, angle_deg: f64, sensor: usize) -> C64 {
    let phase = -array.phase_scale() * sensor as f64 * libm::sin(angle_deg.to_radians());
    C64::new(libm::cos(phase), libm::sin(phase))
}

fn steering_unchecked(angle_deg: f64, array: &ArrayConfig) -> CVector {
    CVector::from_fn(array.num_sensors, |m, _| steering_entry(array, angle_deg, m))
}

fn check_angle(angle: f64) -> Result<()> {
    if (-90.0 - ANGLE_EPS..=90.0 + ANGLE_EPS).contains(&angle) {
        Ok(())
    } else {
        Err(Error::domain(format!("angle {angle} outside [-90, 90]")))
    }
}

/// Steering vector `a(θ)`, with `a(θ)_0 = 1`.
pub fn steering_vector(angle_deg: f64, array: &ArrayConfig) -> Result<CVector> {
    check_angle(angle_deg)?;
    Ok(steering_unchecked(angle_deg, array))
}

/// Derivative of `a(θ)` with respect to `θ` in degrees.
pub fn steering_derivative(angle_deg: f64, array: &ArrayConfig) -> CVector {
    let rad = angle_deg.to_radians();
    let slope = -array.phase_scale() * libm::cos(rad) * (PI / 180.0);
    CVector::from_fn(array.num_sensors, |m, _| {
        let a = steering_entry(array, angle_deg, m);
        a * C64::new(0.0, slope * m as f64)
    })
}

/// Columns are the steering vectors of `angles`.
pub fn manifold(angles: &[f64], array: &ArrayConfig) -> Result<CMatrix> {
    if angles.is_empty() {
        return Err(Error::domain("manifold needs at least one angle"));
    }
    for &angle in angles {
        check_angle(angle)?;
    }
    Ok(CMatrix::from_fn(array.num_sensors, angles.len(), |m, col| {
        steering_entry(array, angles[col], m)
    }))
}

/// Draws one circularly symmetric complex Gaussian value with `E|x|^2 = variance`.
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let scale = libm::sqrt(variance / 2.0);
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(scale * re, scale * im)
}

/// Noise-free array output `A(θ̄) S̄` with i.i.d. complex Gaussian source
/// waveforms of power `η_s²`. Returns `(clean snapshots, waveforms)`.
pub fn synthesize(scenario: &Scenario, signal_seed: u64) -> Result<(SnapshotMatrix, CMatrix)> {
    let mut rng = rng_from_seed(signal_seed);
    let k = scenario.num_sources();
    let t = scenario.snapshots;
    // Row-major draw order so the waveforms do not depend on storage layout.
    let mut waveforms = CMatrix::zeros(k, t);
    for row in 0..k {
        for col in 0..t {
            waveforms[(row, col)] = complex_gaussian(&mut rng, scenario.source_power);
        }
    }
    let steering = manifold(&scenario.true_doas, &scenario.geometry.array)?;
    let clean = SnapshotMatrix::new(steering * &waveforms)?;
    Ok((clean, waveforms))
}
