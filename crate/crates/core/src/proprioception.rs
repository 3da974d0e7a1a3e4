//! Simulated fibre shape sensing, elastic rod energy and passive-body
//! filtering.
//!
//! Energy follows the classical rod model with a straight rest shape:
//! `E_b = ½ ∫ EI κ² ds` and `E_t = ½ ∫ GJ τ² ds`, discretised with
//! trapezoidal arc-length weights so that a constant-curvature arc is
//! integrated exactly.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::{check_finite, point_at_arclength, ArcShape, FrenetScratch, DEFAULT_TORSION_FLOOR};
use crate::plant::{Plant, PlantState};
use crate::{Error, Result, Vec3};

/// Default positional sensing noise in mm.
pub const DEFAULT_SENSING_NOISE: f64 = 0.5;

/// Shape read-out split at the active boundary. Both parts are ordered
/// proximal to distal; `passive` ends one sample before the active base.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedShape {
    pub active: Vec<Vec3>,
    pub passive: Vec<Vec3>,
}

impl SensedShape {
    /// Passive then active samples.
    pub fn full(&self) -> Vec<Vec3> {
        let mut pts = Vec::with_capacity(self.passive.len() + self.active.len());
        pts.extend_from_slice(&self.passive);
        pts.extend_from_slice(&self.active);
        pts
    }

    pub fn len(&self) -> usize {
        self.active.len() + self.passive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma` to every sample
/// of `truth` and splits off the last `active_samples` as the active part.
pub fn sense_points(truth: &[Vec3], active_samples: usize, sigma: f64, seed: u64) -> SensedShape {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy: Vec<Vec3> = if sigma > 0.0 {
        truth
            .iter()
            .map(|p| {
                let n = Vec3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                p + n * sigma
            })
            .collect()
    } else {
        truth.to_vec()
    };
    let split = noisy.len().saturating_sub(active_samples);
    SensedShape { passive: noisy[..split].to_vec(), active: noisy[split..].to_vec() }
}

/// Noisy read-out of the plant's ground-truth shape.
pub fn sense_shape(plant: &Plant, state: &PlantState, sigma: f64, seed: u64) -> SensedShape {
    let truth = plant.ground_truth_shape(state);
    sense_points(truth.points(), plant.params().active_samples(), sigma, seed)
}

/// Rod stiffnesses in N·mm².
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StiffnessParams {
    pub ei: f64,
    pub gj: f64,
}

impl Default for StiffnessParams {
    fn default() -> Self {
        Self { ei: 1.0, gj: 1.0 }
    }
}

impl StiffnessParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ei > 0.0 && self.gj > 0.0) || !self.ei.is_finite() || !self.gj.is_finite() {
            return Err(Error::Config(format!(
                "stiffness must be positive, got EI={} GJ={}",
                self.ei, self.gj
            )));
        }
        Ok(())
    }
}

/// Bending and torsion energy in N·mm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyReading {
    pub bending: f64,
    pub torsion: f64,
}

impl EnergyReading {
    pub fn total(&self) -> f64 {
        self.bending + self.torsion
    }
}

impl core::ops::Add for EnergyReading {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { bending: self.bending + o.bending, torsion: self.torsion + o.torsion }
    }
}

/// Elastic energy of a uniformly sampled shape.
pub fn elastic_energy(shape: &ArcShape, k: &StiffnessParams) -> Result<EnergyReading> {
    polyline_energy(shape.points(), k, DEFAULT_TORSION_FLOOR)
}

/// Elastic energy of any polyline with at least 5 samples.
pub fn polyline_energy(points: &[Vec3], k: &StiffnessParams, torsion_floor: f64) -> Result<EnergyReading> {
    if points.len() < 5 {
        return Err(Error::InvalidShape(format!(
            "energy needs at least 5 samples, got {}",
            points.len()
        )));
    }
    check_finite(points)?;
    let f = FrenetScratch::compute(points)?;
    Ok(sum_vertices(&f, 0..f.len(), k, torsion_floor))
}

fn sum_vertices(
    f: &FrenetScratch,
    range: core::ops::Range<usize>,
    k: &StiffnessParams,
    floor: f64,
) -> EnergyReading {
    let (mut b, mut t) = (0.0, 0.0);
    for i in range {
        let (kappa, tau) = f.vertex(i, floor);
        let w = f.weight(i);
        b += kappa * kappa * w;
        t += tau * tau * w;
    }
    EnergyReading { bending: 0.5 * k.ei * b, torsion: 0.5 * k.gj * t }
}

/// Samples of context a vertex's curvature and torsion depend on, per side.
const STENCIL: usize = 3;

/// Energy of `prefix ++ tail` for a fixed prefix and many tails.
///
/// Vertex terms only depend on samples within [`STENCIL`] of the vertex, so
/// the prefix contribution away from the junction is computed once.
#[derive(Debug, Clone)]
pub struct EnergyPrefix {
    /// Trailing prefix samples re-evaluated with every tail.
    context: Vec<Vec3>,
    /// Leading context samples whose vertices are already in `cached`.
    skip: usize,
    cached: EnergyReading,
    stiffness: StiffnessParams,
    floor: f64,
}

impl EnergyPrefix {
    pub fn new(prefix: &[Vec3], k: &StiffnessParams, torsion_floor: f64) -> Result<Self> {
        check_finite(prefix)?;
        let cut = prefix.len().saturating_sub(STENCIL + 1);
        if cut >= 2 * STENCIL {
            let f = FrenetScratch::compute(prefix)?;
            Ok(Self {
                context: prefix[cut - STENCIL..].to_vec(),
                skip: STENCIL,
                cached: sum_vertices(&f, 0..cut, k, torsion_floor),
                stiffness: *k,
                floor: torsion_floor,
            })
        } else {
            Ok(Self {
                context: prefix.to_vec(),
                skip: 0,
                cached: EnergyReading::default(),
                stiffness: *k,
                floor: torsion_floor,
            })
        }
    }

    /// Energy of the prefix followed by `tail`.
    pub fn energy_with(&self, tail: &[Vec3]) -> Result<EnergyReading> {
        let mut pts = Vec::with_capacity(self.context.len() + tail.len());
        pts.extend_from_slice(&self.context);
        pts.extend_from_slice(tail);
        self.energy_of_window(&pts)
    }

    /// Energy of the prefix followed by the concatenation of `parts`.
    pub fn energy_with_parts(&self, parts: &[&[Vec3]]) -> Result<EnergyReading> {
        let n: usize = parts.iter().map(|p| p.len()).sum();
        let mut pts = Vec::with_capacity(self.context.len() + n);
        pts.extend_from_slice(&self.context);
        for p in parts {
            pts.extend_from_slice(p);
        }
        self.energy_of_window(&pts)
    }

    fn energy_of_window(&self, pts: &[Vec3]) -> Result<EnergyReading> {
        if pts.len() < 5 {
            return Err(Error::InvalidShape(format!(
                "energy needs at least 5 samples, got {}",
                pts.len()
            )));
        }
        check_finite(&pts[self.context.len()..])?;
        let f = FrenetScratch::compute(pts)?;
        Ok(self.cached + sum_vertices(&f, self.skip..f.len(), &self.stiffness, self.floor))
    }
}

/// Least-squares polynomial fit of each coordinate against sample index,
/// evaluated back at the samples. `degree` 0 returns the input unchanged.
pub fn polynomial_smooth(points: &[Vec3], degree: usize) -> Vec<Vec3> {
    let n = points.len();
    if degree == 0 || n <= degree + 1 {
        return points.to_vec();
    }
    let cols = degree + 1;
    let scale = 2.0 / (n - 1) as f64;
    let mut v = DMatrix::<f64>::zeros(n, cols);
    for i in 0..n {
        let u = i as f64 * scale - 1.0;
        let mut p = 1.0;
        for j in 0..cols {
            v[(i, j)] = p;
            p *= u;
        }
    }
    let vt = v.transpose();
    let Some(chol) = (&vt * &v).cholesky() else {
        return points.to_vec();
    };
    let mut out = alloc::vec![Vec3::zeros(); n];
    for c in 0..3 {
        let x = DVector::from_iterator(n, points.iter().map(|p| p[c]));
        let coef = chol.solve(&(&vt * x));
        let fit = &v * coef;
        for i in 0..n {
            out[i][c] = fit[i];
        }
    }
    out
}

/// Sliding-window polynomial smoothing: every sample is replaced by the
/// degree-`degree` least-squares fit over the `2 * half_window + 1` samples
/// around it. Windows are shifted inward at the ends rather than shrunk.
pub fn local_polynomial_smooth(points: &[Vec3], half_window: usize, degree: usize) -> Vec<Vec3> {
    let n = points.len();
    let w = (2 * half_window + 1).min(n);
    if degree == 0 || half_window == 0 || w <= degree + 1 {
        return points.to_vec();
    }
    let cols = degree + 1;
    let scale = 2.0 / (w - 1) as f64;
    let v = DMatrix::<f64>::from_fn(w, cols, |i, j| {
        let u = i as f64 * scale - 1.0;
        (0..j).fold(1.0, |p, _| p * u)
    });
    let vt = v.transpose();
    let Some(inv) = (&vt * &v).try_inverse() else {
        return points.to_vec();
    };
    // Row r holds the weights that evaluate the window fit at sample r.
    let hat = &v * inv * vt;
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half_window).min(n - w);
            let r = i - start;
            (0..w).fold(Vec3::zeros(), |acc, k| acc + points[start + k] * hat[(r, k)])
        })
        .collect()
}

/// Per-sample constant-position Kalman filter over the passive body.
///
/// Every sample has an isotropic 3-D Gaussian estimate. Samples are stored
/// distal first (index 0 sits next to the active base) so that their identity
/// survives insertion, which adds samples at the proximal end.
#[derive(Debug, Clone, PartialEq)]
pub struct PassiveShapeFilter {
    /// Estimates, distal first.
    mean: Vec<Vec3>,
    /// Isotropic variances; `None` until the first measurement.
    var: Vec<Option<f64>>,
    process_sigma: f64,
    measurement_sigma: f64,
}

impl PassiveShapeFilter {
    pub fn new(samples: usize, process_sigma: f64, measurement_sigma: f64) -> Result<Self> {
        if !(process_sigma >= 0.0 && measurement_sigma >= 0.0) {
            return Err(Error::Config("filter noise levels must be non-negative".into()));
        }
        Ok(Self {
            mean: alloc::vec![Vec3::zeros(); samples],
            var: alloc::vec![None; samples],
            process_sigma,
            measurement_sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Estimates in proximal-to-distal order.
    pub fn estimate(&self) -> Vec<Vec3> {
        self.mean.iter().rev().copied().collect()
    }

    /// Per-sample variances in proximal-to-distal order (`None` before the
    /// first measurement).
    pub fn variances(&self) -> Vec<Option<f64>> {
        self.var.iter().rev().copied().collect()
    }

    /// Sum of the covariance traces of all initialised samples.
    pub fn covariance_trace(&self) -> f64 {
        self.var.iter().flatten().map(|v| 3.0 * v).sum()
    }

    /// Constant-position prediction: variances grow by the process noise.
    pub fn predict(&mut self) {
        let q = self.process_sigma * self.process_sigma;
        for v in self.var.iter_mut().flatten() {
            *v += q;
        }
    }

    /// Measurement update with a passive shape in proximal-to-distal order.
    pub fn update(&mut self, measurement: &[Vec3]) -> Result<()> {
        if measurement.len() != self.mean.len() {
            return Err(Error::FilterDimension { expected: self.mean.len(), got: measurement.len() });
        }
        check_finite(measurement)?;
        let r = self.measurement_sigma * self.measurement_sigma;
        for (i, z) in measurement.iter().rev().enumerate() {
            match self.var[i] {
                None => {
                    self.mean[i] = *z;
                    self.var[i] = Some(r);
                }
                Some(p) => {
                    let gain = if p + r > 0.0 { p / (p + r) } else { 1.0 };
                    let innovation = z - self.mean[i];
                    self.mean[i] += innovation * gain;
                    self.var[i] = Some((1.0 - gain) * p);
                }
            }
        }
        Ok(())
    }

    /// Moves every estimate `d` mm distally along the body and resizes the
    /// filter to `samples`.
    ///
    /// Under follow-the-leader insertion the body path is fixed in space and
    /// a sample at fixed distance from the tip slides distally along it.
    /// `distal` is the sensed active shape (proximal to distal) that extends
    /// the path beyond the passive estimates. New samples appear at the
    /// proximal end uninitialised; retraction drops proximal samples.
    pub fn advance(&mut self, d: f64, distal: &[Vec3], samples: usize) {
        if d != 0.0 && self.var.iter().any(Option::is_some) {
            // Path from the tip back to the port.
            let mut path: Vec<Vec3> = distal.iter().rev().copied().collect();
            let start = distal.len();
            let mut known = 0;
            for (m, v) in self.mean.iter().zip(&self.var) {
                if v.is_none() {
                    break;
                }
                path.push(*m);
                known += 1;
            }
            let mut arclength = alloc::vec![0.0; path.len()];
            for i in 1..path.len() {
                arclength[i] = arclength[i - 1] + (path[i] - path[i - 1]).norm();
            }
            for i in 0..known {
                self.mean[i] = point_at_arclength(&path, arclength[start + i] - d);
            }
            self.predict();
        }
        self.mean.resize(samples, Vec3::zeros());
        self.var.resize(samples, None);
    }
}

/// Updates `filter` with `measurement` and returns the one-step-ahead
/// passive shape (proximal to distal).
pub fn predict_passive_shape(filter: &mut PassiveShapeFilter, measurement: &[Vec3]) -> Result<Vec<Vec3>> {
    filter.update(measurement)?;
    // The constant-position model leaves the mean unchanged and only
    // inflates the variance.
    let prediction = filter.estimate();
    filter.predict();
    Ok(prediction)
}
