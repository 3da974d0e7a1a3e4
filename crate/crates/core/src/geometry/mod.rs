//! Sampled curves and discrete differential geometry.
//!
//! Shapes are polylines in millimetres. An [`ArcShape`] is the validated form:
//! every chord between consecutive samples has the same length. Sensed and
//! predicted shapes are plain point slices, since noise and linearised updates
//! break exact uniformity; the curvature and energy routines accept both.

mod lumen;

pub use lumen::{make_phantom, Lumen, PhantomKind, PhantomSpec, Piece};

use alloc::format;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result, Vec3};

/// Relative tolerance on chord uniformity for [`ArcShape`].
pub const SPACING_TOLERANCE: f64 = 1e-6;

/// Default sample spacing in millimetres.
pub const DEFAULT_SPACING: f64 = 5.0;

/// Default curvature scale below which the Frenet binormal is treated as
/// undefined when computing torsion (1/mm).
pub const DEFAULT_TORSION_FLOOR: f64 = 2e-3;

/// Uniformly sampled 3-D curve, ordered proximal to distal.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcShape {
    points: Vec<Vec3>,
    spacing: f64,
}

impl ArcShape {
    /// Validates `points` against `spacing`.
    pub fn new(points: Vec<Vec3>, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidShape(format!("spacing must be positive, got {spacing}")));
        }
        if points.len() < 3 {
            return Err(Error::InvalidShape(format!(
                "need at least 3 samples, got {}",
                points.len()
            )));
        }
        check_finite(&points)?;
        for (i, w) in points.windows(2).enumerate() {
            let d = (w[1] - w[0]).norm();
            if (d - spacing).abs() > SPACING_TOLERANCE * spacing {
                return Err(Error::InvalidShape(format!(
                    "chord {i} is {d} mm, expected {spacing} mm"
                )));
            }
        }
        Ok(Self { points, spacing })
    }

    /// Builds a shape whose spacing is taken from the first chord.
    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidShape(format!(
                "need at least 3 samples, got {}",
                points.len()
            )));
        }
        let spacing = (points[1] - points[0]).norm();
        Self::new(points, spacing)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Chord length from the first to the last sample.
    pub fn length(&self) -> f64 {
        self.spacing * (self.points.len() - 1) as f64
    }

    /// Flattened coordinates `[x0, y0, z0, x1, ...]`.
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.points)
    }

    /// Resamples to spacing `spacing`. See [`resample`].
    pub fn resample(&self, spacing: f64) -> Result<ArcShape> {
        resample_points(&self.points, spacing)
    }
}

/// Resamples `shape` to uniform chord `spacing`.
///
/// Samples are placed by walking the polyline and intersecting it with a
/// sphere of radius `spacing` around the previous sample, so chords are exact.
/// The unused remainder is split evenly between both ends.
pub fn resample(shape: &ArcShape, spacing: f64) -> Result<ArcShape> {
    resample_points(shape.points(), spacing)
}

/// [`resample`] for an arbitrary polyline.
pub fn resample_points(points: &[Vec3], spacing: f64) -> Result<ArcShape> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::InvalidShape(format!("spacing must be positive, got {spacing}")));
    }
    check_finite(points)?;
    if points.len() < 2 {
        return Err(Error::InvalidShape("cannot resample fewer than 2 points".into()));
    }
    let (first, leftover) = walk_chords(points, 0.0, spacing, usize::MAX);
    let samples = if leftover > 1e-9 * spacing {
        walk_chords(points, 0.5 * leftover, spacing, usize::MAX).0
    } else {
        first
    };
    ArcShape::new(samples, spacing)
}

/// Walks `points` from arc length `offset`, emitting samples separated by
/// exact chords of length `step`, at most `max_samples` of them.
///
/// Returns the samples and the polyline arc length left after the last one.
pub(crate) fn walk_chords(
    points: &[Vec3],
    offset: f64,
    step: f64,
    max_samples: usize,
) -> (Vec<Vec3>, f64) {
    let mut out = Vec::new();
    if points.is_empty() || max_samples == 0 {
        return (out, 0.0);
    }
    let (mut seg, mut t) = locate(points, offset);
    let mut current = lerp_segment(points, seg, t);
    out.push(current);
    let last = points.len() - 1;
    while out.len() < max_samples {
        match next_chord(points, seg, t, current, step) {
            Some((s, u, p)) => {
                seg = s;
                t = u;
                current = p;
                out.push(p);
            }
            None => break,
        }
        if seg >= last {
            break;
        }
    }
    let remaining = if seg >= last {
        0.0
    } else {
        let mut r = (points[seg + 1] - current).norm();
        for w in points[seg + 1..].windows(2) {
            r += (w[1] - w[0]).norm();
        }
        r
    };
    (out, remaining)
}

/// Segment index and parameter for arc length `s` along the polyline.
fn locate(points: &[Vec3], s: f64) -> (usize, f64) {
    let mut acc = 0.0;
    for i in 0..points.len().saturating_sub(1) {
        let len = (points[i + 1] - points[i]).norm();
        if acc + len >= s && len > 0.0 {
            return (i, ((s - acc) / len).clamp(0.0, 1.0));
        }
        acc += len;
    }
    (points.len().saturating_sub(1), 0.0)
}

fn lerp_segment(points: &[Vec3], seg: usize, t: f64) -> Vec3 {
    if seg + 1 >= points.len() {
        return points[points.len() - 1];
    }
    points[seg] + (points[seg + 1] - points[seg]) * t
}

/// First point after `(seg, t)` on the polyline at distance `step` from `center`.
fn next_chord(
    points: &[Vec3],
    seg: usize,
    t: f64,
    center: Vec3,
    step: f64,
) -> Option<(usize, f64, Vec3)> {
    let snap = 1e-9 * step;
    for i in seg..points.len() - 1 {
        let a = points[i];
        let b = points[i + 1];
        let d = b - a;
        let dd = d.norm_squared();
        if dd == 0.0 {
            continue;
        }
        // The segment end is within snapping distance: take it exactly.
        let end_dist = (b - center).norm();
        if (end_dist - step).abs() <= snap {
            return Some((i + 1, 0.0, b));
        }
        if end_dist < step {
            continue;
        }
        let f = a - center;
        let bq = f.dot(&d);
        let c = f.norm_squared() - step * step;
        let disc = bq * bq - dd * c;
        if disc < 0.0 {
            continue;
        }
        let root = (-bq + math::sqrt(disc)) / dd;
        let lo = if i == seg { t } else { 0.0 };
        if root >= lo && root <= 1.0 {
            return Some((i, root, a + d * root));
        }
    }
    None
}

/// Total polyline length.
pub fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Point at arc length `s` along the polyline. Values beyond either end are
/// linearly extrapolated along the end segment.
pub fn point_at_arclength(points: &[Vec3], s: f64) -> Vec3 {
    match points.len() {
        0 => Vec3::zeros(),
        1 => points[0],
        n => {
            if s <= 0.0 {
                let d = points[1] - points[0];
                let len = d.norm();
                return if len > 0.0 { points[0] + d * (s / len) } else { points[0] };
            }
            let mut acc = 0.0;
            for i in 0..n - 1 {
                let d = points[i + 1] - points[i];
                let len = d.norm();
                if acc + len >= s && len > 0.0 {
                    return points[i] + d * ((s - acc) / len);
                }
                acc += len;
            }
            let d = points[n - 1] - points[n - 2];
            let len = d.norm();
            if len > 0.0 {
                points[n - 1] + d * ((s - acc) / len)
            } else {
                points[n - 1]
            }
        }
    }
}

/// Every sample moved `d` mm further along the polyline, extrapolating past
/// the ends. This is how a follow-the-leader body looks after advancing `d`.
pub fn slide_along(points: &[Vec3], d: f64) -> Vec<Vec3> {
    let mut s = 0.0;
    let mut out = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        if i > 0 {
            s += (points[i] - points[i - 1]).norm();
        }
        out.push(point_at_arclength(points, s + d));
    }
    out
}

/// Unit tangent of the polyline segment containing arc length `s`.
pub fn tangent_at_arclength(points: &[Vec3], s: f64) -> Option<Vec3> {
    if points.len() < 2 {
        return None;
    }
    let mut acc = 0.0;
    let n = points.len();
    for i in 0..n - 1 {
        let d = points[i + 1] - points[i];
        let len = d.norm();
        if len > 0.0 && (acc + len >= s || i == n - 2) {
            return Some(d / len);
        }
        acc += len;
    }
    None
}

pub fn flatten(points: &[Vec3]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

pub fn unflatten(coords: &[f64]) -> Vec<Vec3> {
    coords.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

pub(crate) fn check_finite(points: &[Vec3]) -> Result<()> {
    if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::InvalidShape(format!("sample {i} has non-finite coordinates")));
    }
    Ok(())
}

/// Per-sample discrete Frenet curvature and torsion.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProfile {
    /// Curvature in 1/mm, non-negative.
    pub curvature: Vec<f64>,
    /// Torsion in 1/mm.
    pub torsion: Vec<f64>,
}

impl CurvatureProfile {
    pub fn len(&self) -> usize {
        self.curvature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curvature.is_empty()
    }
}

/// Discrete curvature and torsion of a uniformly sampled shape.
pub fn curvature_torsion(shape: &ArcShape) -> Result<CurvatureProfile> {
    frenet_profile(shape.points(), DEFAULT_TORSION_FLOOR)
}

/// Discrete curvature and torsion of any polyline with at least 5 samples.
///
/// Curvature at an interior sample is the inverse radius of the circle through
/// it and its two neighbours. Torsion on each chord is the signed rotation of
/// the discrete binormal about that chord divided by its length, scaled by
/// `k²/(k² + floor⁴)` with `k = κ_i κ_(i+1)` so that nearly straight
/// stretches (where the binormal is noise) do not contribute. Binormals are
/// compared as lines, so a planar inflection has no torsion. Sample torsion
/// averages the adjacent chords; end samples copy the nearest interior
/// estimate.
pub fn frenet_profile(points: &[Vec3], torsion_floor: f64) -> Result<CurvatureProfile> {
    let n = points.len();
    if n < 5 {
        return Err(Error::InvalidShape(format!("need at least 5 samples, got {n}")));
    }
    check_finite(points)?;
    let frames = FrenetScratch::compute(points)?;
    let mut curvature = Vec::with_capacity(n);
    let mut torsion = Vec::with_capacity(n);
    for i in 0..n {
        let (k, t) = frames.vertex(i, torsion_floor);
        curvature.push(k);
        torsion.push(t);
    }
    Ok(CurvatureProfile { curvature, torsion })
}

/// Edge vectors, vertex curvatures and binormals of a polyline.
pub(crate) struct FrenetScratch {
    edges: Vec<Vec3>,
    edge_len: Vec<f64>,
    kappa: Vec<f64>,
    binormal: Vec<Option<Vec3>>,
}

impl FrenetScratch {
    pub(crate) fn compute(points: &[Vec3]) -> Result<Self> {
        let n = points.len();
        let mut edges = Vec::with_capacity(n - 1);
        let mut edge_len = Vec::with_capacity(n - 1);
        for (i, w) in points.windows(2).enumerate() {
            let e = w[1] - w[0];
            let l = e.norm();
            if !(l > 0.0) {
                return Err(Error::InvalidShape(format!("samples {i} and {} coincide", i + 1)));
            }
            edges.push(e);
            edge_len.push(l);
        }
        let mut kappa = alloc::vec![0.0; n];
        let mut binormal = alloc::vec![None; n];
        for i in 1..n - 1 {
            let a = edges[i - 1];
            let b = edges[i];
            let cross = a.cross(&b);
            let cn = cross.norm();
            let chord = (a + b).norm();
            kappa[i] = if chord > 0.0 {
                2.0 * cn / (edge_len[i - 1] * edge_len[i] * chord)
            } else {
                0.0
            };
            if cn > 0.0 {
                binormal[i] = Some(cross / cn);
            }
        }
        kappa[0] = kappa[1];
        kappa[n - 1] = kappa[n - 2];
        Ok(Self { edges, edge_len, kappa, binormal })
    }

    /// Torsion on edge `i` (between vertices `i` and `i + 1`), defined for
    /// `1 <= i <= n - 3`.
    fn edge_torsion(&self, i: usize, floor: f64) -> f64 {
        let (Some(b0), Some(b1)) = (self.binormal[i], self.binormal[i + 1]) else {
            return 0.0;
        };
        let t = self.edges[i] / self.edge_len[i];
        let phi = math::atan2(b0.cross(&b1).dot(&t), b0.dot(&b1));
        // Binormals are compared as lines: a half-turn flip is an inflection
        // (curvature changing sign), not twist.
        let phi = phi - core::f64::consts::PI * math::round(phi / core::f64::consts::PI);
        let k2 = self.kappa[i] * self.kappa[i + 1];
        let f4 = floor * floor * floor * floor;
        let gate = if k2 > 0.0 { k2 * k2 / (k2 * k2 + f4) } else { 0.0 };
        gate * phi / self.edge_len[i]
    }

    /// Curvature and torsion at vertex `i`.
    pub(crate) fn vertex(&self, i: usize, floor: f64) -> (f64, f64) {
        let n = self.kappa.len();
        let i_t = i.clamp(1, n - 2);
        let tau = if i_t == 1 {
            self.edge_torsion(1, floor)
        } else if i_t == n - 2 {
            self.edge_torsion(n - 3, floor)
        } else {
            0.5 * (self.edge_torsion(i_t - 1, floor) + self.edge_torsion(i_t, floor))
        };
        (self.kappa[i], tau)
    }

    /// Trapezoidal arc-length weight of vertex `i`.
    pub(crate) fn weight(&self, i: usize) -> f64 {
        let n = self.kappa.len();
        if i == 0 {
            0.5 * self.edge_len[0]
        } else if i == n - 1 {
            0.5 * self.edge_len[n - 2]
        } else {
            0.5 * (self.edge_len[i - 1] + self.edge_len[i])
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.kappa.len()
    }
}

/// Signed angle helper used by tests and the plant: the minimal rotation that
/// takes unit vector `from` onto unit vector `to`.
pub fn align_rotation(from: &Vec3, to: &Vec3) -> nalgebra::Rotation3<f64> {
    let (a, b) = (from.normalize(), to.normalize());
    let c = a.cross(&b);
    let sin = c.norm();
    let cos = a.dot(&b);
    // atan2 rather than acos: with nearly parallel inputs `cos` can round
    // past 1 while `c` is still non-zero.
    match nalgebra::Unit::try_new(c, 0.0) {
        Some(axis) => nalgebra::Rotation3::from_axis_angle(&axis, math::atan2(sin, cos)),
        None if cos > 0.0 => nalgebra::Rotation3::identity(),
        None => {
            // Antiparallel: rotate by pi about any axis orthogonal to `from`.
            let axis = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let ortho = nalgebra::Unit::new_normalize(a.cross(&axis));
            nalgebra::Rotation3::from_axis_angle(&ortho, core::f64::consts::PI)
        }
    }
}

/// Number of samples needed to cover `length` at `spacing` (inclusive ends).
pub fn sample_count(length: f64, spacing: f64) -> usize {
    math::floor(length / spacing + 1e-9) as usize + 1
}

/// Samples the straight segment from `start` along unit `dir`.
pub fn straight_line(start: Vec3, dir: Vec3, length: f64, spacing: f64) -> Result<ArcShape> {
    let n = sample_count(length, spacing);
    let pts = (0..n).map(|i| start + dir * (i as f64 * spacing)).collect();
    ArcShape::new(pts, spacing)
}
