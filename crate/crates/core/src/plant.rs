//! Ground-truth endoscope plant.
//!
//! The plant is hidden from the controller. Three motors drive it: `q1` and
//! `q2` bend the distal active section, `q3` inserts the body. The active
//! section is a single constant-curvature arc whose curvature vector is
//! `k_q (q1, q2)` in the base frame. The passive body follows the leader: when
//! the scope advances, the base of the active section slides along the current
//! active shape and the path it leaves behind becomes passive body. Active
//! samples that would leave the lumen are pushed back inside chord by chord.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::{
    align_rotation, polyline_length, walk_chords, ArcShape, Lumen, DEFAULT_SPACING,
};
use crate::math;
use crate::{Error, Result, Vec2, Vec3};

/// Length of the bendable distal section in mm.
pub const ACTIVE_LENGTH: f64 = 120.0;
/// Total sensed length of the scope in mm.
pub const SENSING_LENGTH: f64 = 1000.0;

/// Motor positions: deflection `q1`, `q2` in rad and insertion `q3` in mm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MotorState {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl MotorState {
    pub const fn new(q1: f64, q2: f64, q3: f64) -> Self {
        Self { q1, q2, q3 }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.q1, self.q2, self.q3)
    }

    /// The deflection pair `q' = (q1, q2)`.
    pub fn deflection(&self) -> Vec2 {
        Vec2::new(self.q1, self.q2)
    }

    /// Euler step `q + q̇ dt` without any clamping.
    pub fn integrate(&self, v: &MotorVelocity, dt: f64) -> Self {
        Self::new(self.q1 + v.qd1 * dt, self.q2 + v.qd2 * dt, self.q3 + v.qd3 * dt)
    }
}

/// Motor velocities in rad/s, rad/s and mm/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MotorVelocity {
    pub qd1: f64,
    pub qd2: f64,
    pub qd3: f64,
}

impl MotorVelocity {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0);

    pub const fn new(qd1: f64, qd2: f64, qd3: f64) -> Self {
        Self { qd1, qd2, qd3 }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.qd1, self.qd2, self.qd3)
    }

    pub fn deflection(&self) -> Vec2 {
        Vec2::new(self.qd1, self.qd2)
    }

    pub fn is_finite(&self) -> bool {
        self.qd1.is_finite() && self.qd2.is_finite() && self.qd3.is_finite()
    }
}

/// Per-axis speed limits.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RateLimits {
    /// Bound on `|q̇1|` and `|q̇2|` in rad/s.
    pub deflection: f64,
    /// Bound on `|q̇3|` in mm/s.
    pub insertion: f64,
}

impl Default for RateLimits {
    fn default() -> Self {
        Self { deflection: 0.5, insertion: 20.0 }
    }
}

impl RateLimits {
    /// True when every component is finite and within its bound.
    pub fn admits(&self, v: &MotorVelocity) -> bool {
        let slack = 1.0 + 1e-12;
        v.is_finite()
            && v.qd1.abs() <= self.deflection * slack
            && v.qd2.abs() <= self.deflection * slack
            && v.qd3.abs() <= self.insertion * slack
    }

    /// Clamps deflection rates to the limits and insertion to
    /// `[insertion_min, insertion]`. Non-finite components become the lower
    /// admissible value.
    pub fn clamp(&self, v: &MotorVelocity, insertion_min: f64) -> MotorVelocity {
        let lo = insertion_min.clamp(0.0, self.insertion);
        let c = |x: f64, a: f64, b: f64| if x.is_finite() { x.clamp(a, b) } else { a.max(0.0).min(b) };
        MotorVelocity::new(
            c(v.qd1, -self.deflection, self.deflection),
            c(v.qd2, -self.deflection, self.deflection),
            c(v.qd3, lo, self.insertion),
        )
    }
}

/// Seeded actuation disturbance: a random-walk gain on every axis plus
/// additive white noise on the applied velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DisturbanceSpec {
    /// Gain random-walk intensity in 1/sqrt(s). Gains stay within [0.5, 1.5].
    pub gain_drift: f64,
    /// Standard deviation of additive deflection-rate noise in rad/s.
    pub deflection_noise: f64,
    /// Standard deviation of additive insertion-rate noise in mm/s.
    pub insertion_noise: f64,
    pub seed: u64,
}

impl DisturbanceSpec {
    pub fn is_active(&self) -> bool {
        self.gain_drift > 0.0 || self.deflection_noise > 0.0 || self.insertion_noise > 0.0
    }
}

/// Plant constants.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PlantParams {
    /// Active section length in mm.
    pub active_length: f64,
    /// Curvature per radian of deflection motor travel (1/mm per rad).
    pub k_q: f64,
    /// Bound on `|q1|` and `|q2|` in rad.
    pub deflection_limit: f64,
    /// Largest insertion in mm.
    pub insertion_max: f64,
    pub rate_limits: RateLimits,
    /// Resolution of the internal active-section polyline in mm.
    pub fine_spacing: f64,
    /// Clearance kept from the wall by contact projection in mm.
    pub contact_margin: f64,
    /// Wall penetration of the unconstrained active section above which the
    /// scope locks, in mm.
    pub lock_depth: f64,
    /// Sample spacing of [`Plant::ground_truth_shape`] in mm.
    pub spacing: f64,
    pub disturbance: DisturbanceSpec,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            active_length: ACTIVE_LENGTH,
            k_q: 0.01,
            deflection_limit: FRAC_PI_2,
            insertion_max: SENSING_LENGTH - ACTIVE_LENGTH,
            rate_limits: RateLimits::default(),
            fine_spacing: 0.5,
            contact_margin: 0.5,
            lock_depth: 50.0,
            spacing: DEFAULT_SPACING,
            disturbance: DisturbanceSpec::default(),
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("active_length", self.active_length),
            ("k_q", self.k_q),
            ("deflection_limit", self.deflection_limit),
            ("rate_limits.deflection", self.rate_limits.deflection),
            ("rate_limits.insertion", self.rate_limits.insertion),
            ("fine_spacing", self.fine_spacing),
            ("lock_depth", self.lock_depth),
            ("spacing", self.spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("plant {name} must be positive, got {v}")));
            }
        }
        if !(self.insertion_max >= 0.0) {
            return Err(Error::Config(format!(
                "plant insertion_max must be non-negative, got {}",
                self.insertion_max
            )));
        }
        if !(self.contact_margin >= 0.0) {
            return Err(Error::Config("plant contact_margin must be non-negative".into()));
        }
        if self.active_length + self.insertion_max > SENSING_LENGTH + 1e-9 {
            return Err(Error::Config(format!(
                "active length plus insertion range exceeds the {SENSING_LENGTH} mm sensing length"
            )));
        }
        if self.spacing > self.active_length / 2.0 {
            return Err(Error::Config("plant spacing is too coarse for the active section".into()));
        }
        let d = &self.disturbance;
        if !(d.gain_drift >= 0.0 && d.deflection_noise >= 0.0 && d.insertion_noise >= 0.0) {
            return Err(Error::Config("disturbance intensities must be non-negative".into()));
        }
        Ok(())
    }

    /// Number of ground-truth samples on the active section.
    pub fn active_samples(&self) -> usize {
        math::floor(self.active_length / self.spacing + 0.5) as usize + 1
    }
}

/// Camera pose: the rotation's columns are the camera x, y and optical axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    pub rotation: Rotation3<f64>,
}

impl CameraPose {
    pub fn optical_axis(&self) -> Vec3 {
        self.rotation * Vec3::z()
    }
}

/// Complete plant state. Cloning it is how rollouts fork the plant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    motors: MotorState,
    time: f64,
    base: CameraPose,
    /// Inserted body from the port to the base of the active section.
    passive: Vec<Vec3>,
    /// Active section from base to tip at the fine spacing.
    active: Vec<Vec3>,
    tip: CameraPose,
    gains: Vector3<f64>,
    contact: bool,
    rng: ChaCha8Rng,
}

impl PlantState {
    pub fn motors(&self) -> MotorState {
        self.motors
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Frame at the proximal end of the active section.
    pub fn base(&self) -> CameraPose {
        self.base
    }

    pub fn tip(&self) -> CameraPose {
        self.tip
    }

    pub fn passive_points(&self) -> &[Vec3] {
        &self.passive
    }

    pub fn active_points(&self) -> &[Vec3] {
        &self.active
    }

    /// Whether contact projection moved any active sample on the last update.
    pub fn in_contact(&self) -> bool {
        self.contact
    }

    /// Current actuation gains (all one without disturbance).
    pub fn gains(&self) -> Vector3<f64> {
        self.gains
    }

    /// Body polyline from port to tip.
    pub fn body_points(&self) -> Vec<Vec3> {
        let mut pts = Vec::with_capacity(self.passive.len() + self.active.len());
        pts.extend_from_slice(&self.passive);
        pts.extend_from_slice(&self.active[1..]);
        pts
    }
}

/// Free constant-curvature tip pose for curvature vector `kappa` (base-frame
/// x and y components) over `length`.
pub fn cc_tip(base: &CameraPose, kappa: Vec2, length: f64) -> CameraPose {
    let (p, r) = cc_local(kappa, length);
    CameraPose { position: base.position + base.rotation * p, rotation: base.rotation * r }
}

/// Position and rotation at arc length `s` of a constant-curvature arc that
/// starts at the origin heading along +z.
fn cc_local(kappa: Vec2, s: f64) -> (Vec3, Rotation3<f64>) {
    let k = kappa.norm();
    if k < 1e-12 {
        return (Vec3::new(0.0, 0.0, s), Rotation3::identity());
    }
    let d = Vec3::new(kappa.x / k, kappa.y / k, 0.0);
    let half = math::sin(0.5 * k * s);
    let lateral = 2.0 * half * half / k;
    let axial = math::sin(k * s) / k;
    let axis = Unit::new_normalize(Vec3::new(-d.y, d.x, 0.0));
    (d * lateral + Vec3::z() * axial, Rotation3::from_axis_angle(&axis, k * s))
}

fn cc_polyline(base: &CameraPose, kappa: Vec2, length: f64, fine: f64) -> Vec<Vec3> {
    let n = math::ceil(length / fine - 1e-9).max(1.0) as usize;
    (0..=n)
        .map(|j| base.position + base.rotation * cc_local(kappa, length * j as f64 / n as f64).0)
        .collect()
}

/// The plant: parameters plus the lumen it lives in.
#[derive(Debug, Clone)]
pub struct Plant {
    params: PlantParams,
    lumen: Lumen,
}

impl Plant {
    pub fn new(params: PlantParams, lumen: Lumen) -> Result<Self> {
        params.validate()?;
        if lumen.length() < params.active_length {
            return Err(Error::Config("lumen is shorter than the active section".into()));
        }
        Ok(Self { params, lumen })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn lumen(&self) -> &Lumen {
        &self.lumen
    }

    /// Curvature vector produced by the deflection motors.
    pub fn curvature(&self, q: &MotorState) -> Vec2 {
        q.deflection() * self.params.k_q
    }

    /// State with motors at `q`. Any initial insertion is laid along the
    /// lumen centreline from the port.
    pub fn initial(&self, q: MotorState, seed: u64) -> Result<PlantState> {
        let p = &self.params;
        if !(q.q1.is_finite() && q.q2.is_finite() && q.q3.is_finite()) {
            return Err(Error::InvalidInput("initial motor state is not finite".into()));
        }
        let q = MotorState::new(
            q.q1.clamp(-p.deflection_limit, p.deflection_limit),
            q.q2.clamp(-p.deflection_limit, p.deflection_limit),
            q.q3.clamp(0.0, p.insertion_max),
        );
        let n = math::ceil(q.q3 / p.fine_spacing - 1e-9).max(0.0) as usize;
        let mut passive = Vec::with_capacity(n + 1);
        passive.push(self.lumen.frame_at(0.0).0);
        for j in 1..=n {
            passive.push(self.lumen.frame_at(q.q3 * j as f64 / n as f64).0);
        }
        let (bp, br) = self.lumen.frame_at(q.q3);
        let base = CameraPose { position: bp, rotation: br };
        let mut state = PlantState {
            motors: q,
            time: 0.0,
            base,
            passive,
            active: Vec::new(),
            tip: base,
            gains: Vector3::repeat(1.0),
            contact: false,
            rng: ChaCha8Rng::seed_from_u64(seed ^ p.disturbance.seed),
        };
        self.rebuild_active(&mut state)?;
        Ok(state)
    }

    /// Advances the plant by one explicit Euler step of `qd` over `dt`.
    pub fn step(&self, state: &PlantState, qd: &MotorVelocity, dt: f64) -> Result<PlantState> {
        let p = &self.params;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        if !p.rate_limits.admits(qd) {
            return Err(Error::InvalidInput(format!(
                "velocity ({}, {}, {}) violates the rate limits",
                qd.qd1, qd.qd2, qd.qd3
            )));
        }
        let mut next = state.clone();
        next.time += dt;
        let applied = self.disturb(&mut next, qd, dt);
        let target = state.motors.integrate(&applied, dt);
        let q = MotorState::new(
            target.q1.clamp(-p.deflection_limit, p.deflection_limit),
            target.q2.clamp(-p.deflection_limit, p.deflection_limit),
            target.q3.clamp(0.0, p.insertion_max),
        );
        let advance = q.q3 - state.motors.q3;
        next.motors = q;
        if advance > 0.0 {
            self.advance_base(&mut next, advance);
        } else if advance < 0.0 {
            self.retract_base(&mut next, -advance);
        }
        self.rebuild_active(&mut next)?;
        Ok(next)
    }

    /// Camera frame at the distal tip.
    pub fn true_tip_pose(&self, state: &PlantState) -> CameraPose {
        state.tip
    }

    /// Full body sampled every `spacing` mm, walking back from the tip so the
    /// active section always carries the same number of samples. Returned in
    /// port-to-tip order.
    pub fn ground_truth_shape(&self, state: &PlantState) -> ArcShape {
        let mut pts = state.body_points();
        pts.reverse();
        let (mut samples, _) = walk_chords(&pts, 0.0, self.params.spacing, usize::MAX);
        samples.reverse();
        ArcShape::new(samples, self.params.spacing)
            .expect("chord walk on a finite body yields a uniform shape")
    }

    fn disturb(&self, state: &mut PlantState, qd: &MotorVelocity, dt: f64) -> MotorVelocity {
        let d = &self.params.disturbance;
        if !d.is_active() {
            return *qd;
        }
        let mut normal = || -> f64 { state.rng.sample(StandardNormal) };
        let walk = d.gain_drift * math::sqrt(dt);
        let mut gains = state.gains;
        for g in gains.iter_mut() {
            *g = (*g + walk * normal()).clamp(0.5, 1.5);
        }
        let noise = Vector3::new(
            d.deflection_noise * normal(),
            d.deflection_noise * normal(),
            d.insertion_noise * normal(),
        );
        state.gains = gains;
        MotorVelocity::from_vector(&(qd.to_vector().component_mul(&gains) + noise))
    }

    /// Slides the base `d` mm along the current active shape; the path it
    /// covers is appended to the passive body.
    fn advance_base(&self, state: &mut PlantState, d: f64) {
        let active = &state.active;
        let mut acc = 0.0;
        let mut new_base = *active.last().expect("active section is never empty");
        let mut tangent = None;
        for i in 0..active.len() - 1 {
            let seg = active[i + 1] - active[i];
            let len = seg.norm();
            if len == 0.0 {
                continue;
            }
            tangent = Some(seg / len);
            if acc + len >= d {
                new_base = active[i] + seg * ((d - acc) / len);
                break;
            }
            acc += len;
            state.passive.push(active[i + 1]);
        }
        if state.passive.last().is_some_and(|p| (p - new_base).norm() > 1e-12) {
            state.passive.push(new_base);
        }
        if let Some(t) = tangent {
            let z = state.base.rotation * Vec3::z();
            state.base = CameraPose {
                position: new_base,
                rotation: align_rotation(&z, &t) * state.base.rotation,
            };
        }
    }

    /// Pulls the base back `d` mm along the passive body.
    fn retract_base(&self, state: &mut PlantState, d: f64) {
        let mut left = d;
        while state.passive.len() >= 2 && left > 0.0 {
            let n = state.passive.len();
            let seg = state.passive[n - 1] - state.passive[n - 2];
            let len = seg.norm();
            if len > left {
                state.passive[n - 1] = state.passive[n - 2] + seg * ((len - left) / len);
                left = 0.0;
            } else {
                state.passive.pop();
                left -= len;
            }
        }
        let n = state.passive.len();
        let position = state.passive[n - 1];
        let t = if n >= 2 {
            (state.passive[n - 1] - state.passive[n - 2]).normalize()
        } else {
            self.lumen.frame_at(0.0).1 * Vec3::z()
        };
        let z = state.base.rotation * Vec3::z();
        state.base = CameraPose { position, rotation: align_rotation(&z, &t) * state.base.rotation };
    }

    /// Recomputes the active section from the base frame and the deflection
    /// motors, pushing samples back inside the lumen where needed.
    fn rebuild_active(&self, state: &mut PlantState) -> Result<()> {
        let p = &self.params;
        let kappa = self.curvature(&state.motors);
        let free = cc_polyline(&state.base, kappa, p.active_length, p.fine_spacing);
        let free_tip = cc_tip(&state.base, kappa, p.active_length);
        let limit = self.lumen.radius() - p.contact_margin;
        let mut out = Vec::with_capacity(free.len());
        out.push(free[0]);
        let mut contact = false;
        for j in 1..free.len() {
            let prev = out[j - 1];
            let chord = free[j] - free[j - 1];
            let len = chord.norm();
            let mut cand = prev + chord;
            if self.lumen.closest_centerline(&cand).0 > limit {
                contact = true;
                for _ in 0..4 {
                    let proj = self.lumen.project_inside(&cand, p.contact_margin);
                    let dir = proj - prev;
                    let dn = dir.norm();
                    if dn == 0.0 {
                        break;
                    }
                    cand = prev + dir * (len / dn);
                    if self.lumen.closest_centerline(&cand).0 <= limit + 1e-9 {
                        break;
                    }
                }
                if self.lumen.signed_distance(&cand) > 0.0 {
                    cand = self.lumen.project_inside(&cand, p.contact_margin);
                }
            }
            out.push(cand);
        }
        if contact {
            let depth = free
                .iter()
                .step_by(8)
                .chain(core::iter::once(&free_tip.position))
                .map(|q| self.lumen.signed_distance(q))
                .fold(f64::NEG_INFINITY, f64::max);
            if depth > p.lock_depth {
                return Err(Error::ContactLock { depth_mm: depth });
            }
        }
        let tip = out[out.len() - 1];
        let n = out.len();
        let t_free = (free[n - 1] - free[n - 2]).normalize();
        let t_real = (out[n - 1] - out[n - 2]).normalize();
        state.tip = CameraPose {
            position: tip,
            rotation: align_rotation(&t_free, &t_real) * free_tip.rotation,
        };
        state.active = out;
        state.contact = contact;
        Ok(())
    }
}

/// Total length of the body polyline in mm.
pub fn body_length(state: &PlantState) -> f64 {
    polyline_length(&state.body_points())
}
