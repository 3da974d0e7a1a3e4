//! Steering: the damped pseudo-inverse controller, horizon prediction of the
//! image feature and of the rod energy, and the sampling MPC built on them.
//!
//! Shapes are ordered proximal to distal. The predicted body is the
//! concatenation `passive ++ ftl ++ active`, where `ftl` collects samples that
//! left the active section during the horizon.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::depth::ImageFeature;
use crate::geometry::{align_rotation, DEFAULT_TORSION_FLOOR};
use crate::jacobian::RbfJacobian;
use crate::math;
use crate::plant::{MotorState, MotorVelocity, RateLimits};
use crate::proprioception::{polyline_energy, EnergyPrefix, EnergyReading, StiffnessParams};
use crate::{Error, Result, Vec2, Vec3};

/// `q̇ = -μ_c Ĵᵀ(ĴĴᵀ + λ_d² I)⁻¹ e`, then clamped to the rate limits with
/// insertion held in `[insertion_min, limit]`.
///
/// With zero damping the Moore-Penrose inverse is used, so a rank-deficient
/// `Ĵ` still yields a bounded command.
pub fn velocity_control(
    e: &Vec2,
    jacobian: &DMatrix<f64>,
    mu_c: f64,
    damping: f64,
    limits: &RateLimits,
    insertion_min: f64,
) -> MotorVelocity {
    let raw = damped_step(e, jacobian, mu_c, damping);
    limits.clamp(&raw, insertion_min)
}

fn damped_step(e: &Vec2, jacobian: &DMatrix<f64>, mu_c: f64, damping: f64) -> MotorVelocity {
    if jacobian.nrows() != 2 || jacobian.ncols() != 3 || jacobian.iter().any(|x| !x.is_finite()) {
        return MotorVelocity::ZERO;
    }
    let j = nalgebra::Matrix2x3::from_iterator(jacobian.iter().copied());
    let v: Vector3<f64> = if damping > 0.0 {
        let a = j * j.transpose() + Matrix2::identity() * (damping * damping);
        match a.try_inverse() {
            Some(inv) => j.transpose() * (inv * e),
            None => Vector3::zeros(),
        }
    } else {
        match j.pseudo_inverse(1e-12) {
            Ok(p) => p * e,
            Err(_) => Vector3::zeros(),
        }
    };
    MotorVelocity::from_vector(&(v * -mu_c))
}

/// Features `y(t+1), …, y(t+Φ+1)` from `y(t+k+1) = y(t+k) + Ĵ(q(t+k)) q̇(t+k) Δt`
/// with Euler-integrated motors.
pub fn predict_feature(
    y: Vec2,
    estimator: &RbfJacobian,
    q: MotorState,
    velocities: &[MotorVelocity],
    dt: f64,
) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(velocities.len());
    let (mut y, mut q) = (y, q);
    for v in velocities {
        let j = estimator.eval(q.to_vector().as_slice());
        let dy = &j * v.to_vector();
        y += Vec2::new(dy[0], dy[1]) * dt;
        out.push(y);
        q = q.integrate(v, dt);
    }
    out
}

/// Follow-the-leader shift: the `m` most proximal active samples are appended
/// to the distal end of the follow-the-leader buffer.
pub fn ftl_shift(active: &[Vec3], ftl: &[Vec3], m: usize) -> Result<Vec<Vec3>> {
    if m > active.len() {
        return Err(Error::Shift { shift: m, available: active.len() });
    }
    let mut out = Vec::with_capacity(ftl.len() + m);
    out.extend_from_slice(ftl);
    out.extend_from_slice(&active[..m]);
    Ok(out)
}

/// The active section after it advanced by `m` samples: the same shape moved
/// rigidly so its base sits on old sample `m` and its base chord lies along
/// old chord `m`. The sample count is unchanged.
pub fn reanchor_active(active: &[Vec3], m: usize) -> Result<Vec<Vec3>> {
    if m == 0 {
        return Ok(active.to_vec());
    }
    if m + 1 >= active.len() {
        return Err(Error::Shift { shift: m, available: active.len().saturating_sub(2) });
    }
    let from = active[1] - active[0];
    let to = active[m + 1] - active[m];
    let r = align_rotation(&from.normalize(), &to.normalize());
    Ok(active.iter().map(|p| active[m] + r * (p - active[0])).collect())
}

/// Energy of `passive ++ ftl ++ active`. Junction chords longer than
/// `max_gap` are rejected as discontinuous.
pub fn predict_energy(
    active: &[Vec3],
    ftl: &[Vec3],
    passive: &[Vec3],
    k: &StiffnessParams,
    max_gap: f64,
) -> Result<EnergyReading> {
    let parts = [passive, ftl, active];
    let mut last: Option<Vec3> = None;
    let mut body = Vec::with_capacity(passive.len() + ftl.len() + active.len());
    for (idx, part) in parts.iter().enumerate() {
        if let (Some(prev), Some(first)) = (last, part.first()) {
            let gap = (first - prev).norm();
            if !(gap <= max_gap) {
                return Err(Error::InvalidShape(format!(
                    "junction before part {idx} spans {gap:.3} mm, more than {max_gap} mm"
                )));
            }
        }
        if let Some(p) = part.last() {
            last = Some(*p);
        }
        body.extend_from_slice(part);
    }
    polyline_energy(&body, k, DEFAULT_TORSION_FLOOR)
}

/// Horizon, weights and optimizer budget of the MPC.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MpcConfig {
    /// Φ; the horizon has Φ + 1 steps.
    pub horizon: usize,
    /// Control interval in s.
    pub dt: f64,
    /// η_k = eta_gain / 2^k.
    pub eta_gain: f64,
    /// λ_k = lambda_gain / 2^(k+1).
    pub lambda_gain: f64,
    /// Gain of the injected pseudo-inverse candidate.
    pub mu_c: f64,
    /// Damping of the injected pseudo-inverse candidate.
    pub damping: f64,
    pub limits: RateLimits,
    /// Lowest admissible insertion speed in mm/s.
    pub insertion_min: f64,
    /// Candidates per optimizer iteration.
    pub samples: usize,
    pub iterations: usize,
    /// Candidates kept to refit the sampling distribution.
    pub elites: usize,
    /// Torsion gate for energies of sensed shapes.
    pub torsion_floor: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.05,
            eta_gain: 1.0,
            lambda_gain: 1.0,
            mu_c: 0.5,
            damping: 0.05,
            limits: RateLimits::default(),
            insertion_min: 0.0,
            samples: 16,
            iterations: 3,
            elites: 4,
            torsion_floor: DEFAULT_TORSION_FLOOR,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("MPC time step must be positive");
        }
        if !(self.eta_gain >= 0.0) || !(self.lambda_gain >= 0.0) {
            return bad("MPC weights must be non-negative");
        }
        if !(self.mu_c >= 0.0) || !(self.damping >= 0.0) {
            return bad("controller gain and damping must be non-negative");
        }
        if !(self.limits.deflection > 0.0) || !(self.limits.insertion > 0.0) {
            return bad("rate limits must be positive");
        }
        if !(self.insertion_min >= 0.0 && self.insertion_min <= self.limits.insertion) {
            return bad("minimum insertion speed must lie within the insertion limit");
        }
        if self.samples == 0 || self.iterations == 0 || self.elites == 0 || self.elites > self.samples {
            return bad("optimizer budget needs samples >= elites >= 1 and iterations >= 1");
        }
        if !(self.torsion_floor >= 0.0) {
            return bad("torsion floor must be non-negative");
        }
        Ok(())
    }

    pub fn eta(&self, k: usize) -> f64 {
        self.eta_gain / math::exp2(k as f64)
    }

    pub fn lambda(&self, k: usize) -> f64 {
        self.lambda_gain / math::exp2(k as f64 + 1.0)
    }

    /// True when the energy term carries weight.
    pub fn uses_energy(&self) -> bool {
        self.lambda_gain > 0.0
    }
}

/// Everything the MPC sees at one tick. Weights are borrowed, so they are
/// frozen for the duration of the solve.
#[derive(Debug, Clone)]
pub struct MpcProblem<'a> {
    pub motors: MotorState,
    pub feature: ImageFeature,
    pub image: &'a RbfJacobian,
    /// Needed only when the energy term is weighted.
    pub shape: Option<&'a RbfJacobian>,
    /// Active shape, proximal to distal, base sample first.
    pub active: &'a [Vec3],
    /// Passive body estimate, proximal to distal, ending next to the base.
    pub passive: &'a [Vec3],
    pub stiffness: StiffnessParams,
    /// Sample spacing δs in mm.
    pub spacing: f64,
    /// First velocity of the previous solution, injected as a candidate.
    pub previous: Option<MotorVelocity>,
}

/// Result of one MPC solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// `q̇(t+k)` for `k = 0..=Φ`.
    pub velocities: Vec<MotorVelocity>,
    /// Predicted `y(t+k+1)` for `k = 0..=Φ`.
    pub features: Vec<Vec2>,
    /// Predicted `ℰ(t+k)` for `k = 0..=Φ+1`; empty when energy is unweighted.
    pub energies: Vec<f64>,
    pub objective: f64,
    /// Set when no candidate had a finite objective.
    pub degraded: bool,
}

impl MpcSolution {
    /// The velocity to apply now.
    pub fn first(&self) -> MotorVelocity {
        self.velocities[0]
    }
}

struct Rollout {
    objective: f64,
    features: Vec<Vec2>,
    energies: Vec<f64>,
}

/// Precomputed per-solve data shared by every candidate.
struct Context<'p, 'a> {
    problem: &'p MpcProblem<'a>,
    config: &'p MpcConfig,
    energy: Option<(EnergyPrefix, f64)>,
}

impl<'p, 'a> Context<'p, 'a> {
    fn new(problem: &'p MpcProblem<'a>, config: &'p MpcConfig) -> Result<Self> {
        config.validate()?;
        if problem.image.outputs() != 2 || problem.image.inputs() != 3 {
            return Err(Error::EstimatorDimension { expected: 6, got: problem.image.outputs() * problem.image.inputs() });
        }
        let energy = if config.uses_energy() {
            let shape = problem
                .shape
                .ok_or_else(|| Error::Config("energy-weighted MPC needs a shape Jacobian".into()))?;
            if shape.inputs() != 2 || shape.outputs() != 3 * problem.active.len() {
                return Err(Error::EstimatorDimension { expected: 3 * problem.active.len(), got: shape.outputs() });
            }
            if problem.active.len() < 3 {
                return Err(Error::InvalidShape("active shape needs at least 3 samples".into()));
            }
            if !(problem.spacing > 0.0) {
                return Err(Error::InvalidShape("sample spacing must be positive".into()));
            }
            problem.stiffness.validate()?;
            let prefix = EnergyPrefix::new(problem.passive, &problem.stiffness, config.torsion_floor)?;
            let e0 = prefix.energy_with(problem.active)?.total();
            Some((prefix, e0))
        } else {
            None
        };
        Ok(Self { problem, config, energy })
    }

    fn rollout(&self, v: &MotorVelocity, record: bool) -> Rollout {
        let p = self.problem;
        let c = self.config;
        let dt = c.dt;
        let vv = v.to_vector();
        let (mut q, mut y) = (p.motors, p.feature.y);
        let mut objective = 0.0;
        let mut features = Vec::new();
        let mut energies = Vec::new();
        let mut shape_state = self.energy.as_ref().map(|(_, e0)| {
            if record {
                energies.push(*e0);
            }
            (p.active.to_vec(), Vec::<Vec3>::new(), 0.0f64, *e0)
        });
        for k in 0..=c.horizon {
            let j = p.image.eval(q.to_vector().as_slice());
            let dy = &j * vv;
            y += Vec2::new(dy[0], dy[1]) * dt;
            objective += c.eta(k) * (y - p.feature.desired).norm_squared();
            if record {
                features.push(y);
            }
            if let (Some((active, ftl, carry, e_prev)), Some((prefix, _)), Some(shape)) =
                (shape_state.as_mut(), self.energy.as_ref(), p.shape)
            {
                let js = shape.eval(&[q.q1, q.q2]);
                let ds = &js * v.deflection();
                for (i, s) in active.iter_mut().enumerate() {
                    *s += Vec3::new(ds[3 * i], ds[3 * i + 1], ds[3 * i + 2]) * dt;
                }
                let x = *carry + v.qd3 * dt / p.spacing;
                let m = math::round(x).max(0.0);
                *carry = x - m;
                let m = m as usize;
                if m > 0 {
                    match ftl_shift(active, ftl, m).and_then(|f| Ok((f, reanchor_active(active, m)?))) {
                        Ok((f, a)) => {
                            *ftl = f;
                            *active = a;
                        }
                        Err(_) => {
                            objective = f64::NAN;
                            break;
                        }
                    }
                }
                let e = match prefix.energy_with_parts(&[ftl, active]) {
                    Ok(r) => r.total(),
                    Err(_) => f64::NAN,
                };
                objective += c.lambda(k) * (e - *e_prev) * (e - *e_prev);
                *e_prev = e;
                if record {
                    energies.push(e);
                }
            }
            q = q.integrate(v, dt);
        }
        Rollout { objective, features, energies }
    }

    fn solution(&self, v: MotorVelocity, degraded: bool) -> MpcSolution {
        let r = self.rollout(&v, true);
        let objective = if degraded { f64::INFINITY } else { r.objective };
        MpcSolution {
            velocities: alloc::vec![v; self.config.horizon + 1],
            features: r.features,
            energies: r.energies,
            objective,
            degraded,
        }
    }

    fn pinv_candidate(&self) -> MotorVelocity {
        let p = self.problem;
        let j = p.image.eval(p.motors.to_vector().as_slice());
        velocity_control(&p.feature.error(), &j, self.config.mu_c, self.config.damping, &self.config.limits, self.config.insertion_min)
    }

    fn fallback(&self) -> MpcSolution {
        let v = self.pinv_candidate();
        let v = if v.is_finite() { v } else { self.config.limits.clamp(&MotorVelocity::ZERO, self.config.insertion_min) };
        self.solution(v, true)
    }
}

/// Objective of a constant-velocity candidate:
/// `Σ_k η_k ‖y(t+k+1) - y_d‖² + Σ_k λ_k (ℰ(t+k+1) - ℰ(t+k))²`.
pub fn evaluate_candidate(problem: &MpcProblem<'_>, config: &MpcConfig, v: &MotorVelocity) -> Result<f64> {
    let ctx = Context::new(problem, config)?;
    Ok(ctx.rollout(v, false).objective)
}

/// Exhaustive solve over a fixed candidate set. Candidates are clamped to the
/// limits first; ties keep the earliest candidate.
pub fn solve_over_candidates(
    problem: &MpcProblem<'_>,
    config: &MpcConfig,
    candidates: &[MotorVelocity],
) -> Result<MpcSolution> {
    let ctx = Context::new(problem, config)?;
    let mut best: Option<(f64, MotorVelocity)> = None;
    for c in candidates {
        let v = config.limits.clamp(c, config.insertion_min);
        let obj = ctx.rollout(&v, false).objective;
        if obj.is_finite() && best.is_none_or(|(b, _)| obj < b) {
            best = Some((obj, v));
        }
    }
    Ok(match best {
        Some((_, v)) => ctx.solution(v, false),
        None => ctx.fallback(),
    })
}

/// Seeded cross-entropy search over constant-velocity candidates.
///
/// The first iteration always contains the damped pseudo-inverse command and
/// the previous solution, so the result is never worse than either under the
/// model. All candidates of an iteration are drawn before any is evaluated.
pub fn solve_mpc(problem: &MpcProblem<'_>, config: &MpcConfig, seed: u64) -> Result<MpcSolution> {
    let ctx = Context::new(problem, config)?;
    let limits = &config.limits;
    let lo3 = config.insertion_min.clamp(0.0, limits.insertion);
    let pinv = ctx.pinv_candidate();
    let mut mean = problem.previous.map(|p| limits.clamp(&p, lo3)).unwrap_or(pinv).to_vector();
    let mut std = Vector3::new(0.5 * limits.deflection, 0.5 * limits.deflection, 0.5 * (limits.insertion - lo3));
    let floor = Vector3::new(1e-3 * limits.deflection, 1e-3 * limits.deflection, 1e-3 * limits.insertion);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, MotorVelocity)> = None;
    for it in 0..config.iterations {
        let mut cands = Vec::with_capacity(config.samples + 2);
        if it == 0 {
            cands.push(pinv);
            if let Some(p) = problem.previous {
                cands.push(limits.clamp(&p, lo3));
            }
        }
        while cands.len() < config.samples {
            let mut z = Vector3::zeros();
            for i in 0..3 {
                z[i] = mean[i] + std[i] * rng.sample::<f64, _>(StandardNormal);
            }
            cands.push(limits.clamp(&MotorVelocity::from_vector(&z), lo3));
        }
        let mut scored: Vec<(f64, MotorVelocity)> = cands
            .iter()
            .map(|v| (ctx.rollout(v, false).objective, *v))
            .filter(|(o, _)| o.is_finite())
            .collect();
        if scored.is_empty() {
            continue;
        }
        // Stable sort keeps candidate order among equal objectives.
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        if best.is_none_or(|(b, _)| scored[0].0 < b) {
            best = Some(scored[0]);
        }
        let elites = &scored[..config.elites.min(scored.len())];
        let n = elites.len() as f64;
        let m: Vector3<f64> = elites.iter().map(|(_, v)| v.to_vector()).sum::<Vector3<f64>>() / n;
        let var: Vector3<f64> =
            elites.iter().map(|(_, v)| (v.to_vector() - m).component_mul(&(v.to_vector() - m))).sum::<Vector3<f64>>() / n;
        mean = m;
        std = var.map(math::sqrt).sup(&floor);
    }
    Ok(match best {
        Some((_, v)) => ctx.solution(v, false),
        None => ctx.fallback(),
    })
}

/// The vision-only problem: [`solve_mpc`] with every λ_k forced to zero.
pub fn solve_vision_mpc(problem: &MpcProblem<'_>, config: &MpcConfig, seed: u64) -> Result<MpcSolution> {
    let cfg = MpcConfig { lambda_gain: 0.0, ..config.clone() };
    solve_mpc(problem, &cfg, seed)
}
