//! The closed navigation loop, trial metrics and the paired comparison.
//!
//! One tick runs sense, render, ROI, flow measurement, adaptation, passive
//! filtering, control and the plant step, in that order. Every random draw
//! comes from a stream seeded by `(config seed, trial index)`, so a trial is
//! a pure function of its configuration.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{solve_mpc, solve_vision_mpc, velocity_control, MpcConfig, MpcProblem};
use crate::depth::{extract_roi, image_feature, render_depth, DepthMap, ImageFeature, Intrinsics, Roi};
use crate::geometry::{make_phantom, resample_points, slide_along, ArcShape, PhantomSpec, DEFAULT_SPACING};
use crate::jacobian::{AdaptationGains, RbfJacobian};
use crate::math;
use crate::plant::{MotorState, MotorVelocity, Plant, PlantParams, PlantState};
use crate::proprioception::{
    local_polynomial_smooth, polyline_energy, polynomial_smooth, predict_passive_shape, sense_shape, EnergyReading,
    PassiveShapeFilter, SensedShape, StiffnessParams, DEFAULT_SENSING_NOISE,
};
use crate::{Error, Result, Vec2, Vec3};

/// Which steering policy drives the trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ControllerMode {
    /// MPC on feature tracking plus energy flow.
    #[default]
    #[cfg_attr(feature = "serde", serde(rename = "with"))]
    WithPlanning,
    /// MPC on feature tracking only.
    #[cfg_attr(feature = "serde", serde(rename = "without"))]
    WithoutPlanning,
    /// Damped pseudo-inverse controller, no horizon.
    #[cfg_attr(feature = "serde", serde(rename = "velocity"))]
    VelocityOnly,
}

impl ControllerMode {
    pub fn label(&self) -> &'static str {
        match self {
            Self::WithPlanning => "with",
            Self::WithoutPlanning => "without",
            Self::VelocityOnly => "velocity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "with" => Ok(Self::WithPlanning),
            "without" => Ok(Self::WithoutPlanning),
            "velocity" => Ok(Self::VelocityOnly),
            other => Err(Error::Config(format!("unknown controller mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels; `None` gives a 90° horizontal field of view.
    pub focal: Option<f64>,
    /// Exponential smoothing factor of the ROI centre, in (0, 1].
    pub smoothing: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { width: 32, height: 32, focal: None, smoothing: 0.5 }
    }
}

impl CameraConfig {
    pub fn intrinsics(&self) -> Intrinsics {
        let i = Intrinsics::new(self.width, self.height);
        match self.focal {
            Some(f) => i.with_focal(f),
            None => i,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SensingConfig {
    /// Per-coordinate shape noise in mm.
    pub sigma: f64,
    /// Random-walk noise of the passive filter per tick in mm.
    pub process_sigma: f64,
    /// Polynomial degree used to smooth the sensed shapes; 0 disables.
    pub smoothing_degree: usize,
    /// Half width, in samples, of the sliding window that smooths the whole
    /// body before energies are computed; 0 disables.
    pub window: usize,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self { sigma: DEFAULT_SENSING_NOISE, process_sigma: 0.002, smoothing_degree: 3, window: 6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EstimatorConfig {
    pub image: AdaptationGains,
    pub shape: AdaptationGains,
    /// Initial weights are uniform in ±`init_range`.
    pub init_range: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { image: AdaptationGains::image(), shape: AdaptationGains::shape(), init_range: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StopConfig {
    /// The trial succeeds once the tip is this far along the phantom, as a
    /// fraction of its length.
    pub depth_fraction: f64,
    pub max_ticks: usize,
    /// Consecutive degraded MPC solutions tolerated before the trial fails.
    pub max_degraded_ticks: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self { depth_fraction: 0.9, max_ticks: 10_000, max_degraded_ticks: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LogConfig {
    /// Keep the true body shape every this many ticks; 0 keeps none.
    pub shape_every: usize,
}

impl Default for LogConfig {
    fn default() -> Self {
        Self { shape_every: 50 }
    }
}

/// Everything that defines a task.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TaskConfig {
    pub name: String,
    pub phantom: PhantomSpec,
    pub plant: PlantParams,
    /// Motor state at the start of every trial.
    pub start: MotorState,
    pub mode: ControllerMode,
    pub seed: u64,
    pub trials: usize,
    pub camera: CameraConfig,
    pub sensing: SensingConfig,
    pub stiffness: StiffnessParams,
    pub estimator: EstimatorConfig,
    pub control: MpcConfig,
    pub stop: StopConfig,
    pub log: LogConfig,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            name: "task".to_string(),
            phantom: PhantomSpec::default(),
            plant: PlantParams::default(),
            start: MotorState::new(0.0, 0.0, 10.0),
            mode: ControllerMode::default(),
            seed: 0,
            trials: 8,
            camera: CameraConfig::default(),
            sensing: SensingConfig::default(),
            stiffness: StiffnessParams::default(),
            estimator: EstimatorConfig::default(),
            control: MpcConfig::default(),
            stop: StopConfig::default(),
            log: LogConfig::default(),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trial count must be at least 1".into());
        }
        self.plant.validate()?;
        self.stiffness.validate()?;
        self.control.validate()?;
        self.camera.intrinsics().validate()?;
        if !(self.camera.smoothing > 0.0 && self.camera.smoothing <= 1.0) {
            return bad(format!("feature smoothing must lie in (0, 1], got {}", self.camera.smoothing));
        }
        if !(self.sensing.sigma >= 0.0) || !(self.sensing.process_sigma >= 0.0) {
            return bad("sensing noise levels must be non-negative".into());
        }
        if !(self.stop.depth_fraction >= 0.0) {
            return bad("stop depth fraction must be non-negative".into());
        }
        if !(self.start.q3 >= 2.0 * self.plant.spacing) || self.start.q3 > self.plant.insertion_max {
            // Below this the chord walk from the tip cannot fill the active
            // section and the shape estimator's output size would not match.
            return bad(format!(
                "start insertion must lie in [{}, {}] mm, got {}",
                2.0 * self.plant.spacing,
                self.plant.insertion_max,
                self.start.q3
            ));
        }
        let (c, p) = (&self.control.limits, &self.plant.rate_limits);
        if c.deflection > p.deflection || c.insertion > p.insertion {
            return bad("controller rate limits exceed the plant's".into());
        }
        if (self.control.dt - 0.0).abs() < 1e-12 {
            return bad("control interval must be positive".into());
        }
        for g in [&self.estimator.image, &self.estimator.shape] {
            if !(g.mu_e >= 0.0 && g.mu_y >= 0.0) || g.gain_inverse.iter().any(|x| !(*x > 0.0)) {
                return bad("adaptation gains must be positive".into());
            }
        }
        if !(self.estimator.init_range >= 0.0) {
            return bad("initial weight range must be non-negative".into());
        }
        Ok(())
    }
}

/// Seed of trial `index` under base seed `seed`.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// Sample spacing of the true body when its energy is measured, in mm.
pub const ENERGY_SPACING: f64 = DEFAULT_SPACING;

/// Half width, in samples, of the cubic smoothing applied to the true body
/// before its energy is measured.
pub const ENERGY_WINDOW: usize = 6;

/// Elastic energy of the true body, sampled every `spacing` mm from the port
/// and smoothed over `window` samples each side with local cubics.
///
/// Port-anchored samples of a follow-the-leader body stay put as it advances,
/// so this energy only moves where the shape really changed. The smoothing
/// removes the sub-millimetre kinks that wall contact leaves in the simulated
/// body; a real rod cannot bend on that scale, and unsmoothed they turn into
/// torsion spikes that swamp the bending energy.
pub fn body_energy(
    state: &PlantState,
    spacing: f64,
    window: usize,
    k: &StiffnessParams,
    torsion_floor: f64,
) -> Result<EnergyReading> {
    let shape = resample_points(&state.body_points(), spacing)?;
    polyline_energy(&local_polynomial_smooth(shape.points(), window, 3), k, torsion_floor)
}

/// One row of the per-tick log.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub q: MotorState,
    pub qd: MotorVelocity,
    /// MPC objective; NaN for the velocity controller.
    pub objective: f64,
    pub degraded: bool,
    /// Smoothed feature in px.
    pub y: Vec2,
    /// Tracking error `y - y_d` in px.
    pub e: Vec2,
    /// `‖e‖` converted to mm at the ROI depth.
    pub e_mm: f64,
    /// True bending and torsion energy.
    pub energy: EnergyReading,
    /// Energy rollout of the chosen MPC candidate, starting with the
    /// estimate for the current shape; empty when energy is not planned.
    pub predicted_energy: Vec<f64>,
    /// `‖ỹ̇‖` in px/s, absent on the first tick.
    pub image_flow_error: Option<f64>,
    /// `‖s̃̇_a‖` in mm/s, absent on the first tick.
    pub shape_flow_error: Option<f64>,
    pub tip: Vec3,
}

/// Summary of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMetrics {
    pub trial: usize,
    pub seed: u64,
    pub mode: ControllerMode,
    pub success: bool,
    pub failure: Option<String>,
    pub ticks: usize,
    /// Insertion time in s.
    pub t_in: f64,
    /// Summed tip displacement in mm.
    pub l_et: f64,
    /// Straight-line tip displacement from start to end in mm.
    pub net_displacement: f64,
    pub mean_error_px: f64,
    pub mean_error_mm: f64,
    /// Mean mm-per-px factor at the ROI depth.
    pub px_to_mm: f64,
    /// Cumulative `Σ|ℰ(t+1) - ℰ(t)|` of the true body energy.
    pub energy_flow: f64,
    pub degraded_ticks: usize,
}

/// Final snapshots of a trial for the file outputs.
#[derive(Debug, Clone)]
pub struct TrialSnapshot {
    pub shape: SensedShape,
    pub depth: DepthMap,
    pub roi: Roi,
    pub image_estimator: RbfJacobian,
    pub shape_estimator: RbfJacobian,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub metrics: TaskMetrics,
    pub log: Vec<TickRecord>,
    /// `(t, true body shape)` at the configured interval, port to tip.
    pub shapes: Vec<(f64, ArcShape)>,
    pub snapshot: Option<TrialSnapshot>,
}

/// What the previous tick commanded, for flow measurement.
#[derive(Debug, Clone)]
struct Previous {
    y: Vec2,
    active: Vec<Vec3>,
    q: MotorState,
    qd: MotorVelocity,
}

/// Perception and learning state carried across ticks.
struct Learner {
    image: RbfJacobian,
    shape: RbfJacobian,
    filter: Option<PassiveShapeFilter>,
    feature: Option<ImageFeature>,
    previous: Option<Previous>,
}

struct Observation {
    sensed: SensedShape,
    active: Vec<Vec3>,
    /// Body split as for `sensed` but smoothed as a whole, for energies.
    body_active: Vec<Vec3>,
    body_passive: Vec<Vec3>,
    depth: DepthMap,
    roi: Roi,
    feature: ImageFeature,
    image_flow_error: Option<f64>,
    shape_flow_error: Option<f64>,
}

impl Learner {
    fn new(config: &TaskConfig, seeds: &mut ChaCha8Rng) -> Result<Self> {
        let na = config.plant.active_samples();
        let range = config.estimator.init_range;
        let image = RbfJacobian::image(&config.plant, &config.estimator.image, range, seeds.next_u64())?;
        let shape = RbfJacobian::shape(&config.plant, 3 * na, &config.estimator.shape, range, seeds.next_u64())?;
        Ok(Self { image, shape, filter: None, feature: None, previous: None })
    }

    fn observe(&mut self, config: &TaskConfig, plant: &Plant, state: &PlantState, seed: u64) -> Result<Observation> {
        let dt = config.control.dt;
        let sensed = sense_shape(plant, state, config.sensing.sigma, seed);
        let active = polynomial_smooth(&sensed.active, config.sensing.smoothing_degree);
        let intr = config.camera.intrinsics();
        let depth = render_depth(&plant.true_tip_pose(state), plant.lumen(), &intr)?;
        let roi = extract_roi(&depth);
        let feature = match &self.feature {
            None => ImageFeature::new(roi.center(), intr.center()),
            Some(f) => image_feature(&roi, f, config.camera.smoothing)?,
        };
        let q = state.motors();
        let (mut image_flow_error, mut shape_flow_error) = (None, None);
        if let Some(p) = &self.previous {
            let ydot = (feature.y - p.y) / dt;
            let pq = p.q.to_vector();
            let pqd = p.qd.to_vector();
            let err = self.image.prediction_error(pq.as_slice(), pqd.as_slice(), ydot.as_slice())?;
            image_flow_error = Some(err.norm());
            let e = feature.error();
            self.image.adapt(Some(e.as_slice()), err.as_slice(), pq.as_slice(), pqd.as_slice(), dt)?;

            // Shape flow with the insertion part removed: the previous active
            // shape slid along itself by the actual insertion.
            let moved = slide_along(&p.active, q.q3 - p.q.q3);
            if moved.len() == active.len() {
                let sdot: Vec<f64> =
                    active.iter().zip(&moved).flat_map(|(a, b)| { let d = (a - b) / dt; [d.x, d.y, d.z] }).collect();
                let qs = [p.q.q1, p.q.q2];
                let qds = [p.qd.qd1, p.qd.qd2];
                let err = self.shape.prediction_error(&qs, &qds, &sdot)?;
                shape_flow_error = Some(err.norm());
                self.shape.adapt(None, err.as_slice(), &qs, &qds, dt)?;
            }
        }
        let filter = match &mut self.filter {
            Some(f) => {
                if let Some(p) = &self.previous {
                    f.advance(q.q3 - p.q.q3, &p.active, sensed.passive.len());
                }
                f
            }
            None => self.filter.insert(PassiveShapeFilter::new(
                sensed.passive.len(),
                config.sensing.process_sigma,
                config.sensing.sigma,
            )?),
        };
        if filter.len() != sensed.passive.len() {
            filter.advance(0.0, &active, sensed.passive.len());
        }
        let passive = predict_passive_shape(filter, &sensed.passive)?;
        let mut body = passive;
        body.extend_from_slice(&active);
        let mut body_passive = local_polynomial_smooth(&body, config.sensing.window, config.sensing.smoothing_degree);
        let body_active = body_passive.split_off(body.len() - active.len());
        Ok(Observation { sensed, active, body_active, body_passive, depth, roi, feature, image_flow_error, shape_flow_error })
    }

    fn commit(&mut self, obs: &Observation, q: MotorState, qd: MotorVelocity) {
        self.feature = Some(obs.feature);
        self.previous = Some(Previous { y: obs.feature.y, active: obs.active.clone(), q, qd });
    }
}

fn failure_text(e: &Error) -> String {
    match e {
        Error::ContactLock { .. } => format!("{e}"),
        Error::Render(_) => format!("camera left the lumen: {e}"),
        other => format!("{other}"),
    }
}

/// Runs trial `index` of `config` to its stop criterion.
///
/// Plant lock, camera escape, adaptation failure or too many degraded
/// solutions end the trial as failed with partial metrics; invalid
/// configurations are errors.
pub fn run_trial(config: &TaskConfig, index: usize) -> Result<TrialOutcome> {
    config.validate()?;
    let seed = trial_seed(config.seed, index);
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let plant = Plant::new(config.plant.clone(), make_phantom(&config.phantom)?)?;
    let dt = config.control.dt;
    let target = config.stop.depth_fraction * config.phantom.length;
    let mut state = plant.initial(config.start, seeds.next_u64())?;
    let mut learner = Learner::new(config, &mut seeds)?;
    let intr = config.camera.intrinsics();
    let start_tip = state.tip().position;

    let mut log = Vec::new();
    let mut snapshot = None;
    let mut failure: Option<String> = None;
    let mut success = false;
    let (mut l_et, mut energy_flow) = (0.0, 0.0);
    let (mut sum_px, mut sum_mm, mut sum_scale) = (0.0, 0.0, 0.0);
    let (mut degraded_ticks, mut degraded_run) = (0usize, 0usize);
    let mut last_energy: Option<f64> = None;
    let mut previous_solution: Option<MotorVelocity> = None;
    let mut ticks = 0usize;
    let mut shapes = Vec::new();

    loop {
        let reached = state.motors().q3 + config.plant.active_length;
        if reached >= target {
            success = true;
            break;
        }
        if ticks >= config.stop.max_ticks {
            failure = Some(format!("tip at {reached:.1} mm after {ticks} ticks, target {target:.1} mm"));
            break;
        }
        let sense_seed = seeds.next_u64();
        let solve_seed = seeds.next_u64();
        let obs = match learner.observe(config, &plant, &state, sense_seed) {
            Ok(o) => o,
            Err(e) => {
                failure = Some(failure_text(&e));
                break;
            }
        };
        let energy = body_energy(&state, ENERGY_SPACING, ENERGY_WINDOW, &config.stiffness, config.control.torsion_floor)?;
        if let Some(prev) = last_energy {
            energy_flow += (energy.total() - prev).abs();
        }
        last_energy = Some(energy.total());

        if config.log.shape_every > 0 && ticks % config.log.shape_every == 0 {
            shapes.push((state.time(), plant.ground_truth_shape(&state)));
        }
        let q = state.motors();
        let e = obs.feature.error();
        let mut predicted_energy = Vec::new();
        let (v, objective, degraded) = match config.mode {
            ControllerMode::VelocityOnly => {
                let c = &config.control;
                let j = learner.image.eval(q.to_vector().as_slice());
                (velocity_control(&e, &j, c.mu_c, c.damping, &c.limits, c.insertion_min), f64::NAN, false)
            }
            mode => {
                let problem = MpcProblem {
                    motors: q,
                    feature: obs.feature,
                    image: &learner.image,
                    shape: Some(&learner.shape),
                    active: &obs.body_active,
                    passive: &obs.body_passive,
                    stiffness: config.stiffness,
                    spacing: config.plant.spacing,
                    previous: previous_solution,
                };
                let sol = if mode == ControllerMode::WithPlanning {
                    solve_mpc(&problem, &config.control, solve_seed)
                } else {
                    solve_vision_mpc(&problem, &config.control, solve_seed)
                };
                match sol {
                    Ok(s) => {
                        predicted_energy = s.energies.clone();
                        (s.first(), s.objective, s.degraded)
                    }
                    Err(err) => {
                        failure = Some(failure_text(&err));
                        break;
                    }
                }
            }
        };
        assert!(v.qd3 >= 0.0, "insertion reversed: q̇3 = {}", v.qd3);
        if degraded {
            degraded_ticks += 1;
            degraded_run += 1;
        } else {
            degraded_run = 0;
        }

        let scale = obs.roi.mean_depth() / intr.focal;
        let e_px = e.norm();
        sum_px += e_px;
        sum_mm += e_px * scale;
        sum_scale += scale;
        log.push(TickRecord {
            t: state.time(),
            q,
            qd: v,
            objective,
            degraded,
            y: obs.feature.y,
            e,
            e_mm: e_px * scale,
            energy,
            predicted_energy,
            image_flow_error: obs.image_flow_error,
            shape_flow_error: obs.shape_flow_error,
            tip: state.tip().position,
        });
        ticks += 1;
        learner.commit(&obs, q, v);
        previous_solution = Some(v);
        snapshot = Some((obs.sensed, obs.depth, obs.roi));

        if degraded_run > config.stop.max_degraded_ticks {
            failure = Some(format!("{degraded_run} consecutive degraded MPC solutions"));
            break;
        }
        match plant.step(&state, &v, dt) {
            Ok(next) => {
                l_et += (next.tip().position - state.tip().position).norm();
                state = next;
            }
            Err(err) => {
                failure = Some(failure_text(&err));
                break;
            }
        }
    }

    let n = ticks.max(1) as f64;
    let metrics = TaskMetrics {
        trial: index,
        seed,
        mode: config.mode,
        success: success && failure.is_none(),
        failure,
        ticks,
        t_in: ticks as f64 * dt,
        l_et,
        net_displacement: (state.tip().position - start_tip).norm(),
        mean_error_px: if ticks > 0 { sum_px / n } else { 0.0 },
        mean_error_mm: if ticks > 0 { sum_mm / n } else { 0.0 },
        px_to_mm: if ticks > 0 { sum_scale / n } else { 0.0 },
        energy_flow,
        degraded_ticks,
    };
    let snapshot = snapshot.map(|(shape, depth, roi)| TrialSnapshot {
        shape,
        depth,
        roi,
        image_estimator: learner.image.clone(),
        shape_estimator: learner.shape.clone(),
    });
    Ok(TrialOutcome { metrics, log, shapes, snapshot })
}

/// Sinusoidal motor excitation used to exercise the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Excitation {
    /// Peak deflection rate in rad/s.
    pub amplitude: f64,
    /// Frequencies of the two deflection angle swings in Hz. The angles swing
    /// about the start pose.
    pub frequencies: [f64; 2],
    /// Constant insertion speed in mm/s.
    pub insertion: f64,
    pub ticks: usize,
}

impl Default for Excitation {
    fn default() -> Self {
        Self { amplitude: 0.4, frequencies: [0.4, 0.63], insertion: 2.0, ticks: 2000 }
    }
}

/// Per-tick prediction-error norms of an excitation run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningTrace {
    /// Image flow residual ‖ỹ̇‖ in px/s.
    pub image: Vec<f64>,
    /// Shape flow residual against the sensed (noisy) flow in mm/s.
    pub shape: Vec<f64>,
    /// Shape flow residual against the noise-free flow, same estimator.
    /// Sensing noise puts a floor under `shape` that no estimator can
    /// remove; this one shows what was learned.
    pub shape_truth: Vec<f64>,
}

/// Drives the plant open loop with [`Excitation`] while both estimators
/// adapt exactly as in a trial.
pub fn run_excitation(config: &TaskConfig, excitation: &Excitation, index: usize) -> Result<LearningTrace> {
    config.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(trial_seed(config.seed, index));
    let plant = Plant::new(config.plant.clone(), make_phantom(&config.phantom)?)?;
    let dt = config.control.dt;
    let mut state = plant.initial(config.start, seeds.next_u64())?;
    let mut learner = Learner::new(config, &mut seeds)?;
    let mut trace = LearningTrace::default();
    let tau = 2.0 * core::f64::consts::PI;
    let mut truth_prev: Option<(Vec<Vec3>, MotorState, MotorVelocity)> = None;
    for k in 0..excitation.ticks {
        let truth = polynomial_smooth(&sense_shape(&plant, &state, 0.0, 0).active, config.sensing.smoothing_degree);
        // Scored before `observe` adapts, exactly like the sensed residual.
        let mut truth_err = None;
        if let Some((prev, pq, pqd)) = &truth_prev {
            let moved = slide_along(prev, state.motors().q3 - pq.q3);
            if moved.len() == truth.len() {
                let sdot: Vec<f64> =
                    truth.iter().zip(&moved).flat_map(|(a, b)| { let d = (a - b) / dt; [d.x, d.y, d.z] }).collect();
                let err = learner.shape.prediction_error(&[pq.q1, pq.q2], &[pqd.qd1, pqd.qd2], &sdot)?;
                truth_err = Some(err.norm());
            }
        }
        let obs = learner.observe(config, &plant, &state, seeds.next_u64())?;
        if let (Some(a), Some(b), Some(c)) = (obs.image_flow_error, obs.shape_flow_error, truth_err) {
            trace.image.push(a);
            trace.shape.push(b);
            trace.shape_truth.push(c);
        }
        // Rates are the exact increments of q0 + (a/ω) sin(ωt), so the angles
        // return to the start pose instead of drifting by the Euler bias.
        let t = k as f64 * dt;
        let rate = |f: f64| {
            let w = tau * f;
            excitation.amplitude / w * (math::sin(w * (t + dt)) - math::sin(w * t)) / dt
        };
        let v = config.plant.rate_limits.clamp(
            &MotorVelocity::new(rate(excitation.frequencies[0]), rate(excitation.frequencies[1]), excitation.insertion),
            0.0,
        );
        let q = state.motors();
        learner.commit(&obs, q, v);
        truth_prev = Some((truth, q, v));
        state = plant.step(&state, &v, dt)?;
    }
    Ok(trace)
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            math::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Table row for one controller mode; failed trials are counted and left out
/// of the statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: ControllerMode,
    pub completed: usize,
    pub failed: usize,
    pub t_in: Stat,
    pub l_et: Stat,
    pub error_px: Stat,
    pub energy_flow: Stat,
}

impl ModeSummary {
    pub fn from_metrics(mode: ControllerMode, metrics: &[TaskMetrics]) -> Self {
        let ok: Vec<&TaskMetrics> = metrics.iter().filter(|m| m.success).collect();
        let col = |f: fn(&TaskMetrics) -> f64| Stat::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
        Self {
            mode,
            completed: ok.len(),
            failed: metrics.len() - ok.len(),
            t_in: col(|m| m.t_in),
            l_et: col(|m| m.l_et),
            error_px: col(|m| m.mean_error_px),
            energy_flow: col(|m| m.energy_flow),
        }
    }
}

/// Paired runs of two modes over the same trial seeds.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub task: String,
    pub rows: [ModeSummary; 2],
    /// Per trial, the outcome under each mode.
    pub trials: Vec<[TrialOutcome; 2]>,
}

impl Comparison {
    /// Trials in which the second mode's energy flow is at most the first's,
    /// counting only pairs where both succeeded.
    pub fn energy_wins(&self) -> (usize, usize) {
        let pairs: Vec<_> =
            self.trials.iter().filter(|[a, b]| a.metrics.success && b.metrics.success).collect();
        let wins = pairs.iter().filter(|[a, b]| b.metrics.energy_flow <= a.metrics.energy_flow).count();
        (wins, pairs.len())
    }

    pub fn all_succeeded(&self) -> bool {
        self.trials.iter().all(|[a, b]| a.metrics.success && b.metrics.success)
    }
}

/// Runs `n` paired trials of `modes[0]` and `modes[1]`.
pub fn run_comparison_modes(config: &TaskConfig, n: usize, modes: [ControllerMode; 2]) -> Result<Comparison> {
    if n < 2 {
        return Err(Error::Config(format!("a comparison needs at least 2 trials, got {n}")));
    }
    let mut trials = Vec::with_capacity(n);
    for i in 0..n {
        let a = run_trial(&TaskConfig { mode: modes[0], ..config.clone() }, i)?;
        let b = run_trial(&TaskConfig { mode: modes[1], ..config.clone() }, i)?;
        trials.push([a, b]);
    }
    let metrics = |k: usize| trials.iter().map(|t: &[TrialOutcome; 2]| t[k].metrics.clone()).collect::<Vec<_>>();
    let rows = [ModeSummary::from_metrics(modes[0], &metrics(0)), ModeSummary::from_metrics(modes[1], &metrics(1))];
    Ok(Comparison { task: config.name.clone(), rows, trials })
}

/// Without-planning against with-planning.
pub fn run_comparison(config: &TaskConfig, n: usize) -> Result<Comparison> {
    run_comparison_modes(config, n, [ControllerMode::WithoutPlanning, ControllerMode::WithPlanning])
}
