use approx::assert_relative_eq;
use endonav_core::geometry::{make_phantom, resample_points, ArcShape, PhantomKind, PhantomSpec};
use endonav_core::plant::{MotorState, MotorVelocity, Plant, PlantParams};
use endonav_core::proprioception::{
    elastic_energy, local_polynomial_smooth, predict_passive_shape, sense_points, sense_shape, PassiveShapeFilter,
    StiffnessParams,
};
use endonav_core::Vec3;
use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Helix with `length / ds` exact chords. The generating curve is half a
/// chord longer so the resampler's leftover never drops a sample.
fn helix_shape(r: f64, c: f64, length: f64, ds: f64) -> ArcShape {
    let length = length + 0.5 * ds;
    let speed = (r * r + c * c).sqrt();
    let fine: Vec<Vec3> = (0..=20_000)
        .map(|i| {
            let t = length / speed * i as f64 / 20_000.0;
            Vec3::new(r * t.cos(), r * t.sin(), c * t)
        })
        .collect();
    resample_points(&fine, ds).unwrap()
}

fn arc_shape(radius: f64, length: f64, ds: f64) -> ArcShape {
    let length = length + 0.5 * ds;
    let fine: Vec<Vec3> = (0..=20_000)
        .map(|i| {
            let phi = length / radius * i as f64 / 20_000.0;
            Vec3::new(radius * (1.0 - phi.cos()), 0.0, radius * phi.sin())
        })
        .collect();
    resample_points(&fine, ds).unwrap()
}

#[test]
fn arc_energy_matches_closed_form() {
    let shape = arc_shape(100.0, 100.0, 1.0);
    let e = elastic_energy(&shape, &StiffnessParams::default()).unwrap();
    assert_relative_eq!(e.bending, 5e-3, max_relative = 0.01);
    assert!(e.torsion.abs() < 1e-12);
}

#[test]
fn helix_energy_matches_frenet_formulas() {
    let (r, c) = (50.0, 20.0);
    let d = r * r + c * c;
    let (kappa, tau) = (r / d, c / d);
    let k = StiffnessParams::default();
    let shape = helix_shape(r, c, 100.0, 1.0);
    assert_eq!(shape.len(), 101);
    let e1 = elastic_energy(&shape, &k).unwrap();
    assert_relative_eq!(e1.bending, 0.5 * kappa * kappa * 100.0, max_relative = 0.01);
    assert_relative_eq!(e1.torsion, 0.5 * tau * tau * 100.0, max_relative = 0.01);
    let e2 = elastic_energy(&helix_shape(r, c, 100.0, 2.0), &k).unwrap();
    let change = (e2.total() - e1.total()).abs() / e1.total();
    assert!(change < 0.01, "halving the spacing changed energy by {change}");
}

#[test]
fn energy_is_rigid_invariant() {
    let shape = helix_shape(50.0, 20.0, 150.0, 2.0);
    let k = StiffnessParams { ei: 7.0, gj: 3.0 };
    let e0 = elastic_energy(&shape, &k).unwrap();
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(1.0, -2.0, 0.5)), 1.1);
    let moved: Vec<Vec3> =
        shape.points().iter().map(|p| rot * p + Vec3::new(40.0, -300.0, 12.5)).collect();
    let e1 = elastic_energy(&ArcShape::new(moved, shape.spacing()).unwrap(), &k).unwrap();
    assert_relative_eq!(e0.bending, e1.bending, max_relative = 1e-9);
    assert_relative_eq!(e0.torsion, e1.torsion, max_relative = 1e-9);
}

#[test]
fn energy_is_linear_in_stiffness() {
    let shape = helix_shape(40.0, 10.0, 80.0, 1.0);
    let e1 = elastic_energy(&shape, &StiffnessParams { ei: 1.0, gj: 1.0 }).unwrap();
    let e2 = elastic_energy(&shape, &StiffnessParams { ei: 2.0, gj: 1.0 }).unwrap();
    let e3 = elastic_energy(&shape, &StiffnessParams { ei: 1.0, gj: 2.0 }).unwrap();
    assert_eq!(e2.bending, 2.0 * e1.bending);
    assert_eq!(e2.torsion, e1.torsion);
    assert_eq!(e3.torsion, 2.0 * e1.torsion);
}

fn bent_plant_state() -> (Plant, endonav_core::plant::PlantState) {
    let lumen = make_phantom(&PhantomSpec::new(PhantomKind::SCurve)).unwrap();
    let plant = Plant::new(PlantParams::default(), lumen).unwrap();
    let mut s = plant.initial(MotorState::new(0.1, -0.05, 0.0), 0).unwrap();
    for _ in 0..100 {
        s = plant.step(&s, &MotorVelocity::new(0.0, 0.0, 16.0), 0.05).unwrap();
    }
    (plant, s)
}

#[test]
fn noiseless_sensing_is_the_ground_truth_split() {
    let (plant, s) = bent_plant_state();
    let truth = plant.ground_truth_shape(&s);
    let sensed = sense_shape(&plant, &s, 0.0, 42);
    assert_eq!(sensed.active.len(), 25);
    assert_eq!(sensed.full(), truth.points());
    assert_eq!(*sensed.active.last().unwrap(), s.tip().position);
    let sensed_len = truth.length();
    assert!(sensed_len <= 1000.0);
}

#[test]
fn sensing_noise_has_configured_rms() {
    let (plant, s) = bent_plant_state();
    let truth = plant.ground_truth_shape(&s);
    let sigma = 0.5;
    let mut sum = 0.0;
    let mut count = 0usize;
    for seed in 0..1000 {
        let sensed = sense_points(truth.points(), 25, sigma, seed);
        for (a, b) in sensed.full().iter().zip(truth.points()) {
            sum += (a - b).norm_squared();
            count += 3;
        }
    }
    let rms = (sum / count as f64).sqrt();
    assert!((rms - sigma).abs() < 0.1 * sigma, "rms {rms}");
    let a = sense_points(truth.points(), 25, sigma, 7);
    let b = sense_points(truth.points(), 25, sigma, 7);
    assert_eq!(a, b);
}

#[test]
fn sensing_length_never_exceeds_one_metre() {
    let lumen = make_phantom(&PhantomSpec::default()).unwrap();
    let plant = Plant::new(PlantParams::default(), lumen).unwrap();
    let s = plant.initial(MotorState::new(0.0, 0.0, 880.0), 0).unwrap();
    let s = plant.step(&s, &MotorVelocity::new(0.0, 0.0, 20.0), 1.0).unwrap();
    assert_eq!(s.motors().q3, 880.0);
    assert!(plant.ground_truth_shape(&s).length() <= 1000.0 + 1e-9);
}

fn noisy(truth: &[Vec3], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    truth
        .iter()
        .map(|p| {
            p + Vec3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ) * sigma
        })
        .collect()
}

fn rms(a: &[Vec3], b: &[Vec3]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>() / (3 * a.len()) as f64).sqrt()
}

#[test]
fn deterministic_filter_returns_measurement() {
    let truth = helix_shape(50.0, 20.0, 100.0, 5.0);
    let mut f = PassiveShapeFilter::new(truth.len(), 0.0, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        let z = noisy(truth.points(), 0.5, &mut rng);
        let p = predict_passive_shape(&mut f, &z).unwrap();
        assert_eq!(p, z);
    }
}

#[test]
fn filter_reduces_error_on_stationary_shape() {
    let truth = helix_shape(50.0, 20.0, 300.0, 5.0);
    let mut f = PassiveShapeFilter::new(truth.len(), 0.01, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut raw = 0.0;
    let mut est = Vec::new();
    for _ in 0..50 {
        let z = noisy(truth.points(), 0.5, &mut rng);
        raw = rms(&z, truth.points());
        est = predict_passive_shape(&mut f, &z).unwrap();
    }
    let filtered = rms(&est, truth.points());
    assert!(filtered < raw, "filtered {filtered} raw {raw}");
    assert!(filtered < 0.5 * raw);
}

#[test]
fn covariance_trace_is_non_increasing_under_updates() {
    let truth = helix_shape(50.0, 20.0, 100.0, 5.0);
    let mut f = PassiveShapeFilter::new(truth.len(), 0.05, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    f.update(&noisy(truth.points(), 0.5, &mut rng)).unwrap();
    let mut last = f.covariance_trace();
    for _ in 0..100 {
        f.predict();
        f.update(&noisy(truth.points(), 0.5, &mut rng)).unwrap();
        let trace = f.covariance_trace();
        assert!(trace <= last + 1e-15);
        last = trace;
    }
}

#[test]
fn filter_tracks_a_follow_the_leader_insertion() {
    let lumen = make_phantom(&PhantomSpec::new(PhantomKind::SCurve)).unwrap();
    let plant = Plant::new(PlantParams::default(), lumen).unwrap();
    let mut s = plant.initial(MotorState::new(0.0, 0.0, 200.0), 0).unwrap();
    let mut sensed = sense_shape(&plant, &s, 0.5, 0);
    let mut f = PassiveShapeFilter::new(sensed.passive.len(), 0.05, 0.5).unwrap();
    f.update(&sensed.passive).unwrap();
    let mut raw = 0.0;
    let mut filtered = 0.0;
    for k in 1..=60 {
        let prev_q3 = s.motors().q3;
        s = plant.step(&s, &MotorVelocity::new(0.0, 0.0, 8.0), 0.05).unwrap();
        let truth = plant.ground_truth_shape(&s);
        let previous_active = sensed.active.clone();
        sensed = sense_shape(&plant, &s, 0.5, k);
        f.advance(s.motors().q3 - prev_q3, &previous_active, sensed.passive.len());
        let est = predict_passive_shape(&mut f, &sensed.passive).unwrap();
        let n = sensed.passive.len();
        raw = rms(&sensed.passive, &truth.points()[..n]);
        // Skip the freshly initialised proximal samples.
        filtered = rms(&est[5..], &truth.points()[5..n]);
    }
    assert!(filtered < raw, "filtered {filtered} raw {raw}");
}

#[test]
fn local_smoothing_preserves_cubics() {
    let pts: Vec<Vec3> = (0..40)
        .map(|i| {
            let u = i as f64 * 0.1;
            Vec3::new(u * u * u - 2.0 * u, 0.5 * u * u, 3.0 - u)
        })
        .collect();
    let out = local_polynomial_smooth(&pts, 6, 3);
    for (a, b) in out.iter().zip(&pts) {
        assert!((a - b).norm() < 1e-9, "{a:?} vs {b:?}");
    }
}

#[test]
fn local_smoothing_reduces_noise() {
    let truth = helix_shape(50.0, 20.0, 150.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let meas = noisy(truth.points(), 0.5, &mut rng);
    let out = local_polynomial_smooth(&meas, 6, 3);
    let (before, after) = (rms(&meas, truth.points()), rms(&out, truth.points()));
    assert!(after < 0.6 * before, "rms {before} -> {after}");
}

#[test]
fn local_smoothing_degenerate_cases_are_identity() {
    let pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, (i * i) as f64, 0.3)).collect();
    assert_eq!(local_polynomial_smooth(&pts, 0, 3), pts);
    assert_eq!(local_polynomial_smooth(&pts, 6, 0), pts);
    // A 5-sample window cannot smooth a cubic fit.
    assert_eq!(local_polynomial_smooth(&pts, 6, 4), pts);
}

mod basics {
    use endonav_core::proprioception::*;
    #[allow(unused_imports)]
    use endonav_core::{Error, Result, Vec2, Vec3};
    use endonav_core::geometry::straight_line;

    fn helix(r: f64, c: f64, ds: f64, n: usize) -> Vec<Vec3> {
        let w = f64::sqrt(r * r + c * c);
        (0..n)
            .map(|i| {
                let t = i as f64 * ds / w;
                Vec3::new(r * f64::cos(t), r * f64::sin(t), c * t)
            })
            .collect()
    }
    use approx::assert_relative_eq;

    #[test]
    fn straight_energy_is_zero() {
        let s = straight_line(Vec3::zeros(), Vec3::z(), 100.0, 5.0).unwrap();
        let e = elastic_energy(&s, &StiffnessParams::default()).unwrap();
        assert_eq!(e, EnergyReading::default());
    }

    #[test]
    fn too_short_shape_is_rejected() {
        let pts = [Vec3::zeros(), Vec3::z(), Vec3::z() * 2.0];
        assert!(polyline_energy(&pts, &StiffnessParams::default(), 1e-4).is_err());
    }

    #[test]
    fn prefix_cache_matches_direct_energy() {
        let pts = helix(50.0, 20.0, 2.0, 120);
        let k = StiffnessParams { ei: 3.0, gj: 2.0 };
        for split in [0, 3, 7, 10, 60, 110] {
            let cache = EnergyPrefix::new(&pts[..split], &k, 1e-4).unwrap();
            let e = cache.energy_with(&pts[split..]).unwrap();
            let direct = polyline_energy(&pts, &k, 1e-4).unwrap();
            assert_relative_eq!(e.bending, direct.bending, max_relative = 1e-12);
            assert_relative_eq!(e.torsion, direct.torsion, max_relative = 1e-12);
        }
    }

    #[test]
    fn smoothing_reproduces_polynomials() {
        let pts: Vec<Vec3> = (0..25)
            .map(|i| {
                let s = i as f64;
                Vec3::new(0.01 * s * s, 0.001 * s * s * s, 5.0 * s)
            })
            .collect();
        let out = polynomial_smooth(&pts, 3);
        for (a, b) in pts.iter().zip(&out) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
        assert_eq!(polynomial_smooth(&pts, 0), pts);
    }

    #[test]
    fn filter_dimension_mismatch() {
        let mut f = PassiveShapeFilter::new(3, 0.1, 0.5).unwrap();
        let err = f.update(&[Vec3::zeros(); 4]).unwrap_err();
        assert_eq!(err, Error::FilterDimension { expected: 3, got: 4 });
    }

    #[test]
    fn advance_transports_along_straight_body() {
        let mut f = PassiveShapeFilter::new(4, 0.0, 0.0).unwrap();
        let passive: Vec<Vec3> = (0..4).map(|i| Vec3::new(0.0, 0.0, 5.0 * i as f64)).collect();
        let active: Vec<Vec3> = (0..5).map(|i| Vec3::new(0.0, 0.0, 20.0 + 5.0 * i as f64)).collect();
        f.update(&passive).unwrap();
        f.advance(2.0, &active, 5);
        assert_eq!(f.len(), 5);
        let v = f.variances();
        assert_eq!(v[0], None);
        let est = f.estimate();
        for i in 1..5 {
            assert_relative_eq!(est[i], passive[i - 1] + Vec3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
        }
    }
}
