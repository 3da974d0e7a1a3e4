use approx::assert_relative_eq;
use endonav_core::depth::{
    extract_roi, image_feature, render_depth, roi_quota, DepthMap, ImageFeature, Intrinsics,
};
use endonav_core::geometry::{make_phantom, Lumen, PhantomKind, PhantomSpec};
use endonav_core::plant::CameraPose;
use endonav_core::{Vec2, Vec3};
use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sort-based threshold plus union-find components.
fn brute_force_roi(w: usize, h: usize, data: &[f32]) -> (Vec<bool>, Vec2) {
    let n = w * h;
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = ((0.05 * n as f64).ceil() as usize).max(1);
    let threshold = sorted[k - 1];
    let cand: Vec<bool> = data.iter().map(|d| *d >= threshold).collect();

    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !cand[i] {
                continue;
            }
            for j in [if c + 1 < w { Some(i + 1) } else { None }, if r + 1 < h { Some(i + w) } else { None }]
                .into_iter()
                .flatten()
            {
                if cand[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    // Root of each component is its smallest index after min-union.
    let mut size = vec![0usize; n];
    for i in 0..n {
        if cand[i] {
            let root = find(&mut parent, i);
            size[root] += 1;
        }
    }
    let mut best = None;
    for root in 0..n {
        if size[root] > 0 && best.is_none_or(|b: usize| size[root] > size[b]) {
            best = Some(root);
        }
    }
    let best = best.unwrap();
    let mask: Vec<bool> = (0..n).map(|i| cand[i] && find(&mut parent, i) == best).collect();
    let (mut sx, mut sy, mut a) = (0.0, 0.0, 0.0);
    for i in 0..n {
        if mask[i] {
            sx += (i % w) as f64;
            sy += (i / w) as f64;
            a += 1.0;
        }
    }
    (mask, Vec2::new(sx / a, sy / a))
}

fn is_four_connected(w: usize, h: usize, mask: &[bool]) -> bool {
    let Some(start) = mask.iter().position(|m| *m) else { return false };
    let mut seen = vec![false; mask.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 0;
    while let Some(i) = stack.pop() {
        count += 1;
        let (r, c) = (i / w, i % w);
        let mut nb = Vec::new();
        if r > 0 { nb.push(i - w) }
        if r + 1 < h { nb.push(i + w) }
        if c > 0 { nb.push(i - 1) }
        if c + 1 < w { nb.push(i + 1) }
        for j in nb {
            if mask[j] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    count == mask.iter().filter(|m| **m).count()
}

#[test]
fn roi_matches_brute_force_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        // Few distinct levels make ties and equal-size components common.
        let levels = [3, 5, 12, 1000][trial % 4];
        let data: Vec<f32> = (0..256).map(|_| 1.0 + rng.random_range(0..levels) as f32).collect();
        let depth = DepthMap::new(Intrinsics::new(16, 16), data.clone()).unwrap();
        let roi = extract_roi(&depth);
        let (mask, center) = brute_force_roi(16, 16, &data);
        assert_eq!(roi.mask(), &mask[..], "trial {trial}");
        assert_eq!(roi.center(), center);
        assert!(roi.area() >= 1);
        assert!(is_four_connected(16, 16, roi.mask()));
        let ties = data.iter().filter(|d| **d >= roi.threshold()).count();
        assert!(roi.area() <= ties.max(roi_quota(256)));
    }
}

#[test]
fn constructed_tie_maps() {
    // Two 3x3 blocks with equal depth: the upper-left one wins.
    let mut data = vec![1.0f32; 256];
    for r in 10..13 {
        for c in 2..5 {
            data[r * 16 + c] = 7.0;
        }
    }
    for r in 2..5 {
        for c in 10..13 {
            data[r * 16 + c] = 7.0;
        }
    }
    let depth = DepthMap::new(Intrinsics::new(16, 16), data.clone()).unwrap();
    let roi = extract_roi(&depth);
    assert!(roi.contains(2, 10));
    assert!(!roi.contains(10, 2));
    assert_eq!(roi.center(), brute_force_roi(16, 16, &data).1);

    // A plateau larger than the quota is kept whole.
    let mut data = vec![1.0f32; 256];
    for v in data.iter_mut().take(64) {
        *v = 3.0;
    }
    let roi = extract_roi(&DepthMap::new(Intrinsics::new(16, 16), data).unwrap());
    assert_eq!(roi.area(), 64);
    assert!(roi.area() > roi_quota(256));
}

#[test]
fn roi_center_lies_in_bounding_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let data: Vec<f32> = (0..400).map(|_| rng.random_range(1.0..2.0)).collect();
        let roi = extract_roi(&DepthMap::new(Intrinsics::new(20, 20), data).unwrap());
        let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
        for (i, m) in roi.mask().iter().enumerate() {
            if *m {
                r0 = r0.min(i / 20);
                r1 = r1.max(i / 20);
                c0 = c0.min(i % 20);
                c1 = c1.max(i % 20);
            }
        }
        let p = roi.center();
        assert!(p.x >= c0 as f64 && p.x <= c1 as f64 && p.y >= r0 as f64 && p.y <= r1 as f64);
    }
}

fn axial_pose(z: f64) -> CameraPose {
    CameraPose { position: Vec3::new(0.0, 0.0, z), rotation: Rotation3::identity() }
}

#[test]
fn on_axis_view_of_straight_tube_is_symmetric() {
    let lumen = make_phantom(&PhantomSpec::default()).unwrap();
    let intr = Intrinsics::new(33, 33);
    let d = render_depth(&axial_pose(300.0), &lumen, &intr).unwrap();
    let centre = d.get(16, 16);
    assert_relative_eq!(centre as f64, 725.0, epsilon = 1e-3);
    for r in 0..33 {
        for c in 0..33 {
            assert!(d.get(r, c) <= centre);
            let mirrored = [d.get(32 - r, c), d.get(r, 32 - c), d.get(c, r)];
            for m in mirrored {
                assert_relative_eq!(d.get(r, c), m, max_relative = 1e-5);
            }
        }
    }
    let roi = extract_roi(&d);
    assert_relative_eq!(roi.center(), intr.center(), epsilon = 1e-9);
}

#[test]
fn perpendicular_ray_hits_the_wall_at_the_radius() {
    let lumen = make_phantom(&PhantomSpec::default()).unwrap();
    let t = lumen.cast_ray(&Vec3::new(0.0, 0.0, 300.0), &Vec3::new(0.6, 0.8, 0.0)).unwrap();
    assert_relative_eq!(t, 25.0, epsilon = 1e-6);
}

fn march(lumen: &Lumen, o: &Vec3, d: &Vec3) -> f64 {
    let mut t = 0.0;
    while lumen.signed_distance(&(o + d * t)) < 0.0 {
        t += 0.1;
    }
    t
}

#[test]
fn analytic_casting_agrees_with_ray_marching() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in [PhantomKind::Straight, PhantomKind::SCurve, PhantomKind::MultiBend] {
        let lumen = make_phantom(&PhantomSpec::new(kind)).unwrap();
        for _ in 0..60 {
            let s = rng.random_range(50.0..900.0);
            let (c, frame) = lumen.frame_at(s);
            let off = frame * Vec3::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0), 0.0);
            let o = c + off;
            let axis = Unit::new_normalize(Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ));
            let rot = Rotation3::from_axis_angle(&axis, rng.random_range(0.0..0.8)) * frame;
            let intr = Intrinsics::new(5, 5);
            for r in 0..5 {
                for col in 0..5 {
                    let d = rot * intr.ray(r, col);
                    let analytic = lumen.cast_ray(&o, &d).unwrap();
                    let marched = march(&lumen, &o, &d);
                    assert!(
                        (analytic - marched).abs() <= 0.2,
                        "{kind:?}: analytic {analytic} marched {marched}"
                    );
                }
            }
        }
    }
}

#[test]
fn rendering_is_deterministic_and_rejects_outside_cameras() {
    let lumen = make_phantom(&PhantomSpec::new(PhantomKind::SCurve)).unwrap();
    let intr = Intrinsics::new(16, 12);
    let (c, frame) = lumen.frame_at(250.0);
    let pose = CameraPose { position: c + frame * Vec3::new(5.0, -3.0, 0.0), rotation: frame };
    let a = render_depth(&pose, &lumen, &intr).unwrap();
    let b = render_depth(&pose, &lumen, &intr).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.width(), a.height()), (16, 12));
    let outside = CameraPose { position: c + frame * Vec3::new(40.0, 0.0, 0.0), rotation: frame };
    assert!(render_depth(&outside, &lumen, &intr).is_err());
}

#[test]
fn smoothing_decays_geometrically() {
    let d = DepthMap::new(Intrinsics::new(3, 3), vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 4.0]).unwrap();
    let roi = extract_roi(&d);
    let p = roi.center();
    assert_eq!(p, Vec2::new(2.0, 2.0));
    let mut y = ImageFeature::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
    let alpha = 0.4;
    let mut gap = (y.y - p).norm();
    for _ in 0..10 {
        y = image_feature(&roi, &y, alpha).unwrap();
        let g = (y.y - p).norm();
        assert_relative_eq!(g, gap * (1.0 - alpha), max_relative = 1e-12);
        gap = g;
        assert_eq!(y.desired, Vec2::new(1.0, 1.0));
    }
}

mod basics {
    use endonav_core::depth::*;
    #[allow(unused_imports)]
    use endonav_core::{Error, Result, Vec2, Vec3};
    use approx::assert_relative_eq;

    fn map(w: usize, h: usize, data: &[f32]) -> DepthMap {
        DepthMap::new(Intrinsics::new(w, h), data.to_vec()).unwrap()
    }

    #[test]
    fn uniform_map_selects_everything() {
        let d = map(4, 3, &[2.0; 12]);
        let roi = extract_roi(&d);
        assert_eq!(roi.area(), 12);
        assert_relative_eq!(roi.center(), d.intrinsics().center());
    }

    #[test]
    fn deep_block_beats_corner_pixel() {
        // 4x4 with 16 pixels: quota is one pixel, so make five equal maxima.
        #[rustfmt::skip]
        let d = map(4, 4, &[
            9.0, 1.0, 1.0, 1.0,
            1.0, 1.0, 1.0, 1.0,
            1.0, 1.0, 9.0, 9.0,
            1.0, 1.0, 9.0, 9.0,
        ]);
        let roi = extract_roi(&d);
        assert_eq!(roi.area(), 4);
        assert_relative_eq!(roi.center(), Vec2::new(2.5, 2.5));
        assert!(!roi.contains(0, 0));
    }

    #[test]
    fn equal_components_pick_the_first_in_row_major_order() {
        #[rustfmt::skip]
        let d = map(4, 4, &[
            1.0, 1.0, 1.0, 1.0,
            1.0, 1.0, 1.0, 5.0,
            5.0, 1.0, 1.0, 5.0,
            5.0, 1.0, 1.0, 1.0,
        ]);
        let roi = extract_roi(&d);
        assert!(roi.contains(1, 3) && roi.contains(2, 3));
        assert_eq!(roi.area(), 2);
    }

    #[test]
    fn feature_smoothing() {
        // The deepest pixel sits at column 2, row 0.
        let d = map(3, 1, &[1.0, 1.0, 5.0]);
        let roi = extract_roi(&d);
        assert_eq!(roi.center(), Vec2::new(2.0, 0.0));
        let prev = ImageFeature::new(Vec2::new(1.0, 1.0), Vec2::zeros());
        let y = image_feature(&roi, &prev, 0.3).unwrap();
        assert_relative_eq!(y.y, Vec2::new(1.3, 0.7), epsilon = 1e-12);
        assert_eq!(image_feature(&roi, &prev, 1.0).unwrap().y, roi.center());
        assert!(image_feature(&roi, &prev, 0.0).is_err());
    }

    #[test]
    fn invalid_maps_are_rejected() {
        assert!(DepthMap::new(Intrinsics::new(2, 2), vec![1.0; 3]).is_err());
        assert!(DepthMap::new(Intrinsics::new(2, 2), vec![1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(DepthMap::new(Intrinsics::new(0, 2), vec![]).is_err());
    }

    }
