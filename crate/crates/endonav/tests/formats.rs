use endonav::formats::{decode_depth, encode_depth, load_depth, load_shape, load_weights, read_table, save_depth, save_shape, save_weights};
use endonav::Error;
use endonav_core::depth::{DepthMap, Intrinsics};
use endonav_core::jacobian::{AdaptationGains, RbfJacobian};
use endonav_core::plant::PlantParams;
use endonav_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn random_map(seed: u64, w: usize, h: usize) -> DepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..w * h).map(|_| rng.random_range(0.0f32..300.0)).collect();
    DepthMap::new(Intrinsics::new(w, h).with_focal(rng.random_range(5.0..50.0)), data).unwrap()
}

#[test]
fn depth_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, w, h) in [(0, 32, 32), (1, 7, 3), (2, 1, 1), (3, 64, 48)] {
        let map = random_map(seed, w, h);
        let path = dir.path().join(format!("m{seed}.dpth"));
        save_depth(&path, &map).unwrap();
        let back = load_depth(&path).unwrap();
        assert_eq!(back.intrinsics(), map.intrinsics());
        let bits = |m: &DepthMap| m.data().iter().map(|d| d.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&map));
        assert_eq!(encode_depth(&back), encode_depth(&map));
    }
}

#[test]
fn depth_header_is_text_then_little_endian_floats() {
    let map = DepthMap::new(Intrinsics::new(2, 1), vec![1.0, 2.5]).unwrap();
    let bytes = encode_depth(&map);
    assert!(bytes.starts_with(b"DPTH 2 1 "));
    let body = &bytes[bytes.iter().position(|b| *b == b'\n').unwrap() + 1..];
    assert_eq!(body, [1.0f32.to_le_bytes(), 2.5f32.to_le_bytes()].concat());
}

#[test]
fn truncated_depth_file_is_an_error() {
    let bytes = encode_depth(&random_map(4, 8, 8));
    let p = Path::new("cut.dpth");
    for cut in [bytes.len() - 1, bytes.len() - 4, 20, 3, 0] {
        let err = decode_depth(&bytes[..cut], p).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(decode_depth(&long, p).is_err());
    let mut bad = bytes;
    bad[0] = b'X';
    assert!(decode_depth(&bad, p).unwrap_err().to_string().contains("malformed header"));
}

#[test]
fn missing_depth_file_names_the_path() {
    let err = load_depth(Path::new("/nonexistent/depth.dpth")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/depth.dpth"));
}

fn estimator(seed: u64) -> RbfJacobian {
    RbfJacobian::image(&PlantParams::default(), &AdaptationGains::image(), 3.0, seed).unwrap()
}

#[test]
fn weights_round_trip_exactly_per_net() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.csv");
    let (a, b) = (estimator(1), estimator(2));
    save_weights(&path, &[("image", &a), ("other", &b)]).unwrap();
    let mut back = estimator(9);
    load_weights(&path, "image", &mut back).unwrap();
    assert_eq!(back.weights(), a.weights());
    load_weights(&path, "other", &mut back).unwrap();
    assert_eq!(back.weights(), b.weights());
}

#[test]
fn missing_or_duplicate_weights_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.csv");
    save_weights(&path, &[("image", &estimator(1))]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();

    let mut est = estimator(3);
    assert!(load_weights(&path, "shape", &mut est).unwrap_err().to_string().contains("missing"));

    let last = lines.pop().unwrap();
    std::fs::write(&path, lines.join("\n")).unwrap();
    assert!(load_weights(&path, "image", &mut est).unwrap_err().to_string().contains("1 of 54"));

    lines.push(last);
    lines.push(last);
    std::fs::write(&path, lines.join("\n")).unwrap();
    assert!(load_weights(&path, "image", &mut est).unwrap_err().to_string().contains("duplicate"));

    std::fs::write(&path, "a,b,c,d\n").unwrap();
    assert!(load_weights(&path, "image", &mut est).is_err());
}

#[test]
fn shapes_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("shape.csv");
    let pts: Vec<Vec3> = (0..30).map(|i| Vec3::new((i as f64 * 0.1).sin(), 1.0 / 3.0, 5.0 * i as f64)).collect();
    save_shape(&path, &pts).unwrap();
    assert_eq!(load_shape(&path).unwrap(), pts);
    let s = read_table(&path).unwrap().column("s_mm").unwrap();
    assert_eq!(s[0], 0.0);
    assert!(s.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn missing_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(&path, "a,b\n1,2\n3,\n").unwrap();
    let t = read_table(&path).unwrap();
    assert_eq!(t.len(), 2);
    assert!(t.column("b").unwrap()[1].is_nan());
    let err = t.column("zeta").unwrap_err();
    assert!(matches!(&err, Error::MissingColumn { column, .. } if column == "zeta"));
    assert!(err.to_string().contains("zeta"));
    std::fs::write(&path, "a\nx\n").unwrap();
    assert!(read_table(&path).is_err());
}
