use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use endonav::formats::read_table;
use endonav::plot::{emit_plots, plot_trial, PLOTS};

const SHORT: &str = r#"
name = "short"
seed = 5
trials = 2
mode = "velocity"
start = { q1 = 0.2, q2 = -0.1, q3 = 10.0 }

[phantom]
kind = "straight"

[estimator.image]
gain_inverse = [1.0, 1.0, 0.01]

[control]
insertion_min = 15.0
torsion_floor = 0.003

[stop]
depth_fraction = 0.15
"#;

fn endonav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_endonav")).args(args).output().unwrap()
}

fn short_config(dir: &Path) -> PathBuf {
    let p = dir.join("short.toml");
    std::fs::write(&p, SHORT).unwrap();
    p
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn run_writes_logs_metrics_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("run");
    let o = endonav(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("2/2 trials succeeded"));

    let metrics = read_table(&out.join("metrics.csv"));
    // The mode column is text, so read the file directly.
    assert!(metrics.is_err());
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.contains(",velocity,true,")));

    for t in ["trial_000", "trial_001"] {
        let d = out.join(t);
        for f in ["control.csv", "feature.csv", "energy.csv", "flows.csv", "depth.dpth", "roi.pgm", "weights.csv", "sensed_shape.csv"] {
            assert!(d.join(f).is_file(), "{t}/{f}");
        }
        let feature = read_table(&d.join("feature.csv")).unwrap();
        let written = plot_trial(&d).unwrap();
        assert_eq!(written.len(), 4);
        for name in PLOTS {
            let svg = std::fs::read_to_string(d.join(name)).unwrap();
            assert!(svg.starts_with("<svg"));
            assert!(svg.contains("data-points=\""));
        }
        let svg = std::fs::read_to_string(d.join("tracking_error.svg")).unwrap();
        assert!(svg.contains(&format!("data-points=\"{}\"", feature.len())));
    }

    let o = endonav(&["plot", "--run", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("wrote 8 plots"));
}

#[test]
fn overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("run");
    let o = endonav(&[
        "run", "--config", cfg.to_str().unwrap(), "--trials", "1", "--mode", "without", "--seed", "9", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().contains(",without,true,"));
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let o = endonav(&["run", "--config", cfg.to_str().unwrap(), "--mode", "sideways"]);
    assert!(!o.status.success());
    let o = endonav(&["run", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("absent.toml"));
}

#[test]
fn plot_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = endonav(&["plot", "--run", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("no trial logs"));
    assert!(emit_plots(&dir.path().join("absent")).is_err());

    let t = dir.path().join("trial_000");
    std::fs::create_dir(&t).unwrap();
    std::fs::write(t.join("feature.csv"), "t_s,yx_px,yy_px,ex_px\n0,1,2,3\n").unwrap();
    let err = emit_plots(dir.path()).unwrap_err().to_string();
    assert!(err.contains("ey_px"), "{err}");
}

#[test]
fn compare_writes_paired_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("cmp");
    let o = endonav(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let cmp = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let rows: Vec<&str> = cmp.lines().collect();
    assert_eq!(rows[0], "task,mode,completed,failed,T_in_s,L_et_mm,e_px,energy_flow");
    assert!(rows[1].starts_with("short,without,2,0,"));
    assert!(rows[2].starts_with("short,with,2,0,"));
    assert_eq!(rows.len(), 3);
    assert_eq!(std::fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count(), 5);
    for m in ["without", "with"] {
        assert!(out.join(m).join("trial_001").join("control.csv").is_file());
    }
}
