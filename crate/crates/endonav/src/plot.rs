//! SVG line plots drawn from the trial CSV logs alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::formats::read_table;
use crate::{format_err, io_err, Result};

/// The four panels written for every trial.
pub const PLOTS: [&str; 4] = ["tracking_error.svg", "shape_flow_error.svg", "bending_energy.svg", "torsion_energy.svg"];

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 45.0;

/// Renders one series; returns the SVG text. Non-finite points are dropped
/// from the path but still counted in `data-points`.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[f64]) -> String {
    let finite: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(x, y)| (*x, *y)).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &finite {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if finite.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| PAD_L + (x - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
    let py = |y: f64| H - PAD_B - (y - y0) / (y1 - y0) * (H - PAD_T - PAD_B);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD_L}" y="{PAD_T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - PAD_L - PAD_R,
        H - PAD_T - PAD_B
    );
    for (v, anchor, x, y) in [
        (x0, "start", PAD_L, H - PAD_B + 15.0),
        (x1, "end", W - PAD_R, H - PAD_B + 15.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" font-size="11" text-anchor="{anchor}">{v:.3}</text>"#);
    }
    for (v, y) in [(y0, H - PAD_B), (y1, PAD_T + 10.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" font-size="11" text-anchor="end">{v:.3e}</text>"#, PAD_L - 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 8.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    let mut pts = String::new();
    for (x, y) in &finite {
        let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
    }
    let _ = writeln!(
        s,
        r#"<polyline data-points="{}" fill="none" stroke="steelblue" stroke-width="1.2" points="{}"/>"#,
        xs.len(),
        pts.trim_end()
    );
    s.push_str("</svg>\n");
    s
}

/// Directories under `root` (itself included) that hold a trial log.
pub fn trial_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join("feature.csv").is_file() {
            out.push(dir.clone());
        }
        let entries = std::fs::read_dir(&dir).map_err(io_err(&dir))?;
        for e in entries {
            let e = e.map_err(io_err(&dir))?;
            if e.file_type().map_err(io_err(e.path()))?.is_dir() {
                stack.push(e.path());
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Writes the four panels for one trial directory.
pub fn plot_trial(dir: &Path) -> Result<Vec<PathBuf>> {
    let feature = read_table(&dir.join("feature.csv"))?;
    let t = feature.column("t_s")?;
    let (ex, ey) = (feature.column("ex_px")?, feature.column("ey_px")?);
    let e: Vec<f64> = ex.iter().zip(&ey).map(|(a, b)| a.hypot(*b)).collect();
    let flows = read_table(&dir.join("flows.csv"))?;
    let energy = read_table(&dir.join("energy.csv"))?;
    let et = energy.column("t_s")?;
    let panels = [
        line_plot("Image tracking error", "t (s)", "|e| (px)", &t, &e),
        line_plot(
            "Shape flow prediction error",
            "t (s)",
            "|s_a flow error| (mm/s)",
            &flows.column("t_s")?,
            &flows.column("shape_flow_error")?,
        ),
        line_plot("Bending potential energy", "t (s)", "E_b", &et, &energy.column("E_b")?),
        line_plot("Torsion potential energy", "t (s)", "E_t", &et, &energy.column("E_t")?),
    ];
    let mut written = Vec::new();
    for (name, svg) in PLOTS.iter().zip(panels) {
        let path = dir.join(name);
        std::fs::write(&path, svg).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Plots every trial found under `run`.
pub fn emit_plots(run: &Path) -> Result<Vec<PathBuf>> {
    if !run.is_dir() {
        return Err(format_err(run, "run directory does not exist"));
    }
    let dirs = trial_dirs(run)?;
    if dirs.is_empty() {
        return Err(format_err(run, "no trial logs (feature.csv) found"));
    }
    let mut all = Vec::new();
    for d in dirs {
        all.extend(plot_trial(&d)?);
    }
    Ok(all)
}
