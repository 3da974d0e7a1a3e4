//! Per-trial logs and the metric tables.
//!
//! A trial directory holds `control.csv`, `feature.csv`, `energy.csv`,
//! `flows.csv`, the true body every few ticks under `shapes/`, and the last
//! tick's sensed shape, depth map, ROI mask and estimator weights.

use std::path::Path;

use endonav_core::nav::{Comparison, ModeSummary, Stat, TaskMetrics, TrialOutcome};

use crate::formats::{csv_err, save_depth, save_pgm, save_shape, save_weights};
use crate::{io_err, Result};

fn write_csv<const N: usize>(path: &Path, header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn num(v: f64) -> String {
    v.to_string()
}

pub fn write_trial(dir: &Path, outcome: &TrialOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let log = &outcome.log;
    write_csv(
        &dir.join("control.csv"),
        ["t_s", "q1", "q2", "q3", "qd1", "qd2", "qd3", "objective", "flag"],
        log.iter().map(|r| {
            [
                num(r.t),
                num(r.q.q1),
                num(r.q.q2),
                num(r.q.q3),
                num(r.qd.qd1),
                num(r.qd.qd2),
                num(r.qd.qd3),
                num(r.objective),
                (r.degraded as u8).to_string(),
            ]
        }),
    )?;
    write_csv(
        &dir.join("feature.csv"),
        ["t_s", "yx_px", "yy_px", "ex_px", "ey_px"],
        log.iter().map(|r| [num(r.t), num(r.y.x), num(r.y.y), num(r.e.x), num(r.e.y)]),
    )?;
    write_csv(
        &dir.join("energy.csv"),
        ["t_s", "E_b", "E_t"],
        log.iter().map(|r| [num(r.t), num(r.energy.bending), num(r.energy.torsion)]),
    )?;
    write_csv(
        &dir.join("flows.csv"),
        ["t_s", "image_flow_error", "shape_flow_error"],
        log.iter().filter_map(|r| match (r.image_flow_error, r.shape_flow_error) {
            (Some(a), Some(b)) => Some([num(r.t), num(a), num(b)]),
            _ => None,
        }),
    )?;
    if !outcome.shapes.is_empty() {
        let shapes = dir.join("shapes");
        std::fs::create_dir_all(&shapes).map_err(io_err(&shapes))?;
        for (k, (_, shape)) in outcome.shapes.iter().enumerate() {
            save_shape(&shapes.join(format!("shape_{k:05}.csv")), shape.points())?;
        }
        let index = shapes.join("index.csv");
        write_csv(
            &index,
            ["frame", "t_s"],
            outcome.shapes.iter().enumerate().map(|(k, (t, _))| [k.to_string(), num(*t)]),
        )?;
    }
    if let Some(s) = &outcome.snapshot {
        save_shape(&dir.join("sensed_shape.csv"), &s.shape.full())?;
        save_depth(&dir.join("depth.dpth"), &s.depth)?;
        save_pgm(&dir.join("roi.pgm"), &s.roi)?;
        save_weights(&dir.join("weights.csv"), &[("image", &s.image_estimator), ("shape", &s.shape_estimator)])?;
    }
    Ok(())
}

pub fn write_metrics(path: &Path, metrics: &[TaskMetrics]) -> Result<()> {
    write_csv(
        path,
        [
            "trial",
            "seed",
            "mode",
            "success",
            "ticks",
            "T_in_s",
            "L_et_mm",
            "net_displacement_mm",
            "e_px",
            "e_mm",
            "px_to_mm",
            "energy_flow",
            "degraded_ticks",
            "failure",
        ],
        metrics.iter().map(|m| {
            [
                m.trial.to_string(),
                m.seed.to_string(),
                m.mode.label().to_string(),
                m.success.to_string(),
                m.ticks.to_string(),
                num(m.t_in),
                num(m.l_et),
                num(m.net_displacement),
                num(m.mean_error_px),
                num(m.mean_error_mm),
                num(m.px_to_mm),
                num(m.energy_flow),
                m.degraded_ticks.to_string(),
                m.failure.clone().unwrap_or_default(),
            ]
        }),
    )
}

fn cell(s: &Stat) -> String {
    format!("{:.6} ± {:.6}", s.mean, s.std)
}

fn summary_row(task: &str, r: &ModeSummary) -> [String; 8] {
    [
        task.to_string(),
        r.mode.label().to_string(),
        r.completed.to_string(),
        r.failed.to_string(),
        cell(&r.t_in),
        cell(&r.l_et),
        cell(&r.error_px),
        cell(&r.energy_flow),
    ]
}

/// One row per mode; the four metric cells read `mean ± std` over the
/// completed trials.
pub fn write_comparison(path: &Path, cmp: &Comparison) -> Result<()> {
    write_csv(
        path,
        ["task", "mode", "completed", "failed", "T_in_s", "L_et_mm", "e_px", "energy_flow"],
        cmp.rows.iter().map(|r| summary_row(&cmp.task, r)),
    )
}
