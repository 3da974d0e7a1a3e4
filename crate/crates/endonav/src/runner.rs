//! `run` and `compare` as library calls, so tests drive exactly what the
//! command line does.

use std::path::{Path, PathBuf};

use endonav_core::nav::{run_comparison, run_trial, Comparison, ControllerMode, TaskConfig, TaskMetrics};

use crate::logs::{write_comparison, write_metrics, write_trial};
use crate::{io_err, Result};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub trials: Option<usize>,
    pub mode: Option<ControllerMode>,
    pub seed: Option<u64>,
}

impl RunOptions {
    pub fn apply(&self, config: &TaskConfig) -> Result<TaskConfig> {
        let mut c = config.clone();
        if let Some(n) = self.trials {
            c.trials = n;
        }
        if let Some(m) = self.mode {
            c.mode = m;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}

fn trial_dir(out: &Path, i: usize) -> PathBuf {
    out.join(format!("trial_{i:03}"))
}

/// Runs every trial of `config`, writing logs under `out/trial_NNN` and
/// `out/metrics.csv`.
pub fn run_task(config: &TaskConfig, out: &Path) -> Result<Vec<TaskMetrics>> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut metrics = Vec::with_capacity(config.trials);
    for i in 0..config.trials {
        let outcome = run_trial(config, i)?;
        write_trial(&trial_dir(out, i), &outcome)?;
        metrics.push(outcome.metrics);
    }
    write_metrics(&out.join("metrics.csv"), &metrics)?;
    Ok(metrics)
}

/// Paired without/with planning runs over `config.trials` seeds. Logs go to
/// `out/<mode>/trial_NNN`, the per-trial table to `out/metrics.csv` and the
/// summary to `out/comparison.csv`.
pub fn compare_task(config: &TaskConfig, out: &Path) -> Result<Comparison> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let cmp = run_comparison(config, config.trials)?;
    let mut metrics = Vec::new();
    for k in 0..2 {
        let mode: ControllerMode = cmp.rows[k].mode;
        for (i, pair) in cmp.trials.iter().enumerate() {
            write_trial(&trial_dir(&out.join(mode.label()), i), &pair[k])?;
            metrics.push(pair[k].metrics.clone());
        }
    }
    write_metrics(&out.join("metrics.csv"), &metrics)?;
    write_comparison(&out.join("comparison.csv"), &cmp)?;
    Ok(cmp)
}
