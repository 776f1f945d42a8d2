//! Single-scenario runs and their output files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::raster::snapshot_csv;
use super::{create_dir, write_file, HarnessError};
use crate::dynamics::{run_with, RunOptions, RunResult, StepReport};
use crate::metrics::{cluster_index, growth_fit, power_law_fit, rank_size, GrowthFit, PowerLawFit, RankedCities};
use crate::model::{DivisionType, SimConfig};

/// First step of the growth-fit window when the run is long enough.
pub const GROWTH_WINDOW_START: u32 = 50;
/// Cities entering the rank-size fit.
pub const RANK_FIT_TOP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScenarioOptions {
    pub snapshot_every: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub window_start: u32,
    pub window_end: u32,
    #[serde(flatten)]
    pub fit: GrowthFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: SimConfig,
    pub steps: u32,
    pub final_n_old: u64,
    pub final_n_new: u64,
    pub final_n_total: u64,
    pub metric_distance: f64,
    pub final_k: Option<f64>,
    pub final_l: Option<f64>,
    pub occupied_cells: usize,
    pub growth_fit: Option<WindowFit>,
    pub rank_size_fit: Option<PowerLawFit>,
}

#[derive(Debug)]
pub struct ScenarioOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Summary,
    pub result: RunResult,
}

/// Growth-fit window for a run of `steps` steps.
pub fn growth_window(steps: u32) -> Option<(u32, u32)> {
    match steps {
        0 | 1 => None,
        s if s > GROWTH_WINDOW_START => Some((GROWTH_WINDOW_START, s)),
        s => Some((1, s)),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn timeseries_csv(reports: &[StepReport]) -> String {
    let mut out = String::from("step,n_old,n_new,n_total,l_index,growth_rate,moves_existing,moves_vacant\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            r.n_old,
            r.n_new,
            r.n_total(),
            opt(r.l_index),
            r.realized_growth_rate,
            r.n_moves_existing,
            r.n_moves_vacant
        );
    }
    out
}

pub fn ranksize_csv(ranked: &RankedCities) -> String {
    let mut out = String::from("rank,x,y,count\n");
    for (rank, (cell, count)) in ranked.entries.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", rank + 1, cell.x, cell.y, count);
    }
    out
}

pub fn summarize(result: &RunResult) -> Summary {
    let state = &result.final_state;
    let cfg = state.config().clone();
    let grid = state.population();
    let index = cluster_index(grid, cfg.metric_distance).ok();
    let growth = growth_window(cfg.steps).and_then(|(a, b)| {
        growth_fit(&result.reports, a..=b).ok().map(|fit| WindowFit { window_start: a, window_end: b, fit })
    });
    let rank_fit = power_law_fit(&rank_size(grid).top(RANK_FIT_TOP)).ok();
    let n_new = grid.counts(DivisionType::New).iter().map(|&c| c as u64).sum::<u64>();
    let n_total = grid.total();
    Summary {
        steps: cfg.steps,
        metric_distance: cfg.metric_distance,
        config: cfg,
        final_n_old: n_total - n_new,
        final_n_new: n_new,
        final_n_total: n_total,
        final_k: index.map(|i| i.k_value),
        final_l: index.map(|i| i.l_value),
        occupied_cells: grid.occupied_cells(),
        growth_fit: growth,
        rank_size_fit: rank_fit,
    }
}

/// Runs `cfg` and writes `config.json`, `timeseries.csv`, `ranksize_final.csv`,
/// `snapshot_final.csv`, periodic `snapshot_NNNN.csv` files and `summary.json`
/// into `out_dir`.
pub fn run_scenario(cfg: SimConfig, out_dir: &Path, opts: ScenarioOptions) -> Result<ScenarioOutput, HarnessError> {
    create_dir(out_dir)?;
    let mut files = Vec::new();
    let mut emit = |name: String, contents: &str| -> Result<(), HarnessError> {
        let path = out_dir.join(name);
        write_file(&path, contents)?;
        files.push(path);
        Ok(())
    };

    emit("config.json".into(), &cfg.to_json())?;
    let result = run_with(cfg, RunOptions { snapshot_every: opts.snapshot_every, track_l_index: true })?;
    let grid = result.final_state.population();

    emit("timeseries.csv".into(), &timeseries_csv(&result.reports))?;
    emit("ranksize_final.csv".into(), &ranksize_csv(&rank_size(grid)))?;
    for (step, snap) in &result.snapshots {
        emit(format!("snapshot_{step:04}.csv"), &snapshot_csv(snap))?;
    }
    emit("snapshot_final.csv".into(), &snapshot_csv(grid))?;

    let summary = summarize(&result);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    emit("summary.json".into(), &json)?;

    Ok(ScenarioOutput { dir: out_dir.to_path_buf(), files, summary, result })
}
