//! λ₂ × λ₃ sweeps with replicates.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{create_dir, write_file, HarnessError};
use crate::dynamics::{run_with, RunOptions};
use crate::metrics::cluster_index;
use crate::model::SimConfig;

/// Environment variable capping the number of concurrent sweep runs.
pub const THREADS_ENV: &str = "FIRMSIM_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: SimConfig,
    /// λ₂ values in percent.
    pub lambda2_values: Vec<f64>,
    /// λ₃ values in percent.
    pub lambda3_values: Vec<f64>,
    pub replicates: u32,
    pub base_seed: u64,
}

impl SweepSpec {
    pub fn n_runs(&self) -> usize {
        self.lambda2_values.len() * self.lambda3_values.len() * self.replicates as usize
    }

    fn check(&self) -> Result<(), HarnessError> {
        if self.replicates == 0 {
            return Err(HarnessError::InvalidSweep("replicates must be positive".into()));
        }
        if self.lambda2_values.is_empty() || self.lambda3_values.is_empty() {
            return Err(HarnessError::InvalidSweep("empty lambda list".into()));
        }
        for &l2 in &self.lambda2_values {
            for &l3 in &self.lambda3_values {
                crate::model::validate_config(self.config_for(l2, l3, 0))?;
            }
        }
        Ok(())
    }

    fn config_for(&self, lambda2_pct: f64, lambda3_pct: f64, seed: u64) -> SimConfig {
        SimConfig { seed, ..self.base.clone() }.with_relocation(lambda2_pct / 100.0, lambda3_pct / 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda2_pct: f64,
    pub lambda3_pct: f64,
    pub replicate: u32,
    pub seed: u64,
    pub final_l: f64,
    pub final_n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMean {
    pub lambda2_pct: f64,
    pub lambda3_pct: f64,
    pub replicates: u32,
    pub mean_l: f64,
    pub mean_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub means: Vec<SweepMean>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one sweep run from its grid position.
pub fn derive_seed(base_seed: u64, lambda2_index: usize, lambda3_index: usize, replicate: u32) -> u64 {
    [lambda2_index as u64, lambda3_index as u64, replicate as u64]
        .into_iter()
        .fold(splitmix64(base_seed), |acc, v| splitmix64(acc ^ v))
}

/// Runs one cell of the sweep in isolation.
pub fn run_sweep_cell(
    spec: &SweepSpec,
    lambda2_index: usize,
    lambda3_index: usize,
    replicate: u32,
) -> Result<SweepRow, HarnessError> {
    let l2 = spec.lambda2_values[lambda2_index];
    let l3 = spec.lambda3_values[lambda3_index];
    let seed = derive_seed(spec.base_seed, lambda2_index, lambda3_index, replicate);
    let cfg = spec.config_for(l2, l3, seed);
    let d = cfg.metric_distance;
    let result = run_with(cfg, RunOptions::default())?;
    let grid = result.final_state.population();
    Ok(SweepRow {
        lambda2_pct: l2,
        lambda3_pct: l3,
        replicate,
        seed,
        final_l: cluster_index(grid, d)?.l_value,
        final_n: grid.total(),
    })
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Runs every (λ₂, λ₃, replicate) combination; rows come back in that nesting order.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResult, HarnessError> {
    spec.check()?;
    let cells: Vec<(usize, usize, u32)> = (0..spec.lambda2_values.len())
        .flat_map(|i| (0..spec.lambda3_values.len()).flat_map(move |j| (0..spec.replicates).map(move |r| (i, j, r))))
        .collect();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| HarnessError::InvalidSweep(e.to_string()))?;
    let rows = pool
        .install(|| cells.par_iter().map(|&(i, j, r)| run_sweep_cell(spec, i, j, r)).collect::<Result<Vec<_>, _>>())?;

    let means = rows
        .chunks(spec.replicates as usize)
        .map(|group| SweepMean {
            lambda2_pct: group[0].lambda2_pct,
            lambda3_pct: group[0].lambda3_pct,
            replicates: group.len() as u32,
            mean_l: group.iter().map(|r| r.final_l).sum::<f64>() / group.len() as f64,
            mean_n: group.iter().map(|r| r.final_n as f64).sum::<f64>() / group.len() as f64,
        })
        .collect();
    Ok(SweepResult { rows, means })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lambda2_pct,lambda3_pct,replicate,seed,final_l,final_n\n");
    for r in rows {
        let _ =
            writeln!(out, "{},{},{},{},{},{}", r.lambda2_pct, r.lambda3_pct, r.replicate, r.seed, r.final_l, r.final_n);
    }
    out
}

pub fn sweep_means_csv(means: &[SweepMean]) -> String {
    let mut out = String::from("lambda2_pct,lambda3_pct,replicates,mean_l,mean_n\n");
    for m in means {
        let _ = writeln!(out, "{},{},{},{},{}", m.lambda2_pct, m.lambda3_pct, m.replicates, m.mean_l, m.mean_n);
    }
    out
}

/// Runs the sweep and writes `sweep.csv` and `sweep_means.csv` into `out_dir`.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> Result<SweepResult, HarnessError> {
    create_dir(out_dir)?;
    let result = sweep(spec)?;
    write_file(&out_dir.join("sweep.csv"), &sweep_csv(&result.rows))?;
    write_file(&out_dir.join("sweep_means.csv"), &sweep_means_csv(&result.means))?;
    Ok(result)
}
