//! Pattern measurements: cluster index, rank-size distribution and log-linear fits.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::StepReport;
use crate::model::{CellId, PopulationGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("EmptyPopulation: no divisions to measure")]
    EmptyPopulation,
    #[error("NonPositiveDistance: cluster radius must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("DegenerateInput: need at least 2 points, got {0}")]
    DegenerateInput(usize),
    #[error("NonPositiveValue: cannot take the log of {0}")]
    NonPositiveValue(f64),
    #[error("WindowOutOfRange: steps {start}..={end} not covered by the reports")]
    WindowOutOfRange { start: u32, end: u32 },
}

/// Whether a division counts itself among its neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelfCount {
    #[default]
    Inclusive,
    Exclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterIndex {
    pub d: f64,
    pub k_value: f64,
    pub l_value: f64,
}

/// Cell offsets whose centres lie within closed distance `d`.
fn disc_offsets(d: f64) -> Vec<(i64, i64)> {
    let r = d.floor() as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if (((dx * dx + dy * dy) as f64).sqrt()) <= d {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Cluster density: the division-weighted mean number of divisions within
/// distance `d` of a division's cell, the division itself included.
pub fn cluster_k(census: &PopulationGrid, d: f64) -> Result<f64, MetricsError> {
    cluster_k_with(census, d, SelfCount::Inclusive)
}

pub fn cluster_k_with(census: &PopulationGrid, d: f64, self_count: SelfCount) -> Result<f64, MetricsError> {
    if !(d > 0.0) {
        return Err(MetricsError::NonPositiveDistance(d));
    }
    let n = census.total();
    if n == 0 {
        return Err(MetricsError::EmptyPopulation);
    }
    let (w, h) = (census.width as i64, census.height as i64);
    let offsets = disc_offsets(d);
    let mut numerator: u128 = 0;
    for (i, &ni) in census.count_total.iter().enumerate() {
        if ni == 0 {
            continue;
        }
        let (x, y) = (i as i64 % w, i as i64 / w);
        let mut within: u64 = 0;
        for &(dx, dy) in &offsets {
            let (xj, yj) = (x + dx, y + dy);
            if xj >= 0 && xj < w && yj >= 0 && yj < h {
                within += census.count_total[(yj * w + xj) as usize] as u64;
            }
        }
        if self_count == SelfCount::Exclusive {
            within -= 1;
        }
        numerator += ni as u128 * within as u128;
    }
    Ok(numerator as f64 / n as f64)
}

/// `L = sqrt(K / pi) - d`.
pub fn cluster_l(k: f64, d: f64) -> f64 {
    (k / std::f64::consts::PI).sqrt() - d
}

pub fn cluster_index(census: &PopulationGrid, d: f64) -> Result<ClusterIndex, MetricsError> {
    let k_value = cluster_k(census, d)?;
    Ok(ClusterIndex { d, k_value, l_value: cluster_l(k_value, d) })
}

/// Occupied cells by descending division count; ties in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RankedCities {
    pub entries: Vec<(CellId, u32)>,
}

impl RankedCities {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Count at 1-based `rank`.
    pub fn count_at(&self, rank: usize) -> Option<u32> {
        rank.checked_sub(1).and_then(|r| self.entries.get(r)).map(|e| e.1)
    }

    pub fn top(&self, n: usize) -> RankedCities {
        RankedCities { entries: self.entries.iter().take(n).copied().collect() }
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.1 as u64).sum()
    }
}

pub fn rank_size(census: &PopulationGrid) -> RankedCities {
    let mut entries: Vec<(CellId, u32)> =
        census.count_total.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (census.cell(i), c)).collect();
    // stable: equal counts keep row-major order
    entries.sort_by_key(|e| std::cmp::Reverse(e.1));
    RankedCities { entries }
}

/// Ordinary least squares line through `(x, y)` points.
///
/// `r_squared` is `None` when all `y` are equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: Option<f64>,
    pub n_points: usize,
}

impl PowerLawFit {
    pub fn is_degenerate(&self) -> bool {
        self.r_squared.is_none()
    }
}

/// Log-linear fit of the division count over time.
pub type GrowthFit = PowerLawFit;

fn ols(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit, MetricsError> {
    let n = xs.len();
    if n < 2 {
        return Err(MetricsError::DegenerateInput(n));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    if ys.iter().all(|&y| y == ys[0]) {
        return Ok(PowerLawFit { slope: 0.0, intercept: ys[0], r_squared: None, n_points: n });
    }
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MetricsError::DegenerateInput(1));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = (1.0 - ss_res / syy).clamp(0.0, 1.0);
    Ok(PowerLawFit { slope, intercept, r_squared: Some(r_squared), n_points: n })
}

/// OLS of `ln(count)` on `ln(rank)`.
pub fn power_law_fit(ranked: &RankedCities) -> Result<PowerLawFit, MetricsError> {
    let xs: Vec<f64> = (1..=ranked.len()).map(|r| (r as f64).ln()).collect();
    let ys: Vec<f64> = ranked.entries.iter().map(|e| (e.1 as f64).ln()).collect();
    ols(&xs, &ys)
}

/// OLS of `ln(total divisions)` on the step number over `window`; the slope
/// is the continuous growth rate.
pub fn growth_fit(reports: &[StepReport], window: RangeInclusive<u32>) -> Result<GrowthFit, MetricsError> {
    let (start, end) = (*window.start(), *window.end());
    let covered = match (reports.first(), reports.last()) {
        (Some(first), Some(last)) => first.step <= start && end <= last.step && start <= end,
        _ => false,
    };
    if !covered {
        return Err(MetricsError::WindowOutOfRange { start, end });
    }
    let points: Vec<(f64, u64)> =
        reports.iter().filter(|r| window.contains(&r.step)).map(|r| (r.step as f64, r.n_total())).collect();
    series_growth_fit(&points)
}

/// Log-linear fit over explicit `(t, W_t)` points.
pub fn series_growth_fit(points: &[(f64, u64)]) -> Result<GrowthFit, MetricsError> {
    if let Some(&(_, w)) = points.iter().find(|p| p.1 == 0) {
        return Err(MetricsError::NonPositiveValue(w as f64));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| (p.1 as f64).ln()).collect();
    ols(&xs, &ys)
}

/// Same as [`series_growth_fit`] for real-valued series.
pub fn log_linear_fit(xs: &[f64], values: &[f64]) -> Result<PowerLawFit, MetricsError> {
    if let Some(&v) = values.iter().find(|&&v| !(v > 0.0)) {
        return Err(MetricsError::NonPositiveValue(v));
    }
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    ols(xs, &ys)
}

/// Power-law fit over real-valued counts at ranks 1..=n.
pub fn rank_size_fit_values(counts: &[f64]) -> Result<PowerLawFit, MetricsError> {
    let xs: Vec<f64> = (1..=counts.len()).map(|r| (r as f64).ln()).collect();
    log_linear_fit(&xs, counts)
}
