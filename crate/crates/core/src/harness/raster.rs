//! Snapshot CSV parsing and grayscale PGM rendering.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{write_file, HarnessError};
use crate::model::{CellId, DivisionType, PopulationGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterChannel {
    Old,
    New,
    Total,
}

impl FromStr for RasterChannel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "old" => Ok(RasterChannel::Old),
            "new" => Ok(RasterChannel::New),
            "total" => Ok(RasterChannel::Total),
            other => Err(format!("unknown channel {other:?} (expected old, new or total)")),
        }
    }
}

fn channel_counts(grid: &PopulationGrid, channel: RasterChannel) -> &[u32] {
    match channel {
        RasterChannel::Old => &grid.count_old,
        RasterChannel::New => &grid.count_new,
        RasterChannel::Total => &grid.count_total,
    }
}

/// Plain-text PGM with `round(255 * ln(1 + c) / ln(1 + max))` per cell, row 0 first.
pub fn raster_pgm(grid: &PopulationGrid, channel: RasterChannel) -> String {
    let counts = channel_counts(grid, channel);
    let max = counts.iter().copied().max().unwrap_or(0);
    let scale = (max as f64).ln_1p();
    let mut out = format!("P2\n{} {}\n255\n", grid.width, grid.height);
    for row in counts.chunks(grid.width.max(1) as usize) {
        let pixels: Vec<String> = row
            .iter()
            .map(|&c| {
                let v = if max == 0 { 0.0 } else { (255.0 * (c as f64).ln_1p() / scale).round() };
                (v as u8).to_string()
            })
            .collect();
        let _ = writeln!(out, "{}", pixels.join(" "));
    }
    out
}

pub fn render_raster(grid: &PopulationGrid, out_path: &Path, channel: RasterChannel) -> Result<(), HarnessError> {
    write_file(out_path, &raster_pgm(grid, channel))
}

/// Snapshot CSV: header `x,y,count_old,count_new`, then one row per cell.
pub fn snapshot_csv(grid: &PopulationGrid) -> String {
    let mut out = String::from("x,y,count_old,count_new\n");
    for i in 0..grid.n_cells() {
        let c = grid.cell(i);
        let _ = writeln!(out, "{},{},{},{}", c.x, c.y, grid.count_old[i], grid.count_new[i]);
    }
    out
}

/// Reads a snapshot CSV. Grid dimensions are the largest coordinates plus one.
pub fn read_snapshot_csv(path: &Path) -> Result<PopulationGrid, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_snapshot_csv(&text).map_err(|message| HarnessError::Parse { path: path.to_path_buf(), message })
}

pub fn parse_snapshot_csv(text: &str) -> Result<PopulationGrid, String> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("x,y,count_old,count_new") => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(format!("line {}: expected 4 fields", n + 2));
        }
        let mut vals = [0u32; 4];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f.parse().map_err(|e| format!("line {}: {e}", n + 2))?;
        }
        rows.push(vals);
    }
    let width = rows.iter().map(|r| r[0] + 1).max().unwrap_or(0);
    let height = rows.iter().map(|r| r[1] + 1).max().unwrap_or(0);
    let mut grid = PopulationGrid::zeros(width, height);
    for [x, y, old, new] in rows {
        let cell = CellId::new(x, y);
        grid.add(cell, DivisionType::Old, old);
        grid.add(cell, DivisionType::New, new);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixels(pgm: &str) -> Vec<u32> {
        pgm.lines().skip(3).flat_map(|l| l.split_whitespace().map(|p| p.parse::<u32>().unwrap())).collect()
    }

    #[test]
    fn empty_grid_is_black() {
        let pgm = raster_pgm(&PopulationGrid::zeros(50, 50), RasterChannel::Total);
        assert!(pgm.starts_with("P2\n50 50\n255\n"));
        let px = pixels(&pgm);
        assert_eq!(px.len(), 2500);
        assert!(px.iter().all(|&p| p == 0));
    }

    #[test]
    fn single_cell_is_white() {
        let mut g = PopulationGrid::zeros(4, 3);
        g.add(CellId::new(2, 1), DivisionType::New, 7);
        let px = pixels(&raster_pgm(&g, RasterChannel::New));
        assert_eq!(px.iter().filter(|&&p| p == 255).count(), 1);
        assert_eq!(px[6], 255);
        assert_eq!(px.iter().sum::<u32>(), 255);
        assert!(pixels(&raster_pgm(&g, RasterChannel::Old)).iter().all(|&p| p == 0));
    }

    #[test]
    fn log_scaling() {
        let mut g = PopulationGrid::zeros(2, 1);
        g.add(CellId::new(0, 0), DivisionType::Old, 3);
        g.add(CellId::new(1, 0), DivisionType::Old, 15);
        // 255 * ln 4 / ln 16 = 127.5
        assert_eq!(pixels(&raster_pgm(&g, RasterChannel::Total)), vec![128, 255]);
    }

    #[test]
    fn snapshot_csv_parses_back() {
        let mut g = PopulationGrid::zeros(3, 2);
        g.add(CellId::new(1, 1), DivisionType::Old, 4);
        g.add(CellId::new(2, 0), DivisionType::New, 9);
        assert_eq!(parse_snapshot_csv(&snapshot_csv(&g)).unwrap(), g);
        assert!(parse_snapshot_csv("a,b\n").is_err());
    }
}
