//! Domain types, configuration, landscape initialization and the per-cell census.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Random stream used by the stochastic decisions of a run.
///
/// Pinned to PCG-64 MCG from `rand_pcg` 0.9 so that a given build reproduces
/// runs exactly from the configured seed.
pub type SimRng = Pcg64Mcg;

// Demography (initial sizes, type-switch draws) and relocation use separate
// streams, so one seed yields the same population path under every model.
const DEMOGRAPHY_STREAM: u64 = 0xd1b5_4a32_d192_ed03;

pub(crate) fn demography_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed ^ DEMOGRAPHY_STREAM)
}

/// Tolerance on `lambda1 + lambda2 + lambda3 = 1`.
pub const LAMBDA_SUM_TOLERANCE: f64 = 1e-12;

/// A grid cell, `x` is the column and `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub x: u32,
    pub y: u32,
}

impl CellId {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    /// Row-major index on a grid of the given width.
    #[inline]
    pub fn index(self, width: u32) -> usize {
        self.y as usize * width as usize + self.x as usize
    }

    #[inline]
    pub fn from_index(index: usize, width: u32) -> Self {
        let w = width as usize;
        Self { x: (index % w) as u32, y: (index / w) as u32 }
    }

    pub fn distance(self, other: CellId) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Traditional (`Old`) or innovative (`New`) industry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivisionType {
    Old,
    New,
}

impl DivisionType {
    pub const ALL: [DivisionType; 2] = [DivisionType::Old, DivisionType::New];

    #[inline]
    pub(crate) fn code(self) -> u8 {
        match self {
            DivisionType::Old => 0,
            DivisionType::New => 1,
        }
    }

    #[inline]
    pub(crate) fn from_code(code: u8) -> Self {
        if code == 0 {
            DivisionType::Old
        } else {
            DivisionType::New
        }
    }
}

impl fmt::Display for DivisionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DivisionType::Old => f.write_str("old"),
            DivisionType::New => f.write_str("new"),
        }
    }
}

/// A firm division, the simulated agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Division {
    pub id: u64,
    pub dtype: DivisionType,
    pub size: u32,
    pub cell: CellId,
}

/// Per-type parameters: distance decays, utility weights and maximum size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeParams {
    pub alpha_mp: f64,
    pub alpha_ap: f64,
    pub alpha_cp: f64,
    pub beta_mp: f64,
    pub beta_ap: f64,
    pub beta_cp: f64,
    pub delta_max: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Move to the best candidate only if it strictly beats the current cell.
    ArgmaxImprove,
    /// Sample the destination from the logit probabilities over the candidates.
    LogitSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSizePolicy {
    Zero,
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Planar,
}

/// Full parameter set of a run. Serializes to the scenario JSON format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub width: u32,
    pub height: u32,
    pub params_old: TypeParams,
    pub params_new: TypeParams,
    /// Probability that an Old division at exactly its maximum size spins off a New one.
    pub phi: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub selection_mode: SelectionMode,
    pub init_size_policy: InitSizePolicy,
    pub initial_divisions: u32,
    pub steps: u32,
    pub metric_distance: f64,
    pub seed: u64,
    pub topology: Topology,
}

impl Default for SimConfig {
    fn default() -> Self {
        let params = TypeParams {
            alpha_mp: 0.5,
            alpha_ap: 0.5,
            alpha_cp: 0.5,
            beta_mp: 0.0,
            beta_ap: 0.0,
            beta_cp: 0.0,
            delta_max: 50,
        };
        Self {
            width: 50,
            height: 50,
            params_old: params,
            params_new: TypeParams { delta_max: 10, ..params },
            phi: 0.1,
            lambda1: 0.9,
            lambda2: 0.09,
            lambda3: 0.01,
            selection_mode: SelectionMode::ArgmaxImprove,
            init_size_policy: InitSizePolicy::UniformRandom,
            initial_divisions: 2500,
            steps: 210,
            metric_distance: 10.0,
            seed: 1,
            topology: Topology::Planar,
        }
    }
}

impl SimConfig {
    pub fn params(&self, dtype: DivisionType) -> &TypeParams {
        match dtype {
            DivisionType::Old => &self.params_old,
            DivisionType::New => &self.params_new,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Sets λ₂ and λ₃ and recomputes λ₁ as their complement.
    pub fn with_relocation(mut self, lambda2: f64, lambda3: f64) -> Self {
        self.lambda2 = lambda2;
        self.lambda3 = lambda3;
        self.lambda1 = 1.0 - lambda2 - lambda3;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("LambdaSumInvalid: lambda1 + lambda2 + lambda3 = {sum}, expected 1")]
    LambdaSumInvalid { sum: f64 },
    #[error("LambdaOutOfRange: {name} = {value} is not a probability")]
    LambdaOutOfRange { name: &'static str, value: f64 },
    #[error("PhiOutOfRange: phi = {0} is not a probability")]
    PhiOutOfRange(f64),
    #[error("NonPositiveAlpha: {name} for {dtype} divisions is {value}")]
    NonPositiveAlpha { dtype: DivisionType, name: &'static str, value: f64 },
    #[error("NonFiniteBeta: {name} for {dtype} divisions is {value}")]
    NonFiniteBeta { dtype: DivisionType, name: &'static str, value: f64 },
    #[error("DeltaTooSmall: delta_max for {dtype} divisions must be at least 1")]
    DeltaTooSmall { dtype: DivisionType },
    #[error("TooManyInitialDivisions: {requested} divisions do not fit one per cell on {cells} cells")]
    TooManyInitialDivisions { requested: u32, cells: usize },
    #[error("EmptyGrid: grid is {width}x{height}")]
    EmptyGrid { width: u32, height: u32 },
    #[error("NoInitialDivisions: initial_divisions must be positive")]
    NoInitialDivisions,
    #[error("NonPositiveMetricDistance: metric_distance is {0}")]
    NonPositiveMetricDistance(f64),
}

/// All violations found in a config, in a fixed order.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid configuration: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigErrors(pub Vec<ConfigError>);

fn is_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

/// Checks every config invariant and returns the config unchanged if all hold.
pub fn validate_config(raw: SimConfig) -> Result<SimConfig, ConfigErrors> {
    let mut errors = Vec::new();

    if raw.width == 0 || raw.height == 0 {
        errors.push(ConfigError::EmptyGrid { width: raw.width, height: raw.height });
    }
    for (name, value) in [("lambda1", raw.lambda1), ("lambda2", raw.lambda2), ("lambda3", raw.lambda3)] {
        if !is_probability(value) {
            errors.push(ConfigError::LambdaOutOfRange { name, value });
        }
    }
    let sum = raw.lambda1 + raw.lambda2 + raw.lambda3;
    if !((sum - 1.0).abs() <= LAMBDA_SUM_TOLERANCE) {
        errors.push(ConfigError::LambdaSumInvalid { sum });
    }
    if !is_probability(raw.phi) {
        errors.push(ConfigError::PhiOutOfRange(raw.phi));
    }
    for dtype in DivisionType::ALL {
        let p = raw.params(dtype);
        for (name, value) in [("alpha_mp", p.alpha_mp), ("alpha_ap", p.alpha_ap), ("alpha_cp", p.alpha_cp)] {
            if !(value > 0.0 && value.is_finite()) {
                errors.push(ConfigError::NonPositiveAlpha { dtype, name, value });
            }
        }
        for (name, value) in [("beta_mp", p.beta_mp), ("beta_ap", p.beta_ap), ("beta_cp", p.beta_cp)] {
            if !value.is_finite() {
                errors.push(ConfigError::NonFiniteBeta { dtype, name, value });
            }
        }
        if p.delta_max < 1 {
            errors.push(ConfigError::DeltaTooSmall { dtype });
        }
    }
    if raw.initial_divisions == 0 {
        errors.push(ConfigError::NoInitialDivisions);
    } else if raw.initial_divisions as usize > raw.n_cells() {
        errors.push(ConfigError::TooManyInitialDivisions { requested: raw.initial_divisions, cells: raw.n_cells() });
    }
    if !(raw.metric_distance > 0.0 && raw.metric_distance.is_finite()) {
        errors.push(ConfigError::NonPositiveMetricDistance(raw.metric_distance));
    }

    if errors.is_empty() {
        Ok(raw)
    } else {
        Err(ConfigErrors(errors))
    }
}

/// Per-cell division counts by type, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationGrid {
    pub width: u32,
    pub height: u32,
    pub count_old: Vec<u32>,
    pub count_new: Vec<u32>,
    pub count_total: Vec<u32>,
}

impl PopulationGrid {
    pub fn zeros(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, count_old: vec![0; n], count_new: vec![0; n], count_total: vec![0; n] }
    }

    pub fn n_cells(&self) -> usize {
        self.count_total.len()
    }

    pub fn cell(&self, index: usize) -> CellId {
        CellId::from_index(index, self.width)
    }

    pub fn counts(&self, dtype: DivisionType) -> &[u32] {
        match dtype {
            DivisionType::Old => &self.count_old,
            DivisionType::New => &self.count_new,
        }
    }

    pub fn add(&mut self, cell: CellId, dtype: DivisionType, n: u32) {
        let i = cell.index(self.width);
        match dtype {
            DivisionType::Old => self.count_old[i] += n,
            DivisionType::New => self.count_new[i] += n,
        }
        self.count_total[i] += n;
    }

    pub fn total(&self) -> u64 {
        self.count_total.iter().map(|&c| c as u64).sum()
    }

    pub fn occupied_cells(&self) -> usize {
        self.count_total.iter().filter(|&&c| c > 0).count()
    }

    fn clear(&mut self) {
        self.count_old.fill(0);
        self.count_new.fill(0);
        self.count_total.fill(0);
    }
}

/// Division storage, one entry per division in ascending id order.
///
/// A division's id is its position in these columns: children are appended
/// with the next free id and divisions are never removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divisions {
    pub(crate) dtype: Vec<u8>,
    pub(crate) size: Vec<u32>,
    pub(crate) cell: Vec<u32>,
}

impl Divisions {
    pub fn len(&self) -> usize {
        self.size.len()
    }

    pub fn is_empty(&self) -> bool {
        self.size.is_empty()
    }

    pub(crate) fn push(&mut self, dtype: DivisionType, size: u32, cell: u32) {
        self.dtype.push(dtype.code());
        self.size.push(size);
        self.cell.push(cell);
    }

    pub(crate) fn reserve(&mut self, additional: usize) {
        self.dtype.reserve(additional);
        self.size.reserve(additional);
        self.cell.reserve(additional);
    }

    pub fn get(&self, id: u64, width: u32) -> Option<Division> {
        let i = usize::try_from(id).ok()?;
        if i >= self.len() {
            return None;
        }
        Some(Division {
            id,
            dtype: DivisionType::from_code(self.dtype[i]),
            size: self.size[i],
            cell: CellId::from_index(self.cell[i] as usize, width),
        })
    }

    pub fn iter(&self, width: u32) -> impl Iterator<Item = Division> + '_ {
        (0..self.len()).map(move |i| Division {
            id: i as u64,
            dtype: DivisionType::from_code(self.dtype[i]),
            size: self.size[i],
            cell: CellId::from_index(self.cell[i] as usize, width),
        })
    }

    pub fn count_of(&self, dtype: DivisionType) -> usize {
        let code = dtype.code();
        self.dtype.iter().filter(|&&c| c == code).count()
    }

    pub fn total_size(&self) -> u64 {
        self.size.iter().map(|&s| s as u64).sum()
    }
}

/// Mutable state of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationState {
    pub(crate) config: SimConfig,
    pub(crate) step: u32,
    pub(crate) divisions: Divisions,
    pub(crate) census: PopulationGrid,
    pub(crate) rng: SimRng,
    pub(crate) demography_rng: SimRng,
}

impl SimulationState {
    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn step_index(&self) -> u32 {
        self.step
    }

    pub fn divisions(&self) -> &Divisions {
        &self.divisions
    }

    pub fn division(&self, id: u64) -> Option<Division> {
        self.divisions.get(id, self.config.width)
    }

    pub fn n_divisions(&self) -> usize {
        self.divisions.len()
    }

    /// Census as of the last rebuild; consistent with the divisions between steps.
    pub fn population(&self) -> &PopulationGrid {
        &self.census
    }

    /// Stream consumed by relocation decisions.
    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    /// Builds a state from an explicit division list. Ids are reassigned in list order.
    pub fn from_divisions(config: SimConfig, divisions: &[Division]) -> Result<Self, ConfigErrors> {
        let config = validate_config(config)?;
        let mut store = Divisions::default();
        store.reserve(divisions.len());
        for d in divisions {
            assert!(d.cell.x < config.width && d.cell.y < config.height, "division {} outside grid", d.id);
            store.push(d.dtype, d.size, d.cell.index(config.width) as u32);
        }
        let mut state = Self {
            census: PopulationGrid::zeros(config.width, config.height),
            rng: SimRng::seed_from_u64(config.seed),
            demography_rng: demography_rng(config.seed),
            config,
            step: 0,
            divisions: store,
        };
        state.rebuild_census();
        Ok(state)
    }

    pub(crate) fn rebuild_census(&mut self) {
        let grid = &mut self.census;
        grid.clear();
        for (&code, &cell) in self.divisions.dtype.iter().zip(&self.divisions.cell) {
            let c = cell as usize;
            if code == 0 {
                grid.count_old[c] += 1;
            } else {
                grid.count_new[c] += 1;
            }
        }
        for ((t, &o), &n) in grid.count_total.iter_mut().zip(&grid.count_old).zip(&grid.count_new) {
            *t = o + n;
        }
    }
}

/// Fills the landscape with `initial_divisions` Old divisions, one per cell in
/// row-major order from (0, 0).
pub fn new_simulation(cfg: SimConfig) -> Result<SimulationState, ConfigErrors> {
    let config = validate_config(cfg)?;
    let mut demography = demography_rng(config.seed);
    let n = config.initial_divisions as usize;
    let delta_old = config.params_old.delta_max;

    let mut divisions = Divisions::default();
    divisions.reserve(n);
    for cell in 0..n {
        let size = match config.init_size_policy {
            InitSizePolicy::Zero => 0,
            InitSizePolicy::UniformRandom => demography.random_range(0..delta_old),
        };
        divisions.push(DivisionType::Old, size, cell as u32);
    }

    let mut state = SimulationState {
        census: PopulationGrid::zeros(config.width, config.height),
        rng: SimRng::seed_from_u64(config.seed),
        demography_rng: demography,
        config,
        step: 0,
        divisions,
    };
    state.rebuild_census();
    Ok(state)
}

/// Per-cell counts of the state's divisions, recomputed from the division list.
pub fn census(state: &SimulationState) -> PopulationGrid {
    let mut grid = PopulationGrid::zeros(state.config.width, state.config.height);
    for d in state.divisions.iter(state.config.width) {
        grid.add(d.cell, d.dtype, 1);
    }
    grid
}
