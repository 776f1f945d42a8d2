//! Growth, spin-off and relocation, composed into a deterministic step.
//!
//! One step runs, in order: growth, spin-offs, utility evaluation on the
//! post-spin-off census, one relocation decision per division in ascending id
//! order against those frozen fields, then all moves at once.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{FieldCache, FieldError, KernelSet, ScalarField, UtilityField};
use crate::metrics::{cluster_k, cluster_l};
use crate::model::{
    new_simulation, CellId, ConfigErrors, Division, DivisionType, PopulationGrid, SelectionMode, SimConfig, SimRng,
    SimulationState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("MissingKernels: utility weights are non-zero but no kernels were supplied")]
    MissingKernels,
}

/// Outcome of the per-division relocation lottery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelocationDraw {
    Stay,
    EvaluateExisting,
    EvaluateVacant,
}

/// Counters for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Step number after the update, starting at 1.
    pub step: u32,
    pub n_old: u64,
    pub n_new: u64,
    /// Children created this step, by the child's type.
    pub n_spinoffs_old: u64,
    pub n_spinoffs_new: u64,
    pub n_moves_existing: u64,
    pub n_moves_vacant: u64,
    /// Divisions that drew Stay or found no better destination.
    pub n_stays: u64,
    /// Divisions that evaluated relocation but had no candidate cell.
    pub n_no_candidates: u64,
    /// `(W_{t+1} - W_t) / W_t` over total division counts.
    pub realized_growth_rate: f64,
    /// Cluster index L at the configured metric distance, when tracked.
    pub l_index: Option<f64>,
}

impl StepReport {
    pub fn n_total(&self) -> u64 {
        self.n_old + self.n_new
    }
}

/// Every division grows by one size unit.
pub fn grow_divisions(state: &mut SimulationState) {
    for s in &mut state.divisions.size {
        *s += 1;
    }
}

/// Children created by one spin-off pass; their ids are contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spawned {
    pub ids: Range<u64>,
    pub n_old: u64,
    pub n_new: u64,
}

impl Spawned {
    pub fn len(&self) -> usize {
        (self.ids.end - self.ids.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn divisions<'a>(&'a self, state: &'a SimulationState) -> impl Iterator<Item = Division> + 'a {
        self.ids.clone().filter_map(move |id| state.division(id))
    }
}

/// Splits every division that reached its maximum size.
///
/// Divisions are visited in ascending id order. An Old division exactly at
/// its maximum spins off a New child with probability φ; any division beyond
/// its maximum spins off a child of its own type. Children start at size 0 in
/// the parent's cell and the parent's size resets to 0.
pub fn process_spinoffs(state: &mut SimulationState) -> Spawned {
    let delta_old = state.config.params_old.delta_max;
    let delta_new = state.config.params_new.delta_max;
    let phi = state.config.phi;
    let old = DivisionType::Old.code();
    let new = DivisionType::New.code();

    let n = state.divisions.len();
    let first = n as u64;
    let (mut n_old, mut n_new) = (0u64, 0u64);
    let SimulationState { divisions, census, demography_rng: rng, .. } = &mut *state;
    let width = census.width;

    for i in 0..n {
        let size = divisions.size[i];
        let child = if divisions.dtype[i] == old {
            if size > delta_old {
                Some(DivisionType::Old)
            } else if size == delta_old && rng.random::<f64>() < phi {
                Some(DivisionType::New)
            } else {
                None
            }
        } else {
            debug_assert_eq!(divisions.dtype[i], new);
            (size > delta_new).then_some(DivisionType::New)
        };
        if let Some(dtype) = child {
            let cell = divisions.cell[i];
            divisions.size[i] = 0;
            divisions.push(dtype, 0, cell);
            census.add(CellId::from_index(cell as usize, width), dtype, 1);
            match dtype {
                DivisionType::Old => n_old += 1,
                DivisionType::New => n_new += 1,
            }
        }
    }
    Spawned { ids: first..divisions.len() as u64, n_old, n_new }
}

/// The λ lottery: one uniform draw split at λ₁ and λ₁ + λ₂.
#[derive(Debug, Clone, Copy)]
pub struct RelocationLottery {
    stay_below: f64,
    existing_below: f64,
}

impl RelocationLottery {
    pub fn new(cfg: &SimConfig) -> Self {
        Self { stay_below: cfg.lambda1, existing_below: cfg.lambda1 + cfg.lambda2 }
    }

    #[inline]
    pub fn classify_value(&self, u: f64) -> RelocationDraw {
        if u < self.stay_below {
            RelocationDraw::Stay
        } else if u < self.existing_below {
            RelocationDraw::EvaluateExisting
        } else {
            RelocationDraw::EvaluateVacant
        }
    }

    #[inline]
    pub fn classify<R: Rng>(&self, rng: &mut R) -> RelocationDraw {
        self.classify_value(rng.random::<f64>())
    }
}

pub fn classify_relocation(state: &mut SimulationState) -> RelocationDraw {
    let lottery = RelocationLottery::new(&state.config);
    lottery.classify(&mut state.rng)
}

/// Candidate cells of one kind, indexed for fast argmax and logit sampling.
#[derive(Debug, Clone)]
struct CandidateIndex {
    cells: Vec<u32>,
    max: f64,
    argmax: Vec<u32>,
    // inclusive prefix sums of exp(U - max)
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl CandidateIndex {
    fn build(cells: Vec<u32>, utility: &[f64], with_weights: bool) -> Self {
        let max = cells.iter().map(|&c| utility[c as usize]).fold(f64::NEG_INFINITY, f64::max);
        let argmax = cells.iter().copied().filter(|&c| utility[c as usize] == max).collect();
        let mut cumulative = Vec::new();
        let mut last_positive = 0;
        if with_weights {
            cumulative.reserve(cells.len());
            let mut acc = 0.0;
            for (k, &c) in cells.iter().enumerate() {
                let w = (utility[c as usize] - max).exp();
                if w > 0.0 {
                    last_positive = k;
                }
                acc += w;
                cumulative.push(acc);
            }
        }
        Self { cells, max, argmax, cumulative, last_positive }
    }

    fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    fn pick_argmax(&self, rng: &mut SimRng) -> u32 {
        if self.argmax.len() == 1 {
            self.argmax[0]
        } else {
            self.argmax[rng.random_range(0..self.argmax.len())]
        }
    }

    fn sample(&self, rng: &mut SimRng) -> u32 {
        let t = rng.random::<f64>() * self.total();
        let k = self.cumulative.partition_point(|&x| x <= t);
        self.cells[k.min(self.last_positive)]
    }
}

/// Per-step destination lookup for one division type.
struct DestinationChooser<'a> {
    mode: SelectionMode,
    utility: &'a [f64],
    existing: CandidateIndex,
    vacant: CandidateIndex,
    // logit over existing cells minus the one cell holding most of the mass
    dominant: Option<(u32, CandidateIndex)>,
}

impl<'a> DestinationChooser<'a> {
    fn new(mode: SelectionMode, utility: &'a [f64], grid: &PopulationGrid) -> Self {
        let (mut occupied, mut vacant) = (Vec::new(), Vec::new());
        for (i, &c) in grid.count_total.iter().enumerate() {
            if c > 0 {
                occupied.push(i as u32);
            } else {
                vacant.push(i as u32);
            }
        }
        let weights = mode == SelectionMode::LogitSample;
        Self {
            mode,
            utility,
            existing: CandidateIndex::build(occupied, utility, weights),
            vacant: CandidateIndex::build(vacant, utility, weights),
            dominant: None,
        }
    }

    fn choose(&mut self, from: u32, draw: RelocationDraw, rng: &mut SimRng) -> Result<Option<u32>, NoCandidates> {
        match draw {
            RelocationDraw::Stay => Ok(None),
            RelocationDraw::EvaluateVacant => {
                if self.vacant.cells.is_empty() {
                    return Err(NoCandidates);
                }
                match self.mode {
                    SelectionMode::ArgmaxImprove => {
                        if self.vacant.max > self.utility[from as usize] {
                            Ok(Some(self.vacant.pick_argmax(rng)))
                        } else {
                            Ok(None)
                        }
                    }
                    SelectionMode::LogitSample => Ok(Some(self.vacant.sample(rng))),
                }
            }
            RelocationDraw::EvaluateExisting => {
                // `from` is occupied by the mover itself
                if self.existing.cells.len() <= 1 {
                    return Err(NoCandidates);
                }
                match self.mode {
                    SelectionMode::ArgmaxImprove => {
                        // The best other cell beats `from` exactly when `from`
                        // is not among the maximizers.
                        if self.existing.argmax.binary_search(&from).is_ok() {
                            Ok(None)
                        } else {
                            Ok(Some(self.existing.pick_argmax(rng)))
                        }
                    }
                    SelectionMode::LogitSample => Ok(Some(self.sample_existing_excluding(from, rng))),
                }
            }
        }
    }

    fn sample_existing_excluding(&mut self, from: u32, rng: &mut SimRng) -> u32 {
        let w_from = (self.utility[from as usize] - self.existing.max).exp();
        if w_from <= 0.5 * self.existing.total() {
            // rejection: at most half the mass is refused, so two draws expected
            loop {
                let c = self.existing.sample(rng);
                if c != from {
                    return c;
                }
            }
        }
        let rebuild = !matches!(&self.dominant, Some((cell, _)) if *cell == from);
        if rebuild {
            let others = self.existing.cells.iter().copied().filter(|&c| c != from).collect();
            self.dominant = Some((from, CandidateIndex::build(others, self.utility, true)));
        }
        self.dominant.as_ref().map(|(_, idx)| idx.sample(rng)).expect("dominant index built")
    }
}

/// No cell qualified as a destination for the drawn relocation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("NoCandidates: no destination cell available")]
pub struct NoCandidates;

/// Destination of one division given its lottery draw and its type's utility field.
///
/// `Ok(None)` means the division stays. Candidates for `EvaluateExisting` are
/// the occupied cells other than the division's own; for `EvaluateVacant`, the
/// cells with no division.
pub fn select_destination(
    state: &mut SimulationState,
    division: u64,
    draw: RelocationDraw,
    utility: &UtilityField,
    mode: SelectionMode,
) -> Result<Option<CellId>, NoCandidates> {
    let width = state.config.width;
    let from = state.divisions.cell[division as usize];
    let mut chooser = DestinationChooser::new(mode, utility.values(), &state.census);
    chooser.choose(from, draw, &mut state.rng).map(|dest| dest.map(|c| CellId::from_index(c as usize, width)))
}

fn needs_fields(cfg: &SimConfig) -> bool {
    let p = [&cfg.params_old, &cfg.params_new];
    cfg.lambda1 < 1.0 && p.iter().any(|p| p.beta_mp != 0.0 || p.beta_ap != 0.0 || p.beta_cp != 0.0)
}

fn utilities(state: &SimulationState, kernels: Option<&KernelSet>) -> Result<[UtilityField; 2], FieldError> {
    let cfg = &state.config;
    let grid = &state.census;
    match kernels {
        Some(kernels) => {
            let mut cache = FieldCache::new(grid, kernels);
            Ok([cache.utility(DivisionType::Old, cfg)?, cache.utility(DivisionType::New, cfg)?])
        }
        None => {
            Ok(DivisionType::ALL
                .map(|dtype| UtilityField { dtype, field: ScalarField::zeros(grid.width, grid.height) }))
        }
    }
}

/// Advances the state by one step.
///
/// `kernels` may be `None` only when every utility weight is zero.
pub fn step(state: &mut SimulationState, kernels: Option<&KernelSet>) -> Result<StepReport, DynamicsError> {
    let w_before = state.divisions.len() as u64;

    grow_divisions(state);
    let spawned = process_spinoffs(state);
    debug_assert_eq!(state.census.total(), state.divisions.len() as u64);

    let n = state.divisions.len();
    assert!(n < u32::MAX as usize, "division ids exceed u32");
    let cfg = &state.config;
    let lottery = RelocationLottery::new(cfg);
    let (mut stays, mut no_candidates, mut moved_existing, mut moved_vacant) = (0u64, 0u64, 0u64, 0u64);
    let mut moves: Vec<(u32, u32)> = Vec::new();

    if cfg.lambda1 < 1.0 {
        let kernels = if needs_fields(cfg) { kernels } else { None };
        if needs_fields(cfg) && kernels.is_none() {
            return Err(DynamicsError::MissingKernels);
        }
        let fields = utilities(state, kernels)?;
        let mode = cfg.selection_mode;
        let mut choosers = [
            DestinationChooser::new(mode, fields[0].values(), &state.census),
            DestinationChooser::new(mode, fields[1].values(), &state.census),
        ];
        let SimulationState { divisions, rng, .. } = &mut *state;
        for i in 0..n {
            let draw = lottery.classify(rng);
            if draw == RelocationDraw::Stay {
                stays += 1;
                continue;
            }
            let from = divisions.cell[i];
            let chooser = &mut choosers[divisions.dtype[i] as usize];
            match chooser.choose(from, draw, rng) {
                Ok(Some(dest)) => {
                    moves.push((i as u32, dest));
                    if draw == RelocationDraw::EvaluateExisting {
                        moved_existing += 1;
                    } else {
                        moved_vacant += 1;
                    }
                }
                Ok(None) => stays += 1,
                Err(NoCandidates) => no_candidates += 1,
            }
        }
    } else {
        stays = n as u64;
    }

    let width = state.config.width;
    for &(id, dest) in &moves {
        let id = id as usize;
        let from = state.divisions.cell[id] as usize;
        let dtype = DivisionType::from_code(state.divisions.dtype[id]);
        let grid = &mut state.census;
        match dtype {
            DivisionType::Old => grid.count_old[from] -= 1,
            DivisionType::New => grid.count_new[from] -= 1,
        }
        grid.count_total[from] -= 1;
        grid.add(CellId::from_index(dest as usize, width), dtype, 1);
        state.divisions.cell[id] = dest;
    }
    state.step += 1;

    let n_new = state.census.count_new.iter().map(|&c| c as u64).sum::<u64>();
    let n_total = state.divisions.len() as u64;
    Ok(StepReport {
        step: state.step,
        n_old: n_total - n_new,
        n_new,
        n_spinoffs_old: spawned.n_old,
        n_spinoffs_new: spawned.n_new,
        n_moves_existing: moved_existing,
        n_moves_vacant: moved_vacant,
        n_stays: stays,
        n_no_candidates: no_candidates,
        realized_growth_rate: if w_before == 0 { 0.0 } else { (n_total as f64 - w_before as f64) / w_before as f64 },
        l_index: None,
    })
}

/// A state bundled with the kernels its utility fields need.
#[derive(Debug, Clone)]
pub struct Simulation {
    state: SimulationState,
    kernels: Option<KernelSet>,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, DynamicsError> {
        let state = new_simulation(cfg)?;
        Self::from_state(state)
    }

    pub fn from_state(state: SimulationState) -> Result<Self, DynamicsError> {
        let kernels = if needs_fields(&state.config) { Some(KernelSet::for_config(&state.config)?) } else { None };
        Ok(Self { state, kernels })
    }

    pub fn state(&self) -> &SimulationState {
        &self.state
    }

    pub fn into_state(self) -> SimulationState {
        self.state
    }

    pub fn kernels(&self) -> Option<&KernelSet> {
        self.kernels.as_ref()
    }

    pub fn step(&mut self) -> Result<StepReport, DynamicsError> {
        step(&mut self.state, self.kernels.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Keep a census every this many steps, including step 0.
    pub snapshot_every: Option<u32>,
    /// Compute the cluster index after every step.
    pub track_l_index: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub reports: Vec<StepReport>,
    pub snapshots: Vec<(u32, PopulationGrid)>,
    pub final_state: SimulationState,
}

pub fn run(cfg: SimConfig) -> Result<RunResult, DynamicsError> {
    run_with(cfg, RunOptions { snapshot_every: None, track_l_index: true })
}

pub fn run_with(cfg: SimConfig, opts: RunOptions) -> Result<RunResult, DynamicsError> {
    let steps = cfg.steps;
    let d = cfg.metric_distance;
    let mut sim = Simulation::new(cfg)?;
    let mut reports = Vec::with_capacity(steps as usize);
    let mut snapshots = Vec::new();
    let snap_due = |t: u32| matches!(opts.snapshot_every, Some(k) if k > 0 && t.is_multiple_of(k));

    if snap_due(0) {
        snapshots.push((0, sim.state.census.clone()));
    }
    for _ in 0..steps {
        let mut report = sim.step()?;
        if opts.track_l_index {
            report.l_index = cluster_k(&sim.state.census, d).ok().map(|k| cluster_l(k, d));
        }
        if snap_due(report.step) {
            snapshots.push((report.step, sim.state.census.clone()));
        }
        reports.push(report);
    }
    Ok(RunResult { reports, snapshots, final_state: sim.into_state() })
}
