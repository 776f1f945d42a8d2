//! Distance-decay kernels and the potential, utility and logit-probability
//! computations built on them.

use thiserror::Error;

use crate::model::{CellId, DivisionType, PopulationGrid, SimConfig};

/// Largest kernel built by default, in matrix entries: a full 50x50 grid.
pub const DEFAULT_KERNEL_BUDGET: usize = 6_250_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("GridTooLarge: a {width}x{height} kernel needs {entries} entries, budget is {budget}")]
    GridTooLarge { width: u32, height: u32, entries: usize, budget: usize },
    #[error("NonPositiveAlpha: kernel decay must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("DimensionMismatch: expected {expected} cells, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("EmptyCandidateSet: no candidate cells")]
    EmptyCandidateSet,
    #[error("NonFiniteUtility: utility {0} is not finite")]
    NonFiniteUtility(f64),
}

/// Dense symmetric matrix of `exp(-alpha * d_ij)` over all cell pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayKernel {
    width: u32,
    height: u32,
    alpha: f64,
    weights: Vec<f64>,
}

impl DecayKernel {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn n_cells(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n_cells() + j]
    }

    pub fn weight_between(&self, a: CellId, b: CellId) -> f64 {
        self.weight(a.index(self.width), b.index(self.width))
    }

    /// Row `i`, equal to column `i` by symmetry.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_cells();
        &self.weights[i * n..(i + 1) * n]
    }
}

pub fn build_decay_kernel(width: u32, height: u32, alpha: f64) -> Result<DecayKernel, FieldError> {
    build_decay_kernel_with_budget(width, height, alpha, DEFAULT_KERNEL_BUDGET)
}

pub fn build_decay_kernel_with_budget(
    width: u32,
    height: u32,
    alpha: f64,
    budget: usize,
) -> Result<DecayKernel, FieldError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(FieldError::NonPositiveAlpha(alpha));
    }
    let n = width as usize * height as usize;
    let entries = n.saturating_mul(n);
    if entries > budget {
        return Err(FieldError::GridTooLarge { width, height, entries, budget });
    }

    // The weight depends only on |dx|, |dy|: evaluate each offset once.
    let (w, h) = (width as usize, height as usize);
    let mut by_offset = vec![0.0; w * h];
    for dy in 0..h {
        for dx in 0..w {
            let d = ((dx * dx + dy * dy) as f64).sqrt();
            by_offset[dy * w + dx] = (-alpha * d).exp();
        }
    }

    let mut weights = vec![0.0; entries];
    for (i, row) in weights.chunks_exact_mut(n.max(1)).enumerate().take(n) {
        let (xi, yi) = (i % w, i / w);
        for (j, slot) in row.iter_mut().enumerate() {
            let (xj, yj) = (j % w, j / w);
            *slot = by_offset[yi.abs_diff(yj) * w + xi.abs_diff(xj)];
        }
    }
    Ok(DecayKernel { width, height, alpha, weights })
}

/// One real value per cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, values: vec![0.0; width as usize * height as usize] }
    }

    pub fn at(&self, cell: CellId) -> f64 {
        self.values[cell.index(self.width)]
    }
}

/// `field(i) = sum_j counts(j) * w_ij` over every cell `j`, self-cell included.
///
/// Terms are accumulated in ascending `j` for every `i`, so the result is
/// bit-identical to the plain double loop.
pub fn potential_field(counts: &[u32], kernel: &DecayKernel) -> Result<ScalarField, FieldError> {
    let n = kernel.n_cells();
    if counts.len() != n {
        return Err(FieldError::DimensionMismatch { expected: n, actual: counts.len() });
    }
    let mut values = vec![0.0; n];
    for (j, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let c = c as f64;
        // w is symmetric, so row j holds w_ij for every i
        for (v, &w) in values.iter_mut().zip(kernel.row(j)) {
            *v += c * w;
        }
    }
    Ok(ScalarField { width: kernel.width, height: kernel.height, values })
}

/// Which population a potential sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Total,
    Type(DivisionType),
}

impl Channel {
    fn counts(self, grid: &PopulationGrid) -> &[u32] {
        match self {
            Channel::Total => &grid.count_total,
            Channel::Type(t) => grid.counts(t),
        }
    }
}

/// Kernels for both division types and all three potentials.
///
/// Kernels are shared between potentials with the same decay, so at most six
/// and usually two are built.
#[derive(Debug, Clone)]
pub struct KernelSet {
    kernels: Vec<DecayKernel>,
    // [type][mp, ap, cp] -> index into `kernels`
    slots: [[usize; 3]; 2],
}

impl KernelSet {
    pub fn for_config(cfg: &SimConfig) -> Result<Self, FieldError> {
        Self::for_config_with_budget(cfg, DEFAULT_KERNEL_BUDGET)
    }

    pub fn for_config_with_budget(cfg: &SimConfig, budget: usize) -> Result<Self, FieldError> {
        let mut kernels: Vec<DecayKernel> = Vec::new();
        let mut slots = [[0usize; 3]; 2];
        for dtype in DivisionType::ALL {
            let p = cfg.params(dtype);
            for (k, alpha) in [p.alpha_mp, p.alpha_ap, p.alpha_cp].into_iter().enumerate() {
                let idx = match kernels.iter().position(|kr| kr.alpha.to_bits() == alpha.to_bits()) {
                    Some(idx) => idx,
                    None => {
                        kernels.push(build_decay_kernel_with_budget(cfg.width, cfg.height, alpha, budget)?);
                        kernels.len() - 1
                    }
                };
                slots[dtype.code() as usize][k] = idx;
            }
        }
        Ok(Self { kernels, slots })
    }

    pub fn n_distinct(&self) -> usize {
        self.kernels.len()
    }

    pub fn mp(&self, dtype: DivisionType) -> &DecayKernel {
        &self.kernels[self.slots[dtype.code() as usize][0]]
    }

    pub fn ap(&self, dtype: DivisionType) -> &DecayKernel {
        &self.kernels[self.slots[dtype.code() as usize][1]]
    }

    pub fn cp(&self, dtype: DivisionType) -> &DecayKernel {
        &self.kernels[self.slots[dtype.code() as usize][2]]
    }
}

/// Utility of every cell as seen by divisions of `dtype`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityField {
    pub dtype: DivisionType,
    pub field: ScalarField,
}

impl UtilityField {
    pub fn at(&self, cell: CellId) -> f64 {
        self.field.at(cell)
    }

    pub fn values(&self) -> &[f64] {
        &self.field.values
    }
}

/// Evaluates potentials for one census, reusing any (channel, kernel) pair
/// already computed.
pub struct FieldCache<'a> {
    grid: &'a PopulationGrid,
    kernels: &'a KernelSet,
    computed: Vec<(Channel, usize, ScalarField)>,
}

impl<'a> FieldCache<'a> {
    pub fn new(grid: &'a PopulationGrid, kernels: &'a KernelSet) -> Self {
        Self { grid, kernels, computed: Vec::new() }
    }

    fn potential(&mut self, channel: Channel, kernel: &DecayKernel) -> Result<&ScalarField, FieldError> {
        let key = kernel as *const DecayKernel as usize;
        let pos = match self.computed.iter().position(|(c, k, _)| *c == channel && *k == key) {
            Some(pos) => pos,
            None => {
                let field = potential_field(channel.counts(self.grid), kernel)?;
                self.computed.push((channel, key, field));
                self.computed.len() - 1
            }
        };
        Ok(&self.computed[pos].2)
    }

    /// `U = beta_mp MP + beta_ap AP + beta_cp CP`; terms with a zero weight are skipped.
    pub fn utility(&mut self, dtype: DivisionType, cfg: &SimConfig) -> Result<UtilityField, FieldError> {
        let p = *cfg.params(dtype);
        let kernels = self.kernels;
        if kernels.mp(dtype).n_cells() != self.grid.n_cells() {
            return Err(FieldError::DimensionMismatch {
                expected: kernels.mp(dtype).n_cells(),
                actual: self.grid.n_cells(),
            });
        }
        let mut field = ScalarField::zeros(self.grid.width, self.grid.height);
        let terms = [
            (p.beta_mp, Channel::Total, kernels.mp(dtype)),
            (p.beta_ap, Channel::Type(dtype), kernels.ap(dtype)),
            (p.beta_cp, Channel::Total, kernels.cp(dtype)),
        ];
        for (beta, channel, kernel) in terms {
            if beta == 0.0 {
                continue;
            }
            let potential = self.potential(channel, kernel)?;
            for (u, &v) in field.values.iter_mut().zip(&potential.values) {
                *u += beta * v;
            }
        }
        Ok(UtilityField { dtype, field })
    }
}

/// Utility field for divisions of `dtype` under the state's current census.
pub fn utility_field(
    state: &crate::model::SimulationState,
    dtype: DivisionType,
    kernels: &KernelSet,
) -> Result<UtilityField, FieldError> {
    FieldCache::new(state.population(), kernels).utility(dtype, state.config())
}

/// Logit probabilities, `exp(U_i - U_max) / sum_j exp(U_j - U_max)`.
pub fn softmax(utilities: &[f64]) -> Result<Vec<f64>, FieldError> {
    if utilities.is_empty() {
        return Err(FieldError::EmptyCandidateSet);
    }
    if let Some(&bad) = utilities.iter().find(|u| !u.is_finite()) {
        return Err(FieldError::NonFiniteUtility(bad));
    }
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = utilities.iter().map(|&u| (u - max).exp()).collect();
    let z: f64 = p.iter().sum();
    for v in &mut p {
        *v /= z;
    }
    Ok(p)
}

/// Candidate cells paired with their relocation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    pub cells: Vec<CellId>,
    pub probs: Vec<f64>,
}

pub fn relocation_probabilities(
    candidates: &[CellId],
    utility: &UtilityField,
) -> Result<ProbabilityVector, FieldError> {
    let utilities: Vec<f64> = candidates.iter().map(|&c| utility.at(c)).collect();
    Ok(ProbabilityVector { cells: candidates.to_vec(), probs: softmax(&utilities)? })
}
