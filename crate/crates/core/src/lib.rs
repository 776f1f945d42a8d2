//! Grid-based simulation of firm divisions that grow, spin off and relocate
//! toward market, agglomeration and congestion potentials.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: domain types, configuration and the per-cell census.
//! - [`fields`]: distance-decay kernels, potential and utility fields, logit probabilities.
//! - [`dynamics`]: growth, spin-offs, relocation and the step/run loop.
//! - [`metrics`]: cluster index, rank-size distribution and log-linear fits.
//! - [`harness`]: model presets, scenario and sweep runners, exporters and the CLI.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod fields;
pub mod harness;
pub mod metrics;
pub mod model;

pub use dynamics::{run, run_with, step, RelocationDraw, RunOptions, RunResult, Simulation, StepReport};
pub use fields::{DecayKernel, KernelSet, ScalarField, UtilityField};
pub use metrics::{ClusterIndex, PowerLawFit, RankedCities};
pub use model::{
    census, new_simulation, validate_config, CellId, Division, DivisionType, InitSizePolicy, PopulationGrid,
    SelectionMode, SimConfig, SimulationState, Topology, TypeParams,
};
