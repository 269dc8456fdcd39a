//! Analytical energy and latency model of a multi-core accelerator.
//!
//! A layer graph is assigned to cores and scheduled. Each layer then gets an
//! energy `E_k` (MACs, SRAM and off-chip traffic, NoC traffic) and a latency
//! `T_k` (compute and memory stalls overlapped, NoC transfers serialized).
//! The cost of leaving at exit `i` is `ET_i = (sum E_k) * (sum T_k)` over
//! every layer needed to reach it.

mod alloc;
mod cost;
mod report;
mod spec;

pub use alloc::{
    allocate, allocate_with_costs, schedule_assignment, AllocationMode, AllocationPlan, GeneticParams,
    ScheduledLayer, Transfer,
};
pub use cost::{compute_cycles, layer_cost, utilization, LayerCost, Residency, TensorInput, TensorSource};
pub use report::{
    arch_cost, cost_report, cost_report_with, et_avg, et_subnetwork, overhead_from_costs, overhead_ratio, set_et,
    ArchCost, HwCostReport,
};
pub use spec::{AcceleratorSpec, CoreKind, EnergyConstants};

use crate::arch::{ArchError, LayerKind};

#[derive(Debug, thiserror::Error)]
pub enum HwError {
    #[error("invalid accelerator spec: {0}")]
    InvalidSpec(String),
    #[error("no core can run layer {layer} ({kind:?})")]
    NoCompatibleCore { layer: String, kind: LayerKind },
    #[error("layer {layer} cannot run on core {core}")]
    IncompatibleCore { layer: String, core: usize },
    #[error("no core with index {0}")]
    UnknownCore(usize),
    #[error("costs given for {found} layers, graph has {expected}")]
    MissingCosts { expected: usize, found: usize },
    #[error("exit {exit} of {exits} has no following segment, so no overhead")]
    NoOverhead { exit: usize, exits: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid exit ratios: {0}")]
    InvalidRatios(String),
    #[error("invalid allocation plan: {0}")]
    InvalidPlan(String),
    #[error("inconsistent cost report: {0}")]
    InvalidReport(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Arch(#[from] ArchError),
}
