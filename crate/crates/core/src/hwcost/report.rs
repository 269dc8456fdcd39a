use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{allocate_with_costs, AcceleratorSpec, AllocationMode, AllocationPlan, HwError, LayerCost};
use crate::arch::{cumulative_macs, expand_layers, EennArchitecture, LayerGraph};
use crate::eval::ER_TOLERANCE;

/// `(sum E) * (sum T)` over a set of layers.
pub fn set_et(costs: &[LayerCost], nodes: &[usize]) -> f64 {
    let e: f64 = nodes.iter().map(|&k| costs[k].energy).sum();
    let t: u64 = nodes.iter().map(|&k| costs[k].latency).sum();
    e * t as f64
}

fn check_costs(costs: &[LayerCost], graph: &LayerGraph) -> Result<(), HwError> {
    if costs.len() != graph.nodes.len() {
        return Err(HwError::MissingCosts {
            expected: graph.nodes.len(),
            found: costs.len(),
        });
    }
    Ok(())
}

/// Energy-latency product of the sub-network ending at `exit`: the backbone
/// up to its mount and the heads of every exit up to and including it.
pub fn et_subnetwork(costs: &[LayerCost], graph: &LayerGraph, exit: usize) -> Result<f64, HwError> {
    check_costs(costs, graph)?;
    Ok(set_et(costs, &graph.required_nodes(exit)?))
}

/// `sum_i ER_i * ET_i`.
pub fn et_avg(et: &[f64], er: &[f64]) -> Result<f64, HwError> {
    if et.len() != er.len() {
        return Err(HwError::LengthMismatch(format!("{} ET values, {} exit ratios", et.len(), er.len())));
    }
    if er.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(HwError::InvalidRatios(format!("{er:?}")));
    }
    let sum: f64 = er.iter().sum();
    if (sum - 1.0).abs() > ER_TOLERANCE {
        return Err(HwError::InvalidRatios(format!("exit ratios sum to {sum}")));
    }
    Ok(et.iter().zip(er).map(|(e, r)| e * r).sum())
}

/// ET of the head of `exit` over ET of the backbone segment up to the next
/// exit's mount. A costless head gives 0; a costless segment gives infinity.
pub fn overhead_from_costs(costs: &[LayerCost], graph: &LayerGraph, exit: usize) -> Result<f64, HwError> {
    check_costs(costs, graph)?;
    if exit + 1 >= graph.exit_count() {
        return Err(HwError::NoOverhead {
            exit,
            exits: graph.exit_count(),
        });
    }
    let head = set_et(costs, graph.head_nodes(exit)?);
    let segment = set_et(costs, &graph.segment_after(exit)?);
    Ok(if head == 0.0 {
        0.0
    } else if segment == 0.0 {
        f64::INFINITY
    } else {
        head / segment
    })
}

/// Overhead of an intermediate exit of a costed architecture.
pub fn overhead_ratio(report: &HwCostReport, graph: &LayerGraph, exit: usize) -> Result<f64, HwError> {
    overhead_from_costs(&report.layers, graph, exit)
}

/// Exit-ratio-independent costs of an architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchCost {
    pub graph: LayerGraph,
    pub plan: AllocationPlan,
    pub layers: Vec<LayerCost>,
    /// Cumulative ET per exit.
    pub et: Vec<f64>,
    /// One per intermediate exit.
    pub overheads: Vec<f64>,
    pub cumulative_macs: Vec<u64>,
}

impl ArchCost {
    /// Largest exit overhead; 0 when there are no intermediate exits.
    pub fn max_overhead(&self) -> f64 {
        self.overheads.iter().copied().fold(0.0, f64::max)
    }

    pub fn with_exit_ratios(self, er: &[f64]) -> Result<HwCostReport, HwError> {
        let et_avg = et_avg(&self.et, er)?;
        let report = HwCostReport {
            makespan: self.plan.makespan,
            graph: self.graph,
            plan: self.plan,
            layers: self.layers,
            et: self.et,
            overheads: self.overheads,
            cumulative_macs: self.cumulative_macs,
            exit_ratios: er.to_vec(),
            et_avg,
        };
        Ok(report)
    }
}

pub fn arch_cost(arch: &EennArchitecture, spec: &AcceleratorSpec, mode: &AllocationMode) -> Result<ArchCost, HwError> {
    let graph = expand_layers(arch)?;
    let (plan, layers) = allocate_with_costs(&graph, spec, mode)?;
    let m = graph.exit_count();
    let et = (0..m)
        .map(|i| et_subnetwork(&layers, &graph, i))
        .collect::<Result<Vec<_>, _>>()?;
    let overheads = (0..m.saturating_sub(1))
        .map(|i| overhead_from_costs(&layers, &graph, i))
        .collect::<Result<Vec<_>, _>>()?;
    let cumulative_macs = (0..m)
        .map(|i| cumulative_macs(&graph, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ArchCost {
        graph,
        plan,
        layers,
        et,
        overheads,
        cumulative_macs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwCostReport {
    pub graph: LayerGraph,
    pub plan: AllocationPlan,
    /// Indexed by graph node.
    pub layers: Vec<LayerCost>,
    pub et: Vec<f64>,
    pub overheads: Vec<f64>,
    pub cumulative_macs: Vec<u64>,
    pub exit_ratios: Vec<f64>,
    pub et_avg: f64,
    /// Schedule length with inter-core overlap, cycles.
    pub makespan: u64,
}

impl HwCostReport {
    pub fn validate(&self) -> Result<(), HwError> {
        let bad = |m: String| Err(HwError::InvalidReport(m));
        self.plan.validate(&self.graph)?;
        for (i, w) in self.et.windows(2).enumerate() {
            if w[1] <= w[0] {
                return bad(format!("ET not strictly increasing at exit {}: {} then {}", i + 1, w[0], w[1]));
            }
        }
        for i in 0..self.et.len() {
            let et = et_subnetwork(&self.layers, &self.graph, i)?;
            if et != self.et[i] {
                return bad(format!("ET of exit {i} is {} but layers give {et}", self.et[i]));
            }
        }
        if let Some(o) = self.overheads.iter().find(|o| !(**o >= 0.0)) {
            return bad(format!("negative overhead {o}"));
        }
        for (k, c) in self.layers.iter().enumerate() {
            if c.energy != c.compute_energy + c.memory_energy + c.noc_energy
                || c.latency < c.compute_cycles
                || !(c.utilization > 0.0 && c.utilization <= 1.0)
            {
                return bad(format!("inconsistent cost for layer {k}"));
            }
        }
        let avg = et_avg(&self.et, &self.exit_ratios)?;
        if (avg - self.et_avg).abs() > 1e-9 * avg.abs().max(1.0) {
            return bad(format!("average ET {} but ratios give {avg}", self.et_avg));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HwError> {
        serde_json::from_str(text).map_err(|e| HwError::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HwError> {
        let path = path.as_ref();
        crate::io::atomic_write(path, self.to_json().as_bytes()).map_err(|source| HwError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Expand, allocate greedily, cost every layer and aggregate per exit.
pub fn cost_report(arch: &EennArchitecture, spec: &AcceleratorSpec, er: &[f64]) -> Result<HwCostReport, HwError> {
    cost_report_with(arch, spec, er, &AllocationMode::Greedy)
}

pub fn cost_report_with(
    arch: &EennArchitecture,
    spec: &AcceleratorSpec,
    er: &[f64],
    mode: &AllocationMode,
) -> Result<HwCostReport, HwError> {
    arch_cost(arch, spec, mode)?.with_exit_ratios(er)
}
