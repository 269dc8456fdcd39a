use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{layer_cost, AcceleratorSpec, CoreKind, HwError, LayerCost, Residency, TensorInput, TensorSource};
use crate::arch::LayerGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledLayer {
    pub core: usize,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub producer: usize,
    pub consumer: usize,
    pub bits: u64,
    pub hops: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub cores: Vec<CoreKind>,
    /// Indexed by graph node.
    pub layers: Vec<ScheduledLayer>,
    pub transfers: Vec<Transfer>,
    pub makespan: u64,
}

impl AllocationPlan {
    pub fn assignment(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.core).collect()
    }

    /// Dependencies respected, no core overlap, every cross-core edge has a
    /// transfer record.
    pub fn validate(&self, graph: &LayerGraph) -> Result<(), HwError> {
        let bad = |m: String| Err(HwError::InvalidPlan(m));
        if self.layers.len() != graph.nodes.len() {
            return bad(format!("{} scheduled layers for {} nodes", self.layers.len(), graph.nodes.len()));
        }
        for &(p, c) in &graph.edges {
            let (lp, lc) = (self.layers[p], self.layers[c]);
            if lc.start < lp.end {
                return bad(format!("layer {c} starts at {} before producer {p} ends at {}", lc.start, lp.end));
            }
            if lp.core != lc.core
                && !self
                    .transfers
                    .iter()
                    .any(|t| t.producer == p && t.consumer == c)
            {
                return bad(format!("edge {p}->{c} crosses cores without a transfer"));
            }
        }
        for core in 0..self.cores.len() {
            let mut spans: Vec<(u64, u64)> = self
                .layers
                .iter()
                .filter(|l| l.core == core && l.end > l.start)
                .map(|l| (l.start, l.end))
                .collect();
            spans.sort_unstable();
            if spans.windows(2).any(|w| w[1].0 < w[0].1) {
                return bad(format!("core {core} runs two layers at once"));
            }
        }
        let end = self.layers.iter().map(|l| l.end).max().unwrap_or(0);
        if end != self.makespan {
            return bad(format!("makespan {} but last layer ends at {end}", self.makespan));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneticParams {
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub seed: u64,
}

impl Default for GeneticParams {
    fn default() -> Self {
        Self {
            population: 16,
            generations: 30,
            mutation_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum AllocationMode {
    #[default]
    Greedy,
    Genetic(GeneticParams),
}

fn residency(graph: &LayerGraph, node: usize, core: usize, assigned: &[usize], spec: &AcceleratorSpec) -> Residency {
    let preds = graph.predecessors(node);
    if preds.is_empty() {
        let n = &graph.nodes[node];
        return Residency {
            inputs: vec![TensorInput {
                bits: n.input.elements() * n.bits as u64,
                source: TensorSource::OffChip,
            }],
        };
    }
    Residency {
        inputs: preds
            .into_iter()
            .map(|p| {
                let src = &graph.nodes[p];
                let hops = spec.hops(assigned[p], core);
                TensorInput {
                    bits: src.output.elements() * src.bits as u64,
                    source: if hops == 0 {
                        TensorSource::Local
                    } else {
                        TensorSource::Remote { hops }
                    },
                }
            })
            .collect(),
    }
}

/// Schedule a fixed layer-to-core assignment in node order and cost every
/// layer under it.
pub fn schedule_assignment(
    graph: &LayerGraph,
    spec: &AcceleratorSpec,
    assignment: &[usize],
) -> Result<(AllocationPlan, Vec<LayerCost>), HwError> {
    if assignment.len() != graph.nodes.len() {
        return Err(HwError::LengthMismatch(format!(
            "{} assignments for {} layers",
            assignment.len(),
            graph.nodes.len()
        )));
    }
    let cores = spec.cores();
    let mut free = vec![0u64; cores.len()];
    let mut layers = Vec::with_capacity(graph.nodes.len());
    let mut costs = Vec::with_capacity(graph.nodes.len());
    let mut transfers = Vec::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        let core = assignment[i];
        let cost = layer_cost(node, core, spec, &residency(graph, i, core, assignment, spec))?;
        let preds = graph.predecessors(i);
        let ready = preds.iter().map(|&p| layers.get(p).map_or(0, |l: &ScheduledLayer| l.end)).max().unwrap_or(0);
        let start = ready.max(free[core]);
        let end = start + cost.latency;
        free[core] = end;
        for p in preds {
            if assignment[p] != core {
                let src = &graph.nodes[p];
                transfers.push(Transfer {
                    producer: p,
                    consumer: i,
                    bits: src.output.elements() * src.bits as u64,
                    hops: spec.hops(assignment[p], core),
                });
            }
        }
        layers.push(ScheduledLayer { core, start, end });
        costs.push(cost);
    }
    let makespan = layers.iter().map(|l| l.end).max().unwrap_or(0);
    Ok((
        AllocationPlan {
            cores,
            layers,
            transfers,
            makespan,
        },
        costs,
    ))
}

fn compatible(graph: &LayerGraph, spec: &AcceleratorSpec) -> Result<Vec<Vec<usize>>, HwError> {
    graph
        .nodes
        .iter()
        .map(|n| {
            let c = spec.compatible_cores(n.kind);
            if c.is_empty() {
                Err(HwError::NoCompatibleCore {
                    layer: n.name.clone(),
                    kind: n.kind,
                })
            } else {
                Ok(c)
            }
        })
        .collect()
}

/// Each layer in node order goes to the compatible core where it finishes
/// earliest; ties go to the lowest core index.
fn greedy_assignment(graph: &LayerGraph, spec: &AcceleratorSpec, options: &[Vec<usize>]) -> Result<Vec<usize>, HwError> {
    let mut assigned = Vec::with_capacity(graph.nodes.len());
    let mut end = Vec::with_capacity(graph.nodes.len());
    let mut free = vec![0u64; spec.core_count()];
    for (i, node) in graph.nodes.iter().enumerate() {
        let ready = graph.predecessors(i).iter().map(|&p| end[p]).max().unwrap_or(0);
        let mut best: Option<(u64, usize)> = None;
        for &core in &options[i] {
            let cost = layer_cost(node, core, spec, &residency(graph, i, core, &assigned, spec))?;
            let finish = ready.max(free[core]) + cost.latency;
            if best.is_none_or(|(f, _)| finish < f) {
                best = Some((finish, core));
            }
        }
        let (finish, core) = best.expect("at least one compatible core");
        free[core] = finish;
        end.push(finish);
        assigned.push(core);
    }
    Ok(assigned)
}

/// Fitness: makespan, then summed latency, then summed energy.
fn fitness(plan: &AllocationPlan, costs: &[LayerCost]) -> (u64, u64, f64) {
    (
        plan.makespan,
        costs.iter().map(|c| c.latency).sum(),
        costs.iter().map(|c| c.energy).sum(),
    )
}

fn better(a: (u64, u64, f64), b: (u64, u64, f64)) -> bool {
    (a.0, a.1) < (b.0, b.1) || ((a.0, a.1) == (b.0, b.1) && a.2 < b.2)
}

fn genetic_assignment(
    graph: &LayerGraph,
    spec: &AcceleratorSpec,
    options: &[Vec<usize>],
    seed_plan: Vec<usize>,
    params: &GeneticParams,
) -> Result<Vec<usize>, HwError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let score = |a: &[usize]| -> Result<(u64, u64, f64), HwError> {
        let (plan, costs) = schedule_assignment(graph, spec, a)?;
        Ok(fitness(&plan, &costs))
    };
    let size = params.population.max(2);
    let mut pop: Vec<(Vec<usize>, (u64, u64, f64))> = Vec::with_capacity(size);
    let f0 = score(&seed_plan)?;
    pop.push((seed_plan, f0));
    while pop.len() < size {
        let a: Vec<usize> = options.iter().map(|o| o[rng.random_range(0..o.len())]).collect();
        let f = score(&a)?;
        pop.push((a, f));
    }
    let pick = |pop: &[(Vec<usize>, (u64, u64, f64))], rng: &mut ChaCha8Rng| -> usize {
        let a = rng.random_range(0..pop.len());
        let b = rng.random_range(0..pop.len());
        if better(pop[b].1, pop[a].1) {
            b
        } else {
            a
        }
    };
    for _ in 0..params.generations {
        let elite = pop
            .iter()
            .enumerate()
            .fold(0, |best, (i, p)| if better(p.1, pop[best].1) { i } else { best });
        let mut next = vec![pop[elite].clone()];
        while next.len() < size {
            let (pa, pb) = (pick(&pop, &mut rng), pick(&pop, &mut rng));
            let child: Vec<usize> = (0..options.len())
                .map(|g| {
                    let gene = if rng.random_bool(0.5) { pop[pa].0[g] } else { pop[pb].0[g] };
                    if rng.random_bool(params.mutation_rate) {
                        options[g][rng.random_range(0..options[g].len())]
                    } else {
                        gene
                    }
                })
                .collect();
            let f = score(&child)?;
            next.push((child, f));
        }
        pop = next;
    }
    let best = pop
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if better(p.1, pop[best].1) { i } else { best });
    Ok(pop.swap_remove(best).0)
}

/// Assign layers to cores and schedule them. Both modes are deterministic;
/// the genetic mode starts from the greedy plan and keeps the best plan
/// found, so it never does worse.
pub fn allocate(graph: &LayerGraph, spec: &AcceleratorSpec, mode: &AllocationMode) -> Result<AllocationPlan, HwError> {
    allocate_with_costs(graph, spec, mode).map(|(p, _)| p)
}

/// [`allocate`] returning the per-layer costs under the chosen plan.
pub fn allocate_with_costs(
    graph: &LayerGraph,
    spec: &AcceleratorSpec,
    mode: &AllocationMode,
) -> Result<(AllocationPlan, Vec<LayerCost>), HwError> {
    spec.validate()?;
    if !graph.is_topologically_ordered() {
        return Err(HwError::InvalidPlan("graph nodes are not in dependency order".into()));
    }
    let options = compatible(graph, spec)?;
    let greedy = greedy_assignment(graph, spec, &options)?;
    let assignment = match mode {
        AllocationMode::Greedy => greedy,
        AllocationMode::Genetic(p) => genetic_assignment(graph, spec, &options, greedy, p)?,
    };
    schedule_assignment(graph, spec, &assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{LayerKind, LayerNode, Segment, Shape};

    fn node(macs: u64) -> LayerNode {
        LayerNode {
            name: format!("l{macs}"),
            kind: LayerKind::Conv,
            input: Shape::new(1, 1, 32),
            output: Shape::new(1, 1, 16),
            kernel: 1,
            macs,
            params: 0,
            bits: 8,
            segment: Segment::Backbone(0),
        }
    }

    #[test]
    fn single_layer_goes_to_core_zero() {
        let g = LayerGraph {
            nodes: vec![node(5120)],
            edges: vec![],
            exits: vec![],
        };
        let plan = allocate(&g, &AcceleratorSpec::default(), &AllocationMode::Greedy).unwrap();
        assert_eq!(plan.layers[0].core, 0);
        plan.validate(&g).unwrap();
    }

    #[test]
    fn independent_layers_run_in_parallel() {
        let g = LayerGraph {
            nodes: vec![node(5120), node(5120)],
            edges: vec![],
            exits: vec![],
        };
        let spec = AcceleratorSpec {
            compute_cores: 2,
            pooling_core: false,
            simd_core: false,
            ..AcceleratorSpec::default()
        };
        let (plan, costs) = allocate_with_costs(&g, &spec, &AllocationMode::Greedy).unwrap();
        assert_eq!(plan.assignment(), vec![0, 1]);
        assert_eq!(plan.makespan, costs[0].latency);
    }

    #[test]
    fn genetic_never_worse_and_deterministic() {
        let g = LayerGraph {
            nodes: (1..=6).map(|i| node(512 * 40 * i)).collect(),
            edges: vec![(0, 2), (1, 2), (2, 4), (3, 4), (4, 5)],
            exits: vec![],
        };
        let spec = AcceleratorSpec::default();
        let greedy = allocate(&g, &spec, &AllocationMode::Greedy).unwrap();
        let mode = AllocationMode::Genetic(GeneticParams::default());
        let a = allocate(&g, &spec, &mode).unwrap();
        let b = allocate(&g, &spec, &mode).unwrap();
        assert_eq!(a, b);
        assert!(a.makespan <= greedy.makespan);
        a.validate(&g).unwrap();
    }

    #[test]
    fn missing_core_kind_reported() {
        let mut n = node(0);
        n.kind = LayerKind::Pool;
        let g = LayerGraph {
            nodes: vec![n],
            edges: vec![],
            exits: vec![],
        };
        let spec = AcceleratorSpec {
            pooling_core: false,
            ..AcceleratorSpec::default()
        };
        assert!(matches!(
            allocate(&g, &spec, &AllocationMode::Greedy),
            Err(HwError::NoCompatibleCore { .. })
        ));
    }
}
