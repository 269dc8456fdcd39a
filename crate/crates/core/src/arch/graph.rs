//! Expansion of an architecture into a per-layer workload graph.
//!
//! Bottlenecks are inverted residual blocks: 1x1 expansion (skipped when the
//! expansion factor is 1), KxK depthwise, 1x1 projection, and an elementwise
//! residual add when the stride is 1 and the channel count is unchanged.
//! Batch norm is folded into the preceding convolution (two parameters per
//! output channel) and activations are fused, so neither gets its own node.
//!
//! Nodes are emitted in execution order: each exit's head follows the
//! backbone layer it is mounted on.

use serde::{Deserialize, Serialize};

use super::backbone::{BackboneSpec, OperatorKind, Shape};
use super::space::EennArchitecture;
use super::ArchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    Linear,
    Pool,
    ElementwiseAdd,
    Softmax,
}

impl LayerKind {
    /// Whether the layer runs on a MAC array (as opposed to a pooling or SIMD core).
    pub fn is_matrix(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::DepthwiseConv | LayerKind::Linear)
    }
}

/// Which part of the network a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    /// Backbone layers ending at the given mount index.
    Backbone(usize),
    /// Head of the given exit (0-based, in depth order).
    Exit(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNode {
    pub name: String,
    pub kind: LayerKind,
    pub input: Shape,
    pub output: Shape,
    pub kernel: u32,
    pub macs: u64,
    pub params: u64,
    pub bits: u8,
    pub segment: Segment,
}

impl LayerNode {
    /// Output and input channel counts as mapped onto a compute array.
    pub fn mapped_channels(&self) -> Option<(u64, u64)> {
        match self.kind {
            LayerKind::Conv | LayerKind::Linear => {
                Some((self.output.c as u64, self.input.c as u64))
            }
            LayerKind::DepthwiseConv => Some((self.output.c as u64, 1)),
            _ => None,
        }
    }

    /// Weight elements that must be fetched (folded BN and biases included).
    pub fn weight_elements(&self) -> u64 {
        self.params
    }
}

/// Where an exit attaches to the backbone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitSite {
    pub label: String,
    pub mount: usize,
    /// Backbone node whose output feeds the head.
    pub attach: usize,
    /// Head node indices in execution order.
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGraph {
    pub nodes: Vec<LayerNode>,
    pub edges: Vec<(usize, usize)>,
    pub exits: Vec<ExitSite>,
}

impl LayerGraph {
    pub fn exit_count(&self) -> usize {
        self.exits.len()
    }

    pub fn total_macs(&self) -> u64 {
        self.nodes.iter().map(|n| n.macs).sum()
    }

    pub fn predecessors(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(_, c)| *c == node)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Layers executed before a sample can leave at `exit`: the backbone up to
    /// its mount plus the heads of that exit and every earlier one.
    pub fn required_nodes(&self, exit: usize) -> Result<Vec<usize>, ArchError> {
        let site = self.exits.get(exit).ok_or(ArchError::ExitOutOfRange {
            exit,
            exits: self.exits.len(),
        })?;
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| match n.segment {
                Segment::Backbone(s) => s <= site.mount,
                Segment::Exit(e) => e <= exit,
            })
            .map(|(i, _)| i)
            .collect())
    }

    /// Backbone layers after the mount of `exit` up to and including the mount
    /// of the next exit.
    pub fn segment_after(&self, exit: usize) -> Result<Vec<usize>, ArchError> {
        let out_of_range = || ArchError::ExitOutOfRange {
            exit,
            exits: self.exits.len(),
        };
        let here = self.exits.get(exit).ok_or_else(out_of_range)?.mount;
        let next = self.exits.get(exit + 1).ok_or_else(out_of_range)?.mount;
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.segment, Segment::Backbone(s) if s > here && s <= next))
            .map(|(i, _)| i)
            .collect())
    }

    pub fn head_nodes(&self, exit: usize) -> Result<&[usize], ArchError> {
        self.exits
            .get(exit)
            .map(|s| s.nodes.as_slice())
            .ok_or(ArchError::ExitOutOfRange {
                exit,
                exits: self.exits.len(),
            })
    }

    /// Producers are always emitted before consumers.
    pub fn is_topologically_ordered(&self) -> bool {
        self.edges.iter().all(|&(p, c)| p < c && c < self.nodes.len())
    }
}

/// MACs of all backbone layers up to the exit's mount plus every head of
/// exits `0..=exit`.
pub fn cumulative_macs(graph: &LayerGraph, exit: usize) -> Result<u64, ArchError> {
    Ok(graph
        .required_nodes(exit)?
        .into_iter()
        .map(|i| graph.nodes[i].macs)
        .sum())
}

struct Builder {
    nodes: Vec<LayerNode>,
    edges: Vec<(usize, usize)>,
}

impl Builder {
    fn push(&mut self, node: LayerNode, inputs: &[usize]) -> usize {
        let id = self.nodes.len();
        self.nodes.push(node);
        self.edges.extend(inputs.iter().map(|&p| (p, id)));
        id
    }
}

fn conv_out(input: u32, kernel: u32, padding: u32, stride: u32) -> Result<u32, ArchError> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(ArchError::ShapeMismatch(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

#[allow(clippy::too_many_arguments)]
fn conv_node(
    name: String,
    input: Shape,
    cout: u32,
    kernel: u32,
    padding: u32,
    stride: u32,
    depthwise: bool,
    bits: u8,
    segment: Segment,
) -> Result<LayerNode, ArchError> {
    let ho = conv_out(input.h, kernel, padding, stride)?;
    let wo = conv_out(input.w, kernel, padding, stride)?;
    let output = Shape::new(ho, wo, cout);
    let k2 = kernel as u64 * kernel as u64;
    let spatial = ho as u64 * wo as u64;
    let (macs, weights, kind) = if depthwise {
        (k2 * cout as u64 * spatial, k2 * cout as u64, LayerKind::DepthwiseConv)
    } else {
        (
            k2 * input.c as u64 * cout as u64 * spatial,
            k2 * input.c as u64 * cout as u64,
            LayerKind::Conv,
        )
    };
    Ok(LayerNode {
        name,
        kind,
        input,
        output,
        kernel,
        macs,
        params: weights + 2 * cout as u64,
        bits,
        segment,
    })
}

/// Backbone nodes only, with the index of the last node of every block unit.
fn expand_backbone(
    backbone: &BackboneSpec,
    bits: u8,
    b: &mut Builder,
) -> Result<Vec<usize>, ArchError> {
    let mut shape = backbone.input;
    let mut prev: Option<usize> = None;
    let mut unit_tails = Vec::new();
    let mut unit = 0usize;
    let segment_of = |u: usize| {
        let s = backbone
            .mounts
            .iter()
            .position(|m| m.unit >= u)
            .expect("validated: final mount follows the last unit");
        Segment::Backbone(s)
    };
    for (row, block) in backbone.blocks.iter().enumerate() {
        for rep in 0..block.repetition {
            let stride = if rep == 0 { block.stride } else { 1 };
            let seg = segment_of(unit);
            let inputs: Vec<usize> = prev.into_iter().collect();
            let tag = format!("b{row}.{rep}");
            match block.op {
                OperatorKind::Conv2d => {
                    let n = conv_node(
                        format!("{tag}.conv"),
                        shape,
                        block.channels,
                        block.kernel,
                        block.padding,
                        stride,
                        false,
                        bits,
                        seg,
                    )?;
                    shape = n.output;
                    prev = Some(b.push(n, &inputs));
                }
                OperatorKind::Bottleneck => {
                    let block_in = shape;
                    let block_src = prev;
                    let mut cur = inputs;
                    let mut s = shape;
                    if block.expansion != 1 {
                        let n = conv_node(
                            format!("{tag}.expand"),
                            s,
                            s.c * block.expansion,
                            1,
                            0,
                            1,
                            false,
                            bits,
                            seg,
                        )?;
                        s = n.output;
                        cur = vec![b.push(n, &cur)];
                    }
                    let n = conv_node(
                        format!("{tag}.dw"),
                        s,
                        s.c,
                        block.kernel,
                        block.padding,
                        stride,
                        true,
                        bits,
                        seg,
                    )?;
                    s = n.output;
                    cur = vec![b.push(n, &cur)];
                    let n = conv_node(
                        format!("{tag}.project"),
                        s,
                        block.channels,
                        1,
                        0,
                        1,
                        false,
                        bits,
                        seg,
                    )?;
                    s = n.output;
                    let mut last = b.push(n, &cur);
                    if stride == 1 && block_in == s {
                        let mut srcs: Vec<usize> = block_src.into_iter().collect();
                        srcs.push(last);
                        last = b.push(
                            LayerNode {
                                name: format!("{tag}.add"),
                                kind: LayerKind::ElementwiseAdd,
                                input: s,
                                output: s,
                                kernel: 1,
                                macs: 0,
                                params: 0,
                                bits,
                                segment: seg,
                            },
                            &srcs,
                        );
                    }
                    shape = s;
                    prev = Some(last);
                }
            }
            unit_tails.push(prev.expect("every unit emits a node"));
            unit += 1;
        }
    }
    Ok(unit_tails)
}

/// Cumulative backbone MACs at every mount (no heads).
pub fn backbone_mount_macs(backbone: &BackboneSpec) -> Result<Vec<u64>, ArchError> {
    let mut b = Builder {
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    expand_backbone(backbone, 8, &mut b)?;
    let mut out = Vec::with_capacity(backbone.mounts.len());
    let mut acc = 0u64;
    let mut next = 0usize;
    for (s, _) in backbone.mounts.iter().enumerate() {
        while next < b.nodes.len() && matches!(b.nodes[next].segment, Segment::Backbone(x) if x <= s) {
            acc += b.nodes[next].macs;
            next += 1;
        }
        out.push(acc);
    }
    Ok(out)
}

fn head_nodes(
    arch: &EennArchitecture,
    exit: usize,
    attach: usize,
    b: &mut Builder,
) -> Result<Vec<usize>, ArchError> {
    let cfg = &arch.exits[exit];
    let head = cfg.head;
    let bits = arch.quant.exit_bits[exit];
    let seg = Segment::Exit(exit);
    let src = b.nodes[attach].output;
    let (ph, pw) = head.pooled;
    let label = &arch.backbone.mounts[cfg.mount].label;
    if src.h < ph || src.w < pw || src.h % ph != 0 || src.w % pw != 0 {
        return Err(ArchError::ShapeMismatch(format!(
            "exit at {label}: cannot pool {}x{} down to {ph}x{pw}",
            src.h, src.w
        )));
    }
    let pooled = Shape::new(ph, pw, src.c);
    let mut ids = Vec::new();
    let pool = b.push(
        LayerNode {
            name: format!("exit{exit}.pool"),
            kind: LayerKind::Pool,
            input: src,
            output: pooled,
            kernel: src.h / ph,
            macs: 0,
            params: 0,
            bits,
            segment: seg,
        },
        &[attach],
    );
    ids.push(pool);
    let classes = arch.backbone.classes;
    let mut features = pooled.elements() as u32;
    let widths: Vec<u32> = if head.linear_layers == 2 {
        vec![head.hidden, classes]
    } else {
        vec![classes]
    };
    let mut prev = pool;
    for (j, &out) in widths.iter().enumerate() {
        let n = LayerNode {
            name: format!("exit{exit}.fc{j}"),
            kind: LayerKind::Linear,
            input: Shape::new(1, 1, features),
            output: Shape::new(1, 1, out),
            kernel: 1,
            macs: features as u64 * out as u64,
            params: features as u64 * out as u64 + out as u64,
            bits,
            segment: seg,
        };
        prev = b.push(n, &[prev]);
        ids.push(prev);
        features = out;
    }
    let sm = b.push(
        LayerNode {
            name: format!("exit{exit}.softmax"),
            kind: LayerKind::Softmax,
            input: Shape::new(1, 1, classes),
            output: Shape::new(1, 1, classes),
            kernel: 1,
            macs: 0,
            params: 0,
            bits,
            segment: seg,
        },
        &[prev],
    );
    ids.push(sm);
    Ok(ids)
}

/// Expand an architecture into its layer graph. Pure: equal inputs give
/// identical graphs, node order included.
pub fn expand_layers(arch: &EennArchitecture) -> Result<LayerGraph, ArchError> {
    arch.validate()?;
    let backbone = &arch.backbone;
    let mut b = Builder {
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    let tails = expand_backbone(backbone, arch.quant.backbone_bits, &mut b)?;

    // Re-emit in execution order with heads spliced in after their mounts.
    let backbone_nodes = std::mem::take(&mut b.nodes);
    let backbone_edges = std::mem::take(&mut b.edges);
    let mut remap = vec![usize::MAX; backbone_nodes.len()];
    let mut exits = Vec::with_capacity(arch.exits.len());
    let mut next_exit = 0usize;
    for (old, node) in backbone_nodes.into_iter().enumerate() {
        let preds: Vec<usize> = backbone_edges
            .iter()
            .filter(|(_, c)| *c == old)
            .map(|(p, _)| remap[*p])
            .collect();
        remap[old] = b.push(node, &preds);
        while next_exit < arch.exits.len()
            && tails[backbone.mounts[arch.exits[next_exit].mount].unit] == old
        {
            let attach = remap[old];
            let nodes = head_nodes(arch, next_exit, attach, &mut b)?;
            exits.push(ExitSite {
                label: backbone.mounts[arch.exits[next_exit].mount].label.clone(),
                mount: arch.exits[next_exit].mount,
                attach,
                nodes,
            });
            next_exit += 1;
        }
    }
    debug_assert_eq!(exits.len(), arch.exits.len());
    Ok(LayerGraph {
        nodes: b.nodes,
        edges: b.edges,
        exits,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::arch::{ExitConfig, ExitHeadSpec, QuantScheme};

    fn arch_with(backbone: BackboneSpec, labels: &[&str]) -> EennArchitecture {
        let exits = labels
            .iter()
            .map(|l| ExitConfig {
                mount: backbone.mount_index(l).unwrap(),
                head: ExitHeadSpec::single(),
            })
            .collect::<Vec<_>>();
        let n = exits.len();
        EennArchitecture::new(
            Arc::new(backbone),
            exits,
            QuantScheme {
                backbone_bits: 8,
                exit_bits: vec![8; n],
                clips: BTreeMap::new(),
            },
        )
        .unwrap()
    }

    #[test]
    fn stem_conv_macs() {
        let g = expand_layers(&arch_with(BackboneSpec::mobilenetv2_table3(), &["K"])).unwrap();
        let stem = &g.nodes[0];
        assert_eq!(stem.kind, LayerKind::Conv);
        assert_eq!(stem.output, Shape::new(32, 32, 32));
        assert_eq!(stem.macs, 884_736);
    }

    #[test]
    fn single_exit_graph_has_backbone_and_final_head_only() {
        let g = expand_layers(&arch_with(BackboneSpec::mobilenetv2_table3(), &["K"])).unwrap();
        assert_eq!(g.exits.len(), 1);
        let heads = g
            .nodes
            .iter()
            .filter(|n| matches!(n.segment, Segment::Exit(_)))
            .count();
        // pool + one linear + softmax
        assert_eq!(heads, 3);
        assert_eq!(cumulative_macs(&g, 0).unwrap(), g.total_macs());
        assert!(g.is_topologically_ordered());
    }

    #[test]
    fn heads_only_depend_on_earlier_backbone() {
        let g = expand_layers(&arch_with(
            BackboneSpec::mobilenetv2_table3(),
            &["A", "D", "F", "I", "K"],
        ))
        .unwrap();
        for (e, site) in g.exits.iter().enumerate() {
            for &n in &site.nodes {
                for p in g.predecessors(n) {
                    match g.nodes[p].segment {
                        Segment::Backbone(s) => assert!(s <= site.mount),
                        Segment::Exit(x) => assert_eq!(x, e),
                    }
                }
            }
        }
        for i in 0..g.exit_count() - 1 {
            assert!(cumulative_macs(&g, i).unwrap() < cumulative_macs(&g, i + 1).unwrap());
        }
    }

    #[test]
    fn residual_adds_only_where_shapes_match() {
        let g = expand_layers(&arch_with(BackboneSpec::mobilenetv2_table3(), &["K"])).unwrap();
        let adds: Vec<&str> = g
            .nodes
            .iter()
            .filter(|n| n.kind == LayerKind::ElementwiseAdd)
            .map(|n| n.name.as_str())
            .collect();
        // second block of every two-block row
        assert_eq!(adds, vec!["b2.1.add", "b3.1.add", "b4.1.add", "b5.1.add", "b6.1.add"]);
        for (i, n) in g.nodes.iter().enumerate() {
            if n.kind == LayerKind::ElementwiseAdd {
                assert_eq!(g.predecessors(i).len(), 2);
            }
        }
    }

    #[test]
    fn unknown_pooling_rejected() {
        let bb: BackboneSpec = "input 6 6 3\nkernel 3\npadding 1\nconv2d 1 A 8 1\nconv2d 1 K 8 1\n"
            .parse()
            .unwrap();
        let arch = arch_with(bb, &["A", "K"]);
        assert!(matches!(expand_layers(&arch), Err(ArchError::ShapeMismatch(_))));
    }

    #[test]
    fn out_of_range_exit() {
        let g = expand_layers(&arch_with(BackboneSpec::mobilenetv2_table3(), &["K"])).unwrap();
        assert!(matches!(
            cumulative_macs(&g, 1),
            Err(ArchError::ExitOutOfRange { exit: 1, exits: 1 })
        ));
    }

    #[test]
    fn mount_macs_are_cumulative() {
        let cum = backbone_mount_macs(&BackboneSpec::mobilenetv2_table3_rederived()).unwrap();
        // Published cumulative MACs minus the 4x4 pooled linear head.
        assert_eq!(cum[3] + 4 * 4 * 32 * 10, 24_515_584);
        assert_eq!(cum[5] + 4 * 4 * 64 * 10, 48_752_640);
        assert!(cum.windows(2).all(|w| w[0] < w[1]));
    }
}
