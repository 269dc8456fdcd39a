#![allow(dead_code)]

use std::sync::Arc;

use eenas_core::arch::{
    BackboneSpec, Chromosome, ExitSite, LayerGraph, LayerKind, LayerNode, SearchSpace, Segment, Shape,
};
use rand::Rng;

/// MobileNetV2-style backbone with four optional mounts (B, D, F, H).
pub const FOUR_MOUNT_BACKBONE: &str = "\
input 32 32 3
classes 10
kernel 3
padding 1
expansion 6
conv2d 1 - 32 1
bottleneck 1 - 16 1
bottleneck 2 -,B 24 1
bottleneck 2 -,D 32 1
bottleneck 2 -,F 64 2
bottleneck 2 -,H 96 1
bottleneck 2 - 160 2
bottleneck 1 K 320 1
";

pub fn table3_space() -> SearchSpace {
    SearchSpace::with_defaults(Arc::new(BackboneSpec::mobilenetv2_table3()))
}

pub fn four_mount_space() -> SearchSpace {
    SearchSpace::with_defaults(Arc::new(FOUR_MOUNT_BACKBONE.parse().unwrap()))
}

/// Every chromosome of a space, counted in mixed radix.
pub fn enumerate(space: &SearchSpace) -> Vec<Chromosome> {
    let (h, p, q) = (space.h(), space.p(), space.q());
    let per = 1 + p * q;
    let total = per.pow(h as u32) * p * q;
    (0..total)
        .map(|mut x| {
            let mut genes = Vec::with_capacity(3 * h + 2);
            for _ in 0..h {
                let g = x % per;
                x /= per;
                match g {
                    0 => genes.extend([0, 0, 0]),
                    g => genes.extend([1, ((g - 1) / q) as u8, ((g - 1) % q) as u8]),
                }
            }
            genes.extend([(x / q) as u8, (x % q) as u8]);
            Chromosome::from_genes(&genes).unwrap()
        })
        .collect()
}

/// Where a generated node sits, recorded independently of the graph's own
/// segment bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Backbone(usize),
    Head(usize),
}

pub fn linear(name: &str, cin: u32, cout: u32, hw: u32, bits: u8, segment: Segment) -> LayerNode {
    LayerNode {
        name: name.into(),
        kind: LayerKind::Linear,
        input: Shape::new(hw, hw, cin),
        output: Shape::new(hw, hw, cout),
        kernel: 1,
        macs: (hw * hw) as u64 * cin as u64 * cout as u64,
        params: cin as u64 * cout as u64 + cout as u64,
        bits,
        segment,
    }
}

fn aux(name: &str, kind: LayerKind, c: u32, hw: u32, bits: u8, segment: Segment) -> LayerNode {
    LayerNode {
        name: name.into(),
        kind,
        input: Shape::new(hw, hw, c),
        output: Shape::new(if kind == LayerKind::Pool { 1 } else { hw }, if kind == LayerKind::Pool { 1 } else { hw }, c),
        kernel: if kind == LayerKind::Pool { hw } else { 1 },
        macs: 0,
        params: 0,
        bits,
        segment,
    }
}

/// A random early-exit graph: a chain of backbone stages, each followed by
/// a pool/linear/softmax head attached to the stage's last layer.
pub fn random_graph<R: Rng>(rng: &mut R) -> (LayerGraph, Vec<Role>) {
    let exits = rng.random_range(1..=4);
    let mut nodes = Vec::new();
    let mut roles = Vec::new();
    let mut edges = Vec::new();
    let mut sites = Vec::new();
    let mut prev: Option<usize> = None;
    let mut width = rng.random_range(4..64);
    let hw = rng.random_range(1..=4);
    for s in 0..exits {
        for j in 0..rng.random_range(1..=3) {
            let out = rng.random_range(4..96);
            let bits = [4, 8, 32][rng.random_range(0..3)];
            nodes.push(linear(&format!("b{s}.{j}"), width, out, hw, bits, Segment::Backbone(s)));
            roles.push(Role::Backbone(s));
            if let Some(p) = prev {
                edges.push((p, nodes.len() - 1));
            }
            prev = Some(nodes.len() - 1);
            width = out;
        }
        let attach = prev.unwrap();
        let bits = [4, 8][rng.random_range(0..2)];
        let mut head = Vec::new();
        let pool = aux(&format!("e{s}.pool"), LayerKind::Pool, width, hw, bits, Segment::Exit(s));
        nodes.push(pool);
        roles.push(Role::Head(s));
        edges.push((attach, nodes.len() - 1));
        head.push(nodes.len() - 1);
        let classes = rng.random_range(2..12);
        nodes.push(linear(&format!("e{s}.fc"), width, classes, 1, bits, Segment::Exit(s)));
        roles.push(Role::Head(s));
        edges.push((nodes.len() - 2, nodes.len() - 1));
        head.push(nodes.len() - 1);
        nodes.push(aux(&format!("e{s}.softmax"), LayerKind::Softmax, classes, 1, bits, Segment::Exit(s)));
        roles.push(Role::Head(s));
        edges.push((nodes.len() - 2, nodes.len() - 1));
        head.push(nodes.len() - 1);
        sites.push(ExitSite {
            label: format!("X{s}"),
            mount: s,
            attach,
            nodes: head,
        });
    }
    (
        LayerGraph {
            nodes,
            edges,
            exits: sites,
        },
        roles,
    )
}

/// A chain of matrix layers with no exits beyond the implicit last one.
pub fn random_chain<R: Rng>(rng: &mut R, len: usize) -> LayerGraph {
    let mut nodes = Vec::new();
    let mut width = rng.random_range(8..256);
    let hw = rng.random_range(1..=8);
    for j in 0..len {
        let out = rng.random_range(8..256);
        nodes.push(linear(&format!("l{j}"), width, out, hw, 8, Segment::Backbone(0)));
        width = out;
    }
    let edges = (1..len).map(|j| (j - 1, j)).collect();
    LayerGraph {
        nodes,
        edges,
        exits: vec![ExitSite {
            label: "K".into(),
            mount: 0,
            attach: len - 1,
            nodes: vec![],
        }],
    }
}

/// Dense toy architecture with one exit per label, all at `bits`.
pub fn dense_arch(text: &str, labels: &[&str], linear_layers: u8, bits: u8) -> eenas_core::arch::EennArchitecture {
    use eenas_core::arch::{EennArchitecture, ExitConfig, ExitHeadSpec, QuantScheme};
    let bb: BackboneSpec = text.parse().unwrap();
    let head = match linear_layers {
        1 => ExitHeadSpec::single(),
        _ => ExitHeadSpec::double(4),
    }
    .with_pooled(1, 1);
    let exits: Vec<ExitConfig> = labels
        .iter()
        .map(|l| ExitConfig {
            mount: bb.mount_index(l).unwrap(),
            head,
        })
        .collect();
    let n = exits.len();
    EennArchitecture::new(
        Arc::new(bb),
        exits,
        QuantScheme {
            backbone_bits: bits,
            exit_bits: vec![bits; n],
            clips: Default::default(),
        },
    )
    .unwrap()
}

/// Largest componentwise relative gap between analytic and central
/// finite-difference gradients of the scalarized loss.
pub fn gradient_gap(net: &mut eenas_core::eval::ToyNet, xs: &[&[f64]], ys: &[usize], lambdas: &[f64], step: f64) -> f64 {
    let (_, grad) = net.loss_and_grad(xs, ys, lambdas);
    let mut worst = 0.0f64;
    for k in 0..net.param_count() {
        let orig = net.params()[k];
        net.params_mut()[k] = orig + step;
        let up = net.loss_and_grad(xs, ys, lambdas).0;
        net.params_mut()[k] = orig - step;
        let down = net.loss_and_grad(xs, ys, lambdas).0;
        net.params_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * step);
        let scale = grad[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((grad[k] - numeric).abs() / scale);
    }
    worst
}

/// Counts of quantizer property violations over a batch of random inputs.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct QuantViolations {
    pub off_grid: usize,
    pub non_monotone: usize,
    pub not_idempotent: usize,
    pub error_bound: usize,
    pub brute_force: usize,
}

impl QuantViolations {
    pub fn total(&self) -> usize {
        self.off_grid + self.non_monotone + self.not_idempotent + self.error_bound + self.brute_force
    }
}

/// Largest grid point not above `r`, found by scanning the whole grid.
/// Points within `band` below a grid value snap onto it.
pub fn brute_force_floor(r: f64, clip: f64, bits: u8, band: f64) -> f64 {
    let l = (1i64 << (bits - 1)) - 1;
    let s = clip / l as f64;
    let r = r.clamp(-clip, clip);
    let mut best = -clip;
    for k in -l..=l {
        let g = if k == l { clip } else if k == -l { -clip } else { k as f64 * s };
        if g <= r + band * s * (k.abs().max(1) as f64) && g > best {
            best = g;
        }
    }
    best
}

/// Grid membership, monotonicity, idempotence and the `< s` error bound on
/// `n` inputs drawn from `[-2c, 2c]`; with `brute` set, also agreement with
/// a full grid scan.
pub fn quant_violations(bits: u8, clip: f64, n: usize, seed: u64, brute: bool) -> QuantViolations {
    use eenas_core::quant::QuantParams;
    use rand::SeedableRng;
    let p = QuantParams::new(clip, bits).unwrap();
    let s = p.scale();
    let l = ((1i64 << (bits - 1)) - 1) as f64;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0 * clip..=2.0 * clip)).collect();
    // exact grid points and the clip edges are the interesting cases
    for k in -(l as i64)..=(l as i64) {
        xs.push(k as f64 * s);
    }
    xs.extend([clip, -clip, 0.0, -0.0]);
    let mut v = QuantViolations::default();
    let qs: Vec<f64> = xs.iter().map(|&x| p.quantize(x)).collect();
    for (&x, &q) in xs.iter().zip(&qs) {
        let k = (q / s).round();
        if (q - k * s).abs() > 1e-9 * s.max(q.abs()) || k.abs() > l {
            v.off_grid += 1;
        }
        if p.quantize(q) != q {
            v.not_idempotent += 1;
        }
        if x.abs() <= clip && (x - q).abs() >= s {
            v.error_bound += 1;
        }
        if brute && q != brute_force_floor(x, clip, bits, 1e-9) {
            v.brute_force += 1;
        }
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    for w in order.windows(2) {
        if xs[w[0]] < xs[w[1]] && qs[w[0]] > qs[w[1]] {
            v.non_monotone += 1;
        }
    }
    v
}

/// Indices not dominated by any other point, by direct pairwise comparison
/// under (maximize first, minimize second).
pub fn naive_front(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !(0..points.len()).any(|j| {
                let (a, b) = (points[j], points[i]);
                a.0 >= b.0 && a.1 <= b.1 && (a.0 > b.0 || a.1 < b.1)
            })
        })
        .collect()
}

/// Objective pairs on a coarse grid, so ties in either coordinate are common.
pub fn random_points<R: Rng>(rng: &mut R, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| (rng.random_range(0..200) as f64 / 2.0, rng.random_range(1..400) as f64 * 0.25))
        .collect()
}
