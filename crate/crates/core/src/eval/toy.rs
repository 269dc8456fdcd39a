//! Desk-scale quantization-aware trainer for early-exit networks.
//!
//! The toy backbone is an ordinary [`BackboneSpec`] whose rows are `conv2d`
//! with 1x1 kernels applied to a 1x1 spatial input, i.e. fully connected
//! layers. Exit heads are the usual one- or two-layer classifiers with
//! pooling to 1x1. All exits are trained jointly on the scalarized loss with
//! fake-quantized weights and activations and straight-through gradients.
//! Clip values are calibrated per layer after the warm-up epochs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{exit_decision_per_exit, EvalError, EvaluationReport, Evaluator};
use crate::arch::{BackboneSpec, Chromosome, EennArchitecture, OperatorKind, FULL_PRECISION_BITS};
use crate::quant::{calibrate_clip, percentile_candidates, QuantParams, Rounding, CALIBRATION_PERCENTILES};

/// Labeled feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

fn gaussian_clusters(n: usize, centers: &[Vec<f64>], noise: impl Fn(&mut ChaCha8Rng) -> f64, rng: &mut ChaCha8Rng) -> Dataset {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let classes = centers.len();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % classes;
        let sigma = noise(rng);
        let x = centers[y]
            .iter()
            .map(|c| c + sigma * std.sample(rng))
            .collect();
        features.push(x);
        labels.push(y);
    }
    Dataset {
        features,
        labels,
        classes,
    }
}

/// Three classes in eight dimensions; 60% of samples sit close to their
/// class centre, the rest are noisy and overlap.
pub fn toy_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let v: Vec<f64> = (0..8).map(|_| std.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| 2.5 * x / norm).collect()
        })
        .collect();
    gaussian_clusters(
        n,
        &centers,
        |r| if r.random_bool(0.6) { 0.6 } else { 1.8 },
        &mut rng,
    )
}

/// Two well-separated Gaussian blobs in `dim` dimensions.
pub fn blobs_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..dim).map(|j| if j < 2 { 1.5 } else { 0.0 }).collect();
    let b: Vec<f64> = a.iter().map(|x| -x).collect();
    gaussian_clusters(n, &[a, b], |_| 0.5, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Shared confidence threshold.
    pub tau: f64,
    /// Per-exit thresholds overriding `tau` when set.
    pub exit_taus: Option<Vec<f64>>,
    /// Loss preference per exit; empty means all ones.
    pub lambdas: Vec<f64>,
    pub seed: u64,
    /// Full-precision epochs before clip calibration.
    pub warmup_epochs: usize,
    pub rounding: Rounding,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            tau: 0.9,
            exit_taus: None,
            lambdas: Vec::new(),
            seed: 0,
            warmup_epochs: 1,
            rounding: Rounding::Floor,
        }
    }
}

impl TrainingConfig {
    fn validate(&self, exits: usize) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidValue(m));
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return bad("learning rate > 0, momentum in [0, 1), weight decay >= 0 required".into());
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau {} outside (0, 1)", self.tau));
        }
        if let Some(t) = &self.exit_taus {
            if t.len() != exits {
                return Err(EvalError::LengthMismatch(format!("{} thresholds for {exits} exits", t.len())));
            }
        }
        if !self.lambdas.is_empty() && self.lambdas.len() != exits {
            return Err(EvalError::LengthMismatch(format!(
                "{} preference weights for {exits} exits",
                self.lambdas.len()
            )));
        }
        if self.lambdas.iter().any(|&l| !(l > 0.0)) {
            return bad("preference weights must be positive".into());
        }
        Ok(())
    }

    fn lambdas_for(&self, exits: usize) -> Vec<f64> {
        if self.lambdas.is_empty() {
            vec![1.0; exits]
        } else {
            self.lambdas.clone()
        }
    }

    fn taus_for(&self, exits: usize) -> Vec<f64> {
        self.exit_taus.clone().unwrap_or_else(|| vec![self.tau; exits])
    }
}

#[derive(Debug, Clone)]
struct Dense {
    w: usize,
    b: usize,
    inputs: usize,
    outputs: usize,
    bits: u8,
}

#[derive(Debug, Clone)]
struct ToyExit {
    after_unit: usize,
    layers: Vec<usize>,
}

/// Fully connected early-exit network with fake quantization.
#[derive(Debug, Clone)]
pub struct ToyNet {
    params: Vec<f64>,
    layers: Vec<Dense>,
    backbone: Vec<usize>,
    exits: Vec<ToyExit>,
    weight_q: Vec<Option<QuantParams>>,
    act_q: Vec<Option<QuantParams>>,
}

fn relu6(z: f64) -> f64 {
    z.clamp(0.0, 6.0)
}

fn relu6_grad(z: f64) -> f64 {
    if z > 0.0 && z < 6.0 {
        1.0
    } else {
        0.0
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Cached activations of one forward pass.
struct Trace {
    /// Per backbone unit: input, pre-activation, post-activation (before quantization).
    backbone: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    /// Per exit, per head layer: input, pre-activation, post-activation.
    heads: Vec<Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>>,
    probs: Vec<Vec<f64>>,
}

fn check_backbone(bb: &BackboneSpec) -> Result<(), EvalError> {
    if bb.input.h != 1 || bb.input.w != 1 {
        return Err(EvalError::IncompatibleBackbone(format!(
            "input must be 1x1 spatially, got {}",
            bb.input
        )));
    }
    for (i, b) in bb.blocks.iter().enumerate() {
        if b.op != OperatorKind::Conv2d || b.kernel != 1 || b.padding != 0 {
            return Err(EvalError::IncompatibleBackbone(format!(
                "row {i} must be a 1x1 conv2d without padding"
            )));
        }
    }
    Ok(())
}

impl ToyNet {
    pub fn new(arch: &EennArchitecture, seed: u64) -> Result<Self, EvalError> {
        arch.validate()?;
        let bb = &arch.backbone;
        check_backbone(bb)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut layers = Vec::new();
        let mut add = |inputs: usize, outputs: usize, bits: u8, rng: &mut ChaCha8Rng| {
            let limit = (6.0 / (inputs + outputs) as f64).sqrt();
            let w = params.len();
            params.extend((0..inputs * outputs).map(|_| rng.random_range(-limit..limit)));
            let b = params.len();
            params.extend(std::iter::repeat_n(0.0, outputs));
            layers.push(Dense {
                w,
                b,
                inputs,
                outputs,
                bits,
            });
            layers.len() - 1
        };
        let mut backbone = Vec::new();
        let mut width = bb.input.c as usize;
        let mut unit_width = Vec::new();
        for (_, block) in bb.units().into_iter().map(|(r, rep)| (rep, &bb.blocks[r])) {
            let out = block.channels as usize;
            backbone.push(add(width, out, arch.quant.backbone_bits, &mut rng));
            width = out;
            unit_width.push(out);
        }
        let classes = bb.classes as usize;
        let mut exits = Vec::new();
        for (i, e) in arch.exits.iter().enumerate() {
            if e.head.pooled != (1, 1) {
                return Err(EvalError::IncompatibleBackbone(
                    "toy exit heads must pool to 1x1".into(),
                ));
            }
            let after_unit = bb.mounts[e.mount].unit;
            let bits = arch.quant.exit_bits[i];
            let mut w = unit_width[after_unit];
            let mut ls = Vec::new();
            if e.head.linear_layers == 2 {
                ls.push(add(w, e.head.hidden as usize, bits, &mut rng));
                w = e.head.hidden as usize;
            }
            ls.push(add(w, classes, bits, &mut rng));
            exits.push(ToyExit { after_unit, layers: ls });
        }
        let n = layers.len();
        Ok(Self {
            params,
            layers,
            backbone,
            exits,
            weight_q: vec![None; n],
            act_q: vec![None; n],
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn exit_count(&self) -> usize {
        self.exits.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[self.backbone[0]].inputs
    }

    pub fn is_calibrated(&self) -> bool {
        self.weight_q.iter().any(Option::is_some)
    }

    /// Drop all quantizers; the network then runs in full precision.
    pub fn clear_quantization(&mut self) {
        self.weight_q.iter_mut().for_each(|q| *q = None);
        self.act_q.iter_mut().for_each(|q| *q = None);
    }

    fn effective_weights(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .zip(&self.weight_q)
            .map(|(l, q)| {
                let w = &self.params[l.w..l.w + l.inputs * l.outputs];
                match q {
                    Some(q) => w.iter().map(|&x| q.quantize(x)).collect(),
                    None => w.to_vec(),
                }
            })
            .collect()
    }

    fn affine(&self, layer: usize, weights: &[f64], x: &[f64]) -> Vec<f64> {
        let l = &self.layers[layer];
        let bias = &self.params[l.b..l.b + l.outputs];
        (0..l.outputs)
            .map(|o| {
                let row = &weights[o * l.inputs..(o + 1) * l.inputs];
                bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    fn act(&self, layer: usize, h: &[f64]) -> Vec<f64> {
        match &self.act_q[layer] {
            Some(q) => h.iter().map(|&v| q.quantize(v)).collect(),
            None => h.to_vec(),
        }
    }

    fn trace(&self, weights: &[Vec<f64>], x: &[f64]) -> Trace {
        let mut backbone = Vec::with_capacity(self.backbone.len());
        let mut outputs = Vec::with_capacity(self.backbone.len());
        let mut a = x.to_vec();
        for &li in &self.backbone {
            let z = self.affine(li, &weights[li], &a);
            let h: Vec<f64> = z.iter().map(|&v| relu6(v)).collect();
            let next = self.act(li, &h);
            backbone.push((a, z, h));
            outputs.push(next.clone());
            a = next;
        }
        let mut heads = Vec::with_capacity(self.exits.len());
        let mut probs = Vec::with_capacity(self.exits.len());
        for e in &self.exits {
            let mut a = outputs[e.after_unit].clone();
            let mut cache = Vec::with_capacity(e.layers.len());
            for (j, &li) in e.layers.iter().enumerate() {
                let z = self.affine(li, &weights[li], &a);
                if j + 1 == e.layers.len() {
                    probs.push(softmax(&z));
                    cache.push((a, z, Vec::new()));
                    break;
                }
                let h: Vec<f64> = z.iter().map(|&v| relu6(v)).collect();
                let next = self.act(li, &h);
                cache.push((a, z, h));
                a = next;
            }
            heads.push(cache);
        }
        Trace {
            backbone,
            heads,
            probs,
        }
    }

    /// Class probabilities at every exit.
    pub fn predict(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let w = self.effective_weights();
        self.trace(&w, x).probs
    }

    /// Mean cross-entropy of each exit over the batch.
    pub fn exit_losses(&self, xs: &[&[f64]], ys: &[usize]) -> Vec<f64> {
        let w = self.effective_weights();
        let mut losses = vec![0.0; self.exits.len()];
        for (x, &y) in xs.iter().zip(ys) {
            let t = self.trace(&w, x);
            for (l, p) in losses.iter_mut().zip(&t.probs) {
                *l -= p[y].max(1e-300).ln();
            }
        }
        let n = xs.len().max(1) as f64;
        losses.into_iter().map(|l| l / n).collect()
    }

    /// Scalarized loss `sum_i lambda_i L_i` and its gradient with respect to
    /// every parameter (straight-through through the quantizers).
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[usize], lambdas: &[f64]) -> (f64, Vec<f64>) {
        let w = self.effective_weights();
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        let n = xs.len().max(1) as f64;
        for (x, &y) in xs.iter().zip(ys) {
            let t = self.trace(&w, x);
            let mut d_unit: Vec<Vec<f64>> = self
                .backbone
                .iter()
                .map(|&li| vec![0.0; self.layers[li].outputs])
                .collect();
            for (e, exit) in self.exits.iter().enumerate() {
                let p = &t.probs[e];
                total += lambdas[e] * -p[y].max(1e-300).ln() / n;
                // d(lambda * CE)/dz = lambda * (p - onehot) / n
                let mut g: Vec<f64> = p
                    .iter()
                    .enumerate()
                    .map(|(c, &pc)| lambdas[e] * (pc - if c == y { 1.0 } else { 0.0 }) / n)
                    .collect();
                for (j, &li) in exit.layers.iter().enumerate().rev() {
                    let (input, z, h) = &t.heads[e][j];
                    if j + 1 != exit.layers.len() {
                        g = self.act_backward(li, h, &g);
                        for (gv, &zv) in g.iter_mut().zip(z) {
                            *gv *= relu6_grad(zv);
                        }
                    }
                    g = self.dense_backward(li, &w[li], input, &g, &mut grad);
                }
                for (d, gv) in d_unit[exit.after_unit].iter_mut().zip(&g) {
                    *d += gv;
                }
            }
            for k in (0..self.backbone.len()).rev() {
                let li = self.backbone[k];
                let (input, z, h) = &t.backbone[k];
                let mut g = self.act_backward(li, h, &d_unit[k]);
                for (gv, &zv) in g.iter_mut().zip(z) {
                    *gv *= relu6_grad(zv);
                }
                let g_in = self.dense_backward(li, &w[li], input, &g, &mut grad);
                if k > 0 {
                    for (d, gv) in d_unit[k - 1].iter_mut().zip(&g_in) {
                        *d += gv;
                    }
                }
            }
        }
        (total, grad)
    }

    fn act_backward(&self, layer: usize, h: &[f64], g: &[f64]) -> Vec<f64> {
        match &self.act_q[layer] {
            Some(q) => crate::quant::fake_quant_backward(h, g, q),
            None => g.to_vec(),
        }
    }

    /// Accumulate weight and bias gradients; returns the gradient at the input.
    fn dense_backward(&self, layer: usize, weights: &[f64], input: &[f64], g: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let l = &self.layers[layer];
        let mut g_in = vec![0.0; l.inputs];
        for o in 0..l.outputs {
            let go = g[o];
            if go == 0.0 {
                continue;
            }
            grad[l.b + o] += go;
            let row = o * l.inputs;
            for i in 0..l.inputs {
                let mut gw = go * input[i];
                if let Some(q) = &self.weight_q[layer] {
                    if self.params[l.w + row + i].abs() > q.clip {
                        gw = 0.0;
                    }
                }
                grad[l.w + row + i] += gw;
                g_in[i] += go * weights[row + i];
            }
        }
        g_in
    }

    /// Set per-layer clip values by KL calibration on `xs`, for every layer
    /// whose precision is below 32 bits.
    pub fn calibrate(&mut self, xs: &[&[f64]], rounding: Rounding) -> Result<(), EvalError> {
        self.clear_quantization();
        // Activation statistics in full precision.
        let w = self.effective_weights();
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        for x in xs {
            let t = self.trace(&w, x);
            for (k, &li) in self.backbone.iter().enumerate() {
                acts[li].extend_from_slice(&t.backbone[k].2);
            }
            for (e, exit) in self.exits.iter().enumerate() {
                for (j, &li) in exit.layers.iter().enumerate() {
                    acts[li].extend_from_slice(&t.heads[e][j].2);
                }
            }
        }
        for li in 0..self.layers.len() {
            let l = &self.layers[li];
            if l.bits >= FULL_PRECISION_BITS {
                continue;
            }
            let weights = &self.params[l.w..l.w + l.inputs * l.outputs];
            self.weight_q[li] = calibrated(weights, l.bits, rounding)?;
            if !acts[li].is_empty() {
                self.act_q[li] = calibrated(&acts[li], l.bits, rounding)?;
            }
        }
        Ok(())
    }

    /// Early-exit evaluation on a labeled set.
    pub fn evaluate(&self, xs: &[&[f64]], ys: &[usize], taus: &[f64]) -> Result<EvaluationReport, EvalError> {
        let m = self.exits.len();
        let mut counts = vec![0u64; m];
        let mut correct = vec![0u64; m];
        let w = self.effective_weights();
        for (x, &y) in xs.iter().zip(ys) {
            let probs = self.trace(&w, x).probs;
            let conf: Vec<f64> = probs.iter().map(|p| p.iter().copied().fold(0.0, f64::max)).collect();
            let e = exit_decision_per_exit(&conf, taus)?;
            counts[e] += 1;
            let pred = argmax(&probs[e]);
            if pred == y {
                correct[e] += 1;
            }
        }
        EvaluationReport::from_counts(None, taus[0], &counts, &correct)
    }

    /// Train on an 80/20 stratified split and report on the held-out part.
    pub fn train(
        arch: &EennArchitecture,
        data: &Dataset,
        config: &TrainingConfig,
    ) -> Result<(ToyNet, EvaluationReport), EvalError> {
        let mut net = ToyNet::new(arch, config.seed)?;
        let m = net.exit_count();
        config.validate(m)?;
        if data.dim() != net.input_dim() {
            return Err(EvalError::LengthMismatch(format!(
                "dataset has {} features, backbone expects {}",
                data.dim(),
                net.input_dim()
            )));
        }
        if data.classes != arch.backbone.classes as usize {
            return Err(EvalError::LengthMismatch(format!(
                "dataset has {} classes, backbone expects {}",
                data.classes, arch.backbone.classes
            )));
        }
        let (train, test) = stratified_split(data, config.seed)?;
        let lambdas = config.lambdas_for(m);
        let taus = config.taus_for(m);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
        let mut velocity = vec![0.0; net.params.len()];
        let mut order = train.clone();
        let quantized = arch.quant.backbone_bits < FULL_PRECISION_BITS
            || arch.quant.exit_bits.iter().any(|&b| b < FULL_PRECISION_BITS);
        let calib: Vec<&[f64]> = train
            .iter()
            .take(256)
            .map(|&i| data.features[i].as_slice())
            .collect();
        if quantized && config.warmup_epochs == 0 {
            net.calibrate(&calib, config.rounding)?;
        }
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(config.batch_size) {
                let xs: Vec<&[f64]> = batch.iter().map(|&i| data.features[i].as_slice()).collect();
                let ys: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
                let (loss, grad) = net.loss_and_grad(&xs, &ys, &lambdas);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(EvalError::Divergence { epoch });
                }
                for ((p, v), g) in net.params.iter_mut().zip(&mut velocity).zip(&grad) {
                    *v = config.momentum * *v + g + config.weight_decay * *p;
                    *p -= config.learning_rate * *v;
                }
            }
            if quantized && epoch + 1 == config.warmup_epochs {
                net.calibrate(&calib, config.rounding)?;
            }
        }
        let xs: Vec<&[f64]> = test.iter().map(|&i| data.features[i].as_slice()).collect();
        let ys: Vec<usize> = test.iter().map(|&i| data.labels[i]).collect();
        let mut report = net.evaluate(&xs, &ys, &taus)?;
        report.tau = config.tau;
        Ok((net, report))
    }
}

fn calibrated(values: &[f64], bits: u8, rounding: Rounding) -> Result<Option<QuantParams>, EvalError> {
    let cands = percentile_candidates(values, &CALIBRATION_PERCENTILES);
    if cands.is_empty() {
        return Ok(None);
    }
    let cal = calibrate_clip(values, bits, &cands)?;
    Ok(Some(QuantParams::new(cal.clip, bits)?.with_rounding(rounding)))
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// 80/20 split, stratified by label. Returns (train, test) indices.
fn stratified_split(data: &Dataset, seed: u64) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if data.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a11);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.classes];
    for (i, &y) in data.labels.iter().enumerate() {
        by_class
            .get_mut(y)
            .ok_or_else(|| EvalError::InvalidValue(format!("label {y} >= class count {}", data.classes)))?
            .push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 5 {
            return Err(EvalError::DatasetTooSmall(format!(
                "class {c} has {} samples; at least 5 are needed for an 80/20 split",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * 0.2).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Train an architecture and report on its held-out split.
pub fn train_toy(
    arch: &EennArchitecture,
    data: &Dataset,
    config: &TrainingConfig,
) -> Result<EvaluationReport, EvalError> {
    ToyNet::train(arch, data, config).map(|(_, r)| r)
}

/// Evaluator that trains each architecture on a fixed dataset.
#[derive(Debug, Clone)]
pub struct ToyEvaluator {
    pub data: Dataset,
    pub config: TrainingConfig,
}

impl Evaluator for ToyEvaluator {
    fn name(&self) -> &str {
        "toy"
    }

    fn evaluate(&self, chrom: &Chromosome, arch: &EennArchitecture) -> Result<EvaluationReport, EvalError> {
        Ok(train_toy(arch, &self.data, &self.config)?.with_hash(chrom.hash()))
    }
}
