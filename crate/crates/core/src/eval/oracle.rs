//! Deterministic closed-form stand-in for training an architecture.
//!
//! Samples carry a difficulty `x >= 0` drawn from a mixture of uniform
//! components. For exit `i` let `f_i` be the fraction of backbone MACs
//! executed before its mount, `d_i` its linear-layer count and `b_i` its bit
//! width (`B` for the backbone). With `pen(b) = kappa * 2^(4-b)` (zero for
//! 32 bits):
//!
//! - reach `r_i = clamp(f_i^gamma * (1 + eta*(d_i-1)) - 0.01*(pen(b_i)+pen(B)), 0, 1)`,
//!   made monotone by a running max `R_i`;
//! - exit ratio `ER_i = F(R_i) - F(R_{i-1})` for intermediate exits, the
//!   remainder for the last, with `F` the mixture CDF;
//! - accuracy `ACC_i = A - alpha * xbar_i * (1 + beta*(1-f_i)) + h*(d_i-1)
//!   - pen(b_i) - pen(B) + j_i`, clamped to `[0, 100]`, where `xbar_i` is the
//!   mean difficulty of the slice leaving at `i` and `j_i` is a bounded
//!   per-exit jitter derived from the seed and the exit's own genes
//!   (intermediate exits only).
//!
//! The final exit's accuracy grows with its head depth and nothing else about
//! the final head influences the report.

use serde::{Deserialize, Serialize};

use super::{EvalError, EvaluationReport, Evaluator};
use crate::arch::{backbone_mount_macs, Chromosome, EennArchitecture, FULL_PRECISION_BITS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyComponent {
    pub weight: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub tau: f64,
    pub mixture: Vec<DifficultyComponent>,
    pub gamma: f64,
    pub eta: f64,
    pub ceiling: f64,
    pub alpha: f64,
    pub beta: f64,
    pub head_bonus: f64,
    pub kappa: f64,
    pub jitter: f64,
    /// Nominal dataset size used to fill sample counts.
    pub nominal_samples: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            tau: 0.9,
            mixture: vec![
                DifficultyComponent {
                    weight: 0.55,
                    lo: 0.0,
                    hi: 0.7,
                },
                DifficultyComponent {
                    weight: 0.45,
                    lo: 0.3,
                    hi: 1.4,
                },
            ],
            gamma: 0.5,
            eta: 0.15,
            ceiling: 100.0,
            alpha: 25.0,
            beta: 1.0,
            head_bonus: 1.5,
            kappa: 4.0,
            jitter: 0.5,
            nominal_samples: 10_000,
        }
    }
}

impl OracleConfig {
    fn total_weight(&self) -> f64 {
        self.mixture.iter().map(|c| c.weight).sum()
    }

    /// Mixture CDF.
    fn cdf(&self, x: f64) -> f64 {
        let w = self.total_weight();
        self.mixture
            .iter()
            .map(|c| c.weight * ((x - c.lo) / (c.hi - c.lo)).clamp(0.0, 1.0))
            .sum::<f64>()
            / w
    }

    /// `E[X; X <= x]`, the partial first moment.
    fn partial_moment(&self, x: f64) -> f64 {
        let w = self.total_weight();
        self.mixture
            .iter()
            .map(|c| {
                let top = x.clamp(c.lo, c.hi);
                c.weight * (top * top - c.lo * c.lo) / (2.0 * (c.hi - c.lo))
            })
            .sum::<f64>()
            / w
    }

    fn upper(&self) -> f64 {
        self.mixture.iter().map(|c| c.hi).fold(0.0, f64::max)
    }

    fn slice_mean(&self, a: f64, b: f64) -> f64 {
        let mass = self.cdf(b) - self.cdf(a);
        if mass <= 0.0 {
            return 0.5 * (a + b);
        }
        (self.partial_moment(b) - self.partial_moment(a)) / mass
    }

    fn penalty(&self, bits: u8) -> f64 {
        if bits >= FULL_PRECISION_BITS {
            0.0
        } else {
            self.kappa * 2f64.powi(4 - bits as i32)
        }
    }

    fn validate(&self) -> Result<(), EvalError> {
        if self.mixture.is_empty()
            || self
                .mixture
                .iter()
                .any(|c| !(c.weight > 0.0 && c.hi > c.lo && c.lo >= 0.0))
        {
            return Err(EvalError::InvalidValue(
                "oracle mixture needs positive weights and lo < hi".into(),
            ));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(EvalError::InvalidValue(format!("tau {} outside (0, 1]", self.tau)));
        }
        Ok(())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in [-1, 1) from the seed and an exit's own configuration.
fn jitter_unit(seed: u64, mount: usize, depth: u8, bits: u8) -> f64 {
    let key = splitmix(seed ^ splitmix(((mount as u64) << 16) | ((depth as u64) << 8) | bits as u64));
    (key >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Closed-form report for `arch`; identical inputs always give identical
/// reports.
pub fn synthetic_oracle(
    arch: &EennArchitecture,
    config: &OracleConfig,
    seed: u64,
) -> Result<EvaluationReport, EvalError> {
    arch.validate()?;
    config.validate()?;
    let cum = backbone_mount_macs(&arch.backbone)?;
    let total = *cum.last().expect("backbone has a final mount") as f64;
    let m = arch.exit_count();
    let backbone_pen = config.penalty(arch.quant.backbone_bits);

    let mut reach_prev = 0.0f64;
    let mut exit_ratios = Vec::with_capacity(m);
    let mut accuracy = Vec::with_capacity(m);
    for (i, exit) in arch.exits.iter().enumerate() {
        let f = cum[exit.mount] as f64 / total;
        let depth = exit.head.linear_layers;
        let bits = arch.quant.exit_bits[i];
        let pen = config.penalty(bits) + backbone_pen;
        let last = i + 1 == m;
        let (lo, hi) = if last {
            (reach_prev, config.upper().max(reach_prev))
        } else {
            let r = (f.powf(config.gamma) * (1.0 + config.eta * (depth as f64 - 1.0)) - 0.01 * pen)
                .clamp(0.0, 1.0);
            (reach_prev, reach_prev.max(r))
        };
        let er = if last {
            1.0 - config.cdf(lo)
        } else {
            config.cdf(hi) - config.cdf(lo)
        };
        reach_prev = hi;
        if er <= 0.0 {
            exit_ratios.push(0.0);
            accuracy.push(None);
            continue;
        }
        let xbar = config.slice_mean(lo, hi);
        let jitter = if last {
            0.0
        } else {
            config.jitter * jitter_unit(seed, exit.mount, depth, bits)
        };
        let acc = config.ceiling - config.alpha * xbar * (1.0 + config.beta * (1.0 - f))
            + config.head_bonus * (depth as f64 - 1.0)
            - pen
            + jitter;
        exit_ratios.push(er);
        accuracy.push(Some(acc.clamp(0.0, 100.0)));
    }
    // Absorb rounding so the ratios sum to one.
    let drift: f64 = 1.0 - exit_ratios.iter().sum::<f64>();
    *exit_ratios.last_mut().expect("m >= 1") += drift;
    let counts = exit_ratios
        .iter()
        .map(|r| (r * config.nominal_samples as f64).round() as u64)
        .collect();
    EvaluationReport::from_parts(None, config.tau, accuracy, exit_ratios, counts)
}

#[derive(Debug, Clone, Default)]
pub struct OracleEvaluator {
    pub config: OracleConfig,
    pub seed: u64,
}

impl Evaluator for OracleEvaluator {
    fn name(&self) -> &str {
        "oracle"
    }

    fn evaluate(
        &self,
        chrom: &Chromosome,
        arch: &EennArchitecture,
    ) -> Result<EvaluationReport, EvalError> {
        Ok(synthetic_oracle(arch, &self.config, self.seed)?.with_hash(chrom.hash()))
    }
}
