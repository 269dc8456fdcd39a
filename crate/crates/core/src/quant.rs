//! Symmetric linear quantization with a clip magnitude `c` and `b` bits.
//!
//! `Q(r) = floor(clamp(r, -c, c) / s) * s` with `s = c / (2^(b-1) - 1)`, so the
//! grid holds the `2^b - 1` multiples of `s` in `[-c, c]`. A bit width of 32
//! means unquantized.

use serde::{Deserialize, Serialize};

use crate::arch::FULL_PRECISION_BITS;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantError {
    #[error("clip magnitude must be finite and positive, got {0}")]
    InvalidClip(f64),
    #[error("bit width must be at least 2, got {0}")]
    InvalidBits(u8),
    #[error("calibration sample is empty")]
    EmptySample,
    #[error("no clip candidates given")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    Floor,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub clip: f64,
    pub bits: u8,
    #[serde(default)]
    pub rounding: Rounding,
}

/// Quotients this close to an integer are treated as lying on the grid, so
/// that quantizing a grid value returns it unchanged despite rounding in `s`.
const GRID_SNAP: f64 = 1e-9;

pub fn scale_factor(clip: f64, bits: u8) -> Result<f64, QuantError> {
    if !(clip.is_finite() && clip > 0.0) {
        return Err(QuantError::InvalidClip(clip));
    }
    if bits < 2 {
        return Err(QuantError::InvalidBits(bits));
    }
    Ok(clip / levels(bits))
}

/// Largest grid index, `2^(b-1) - 1`.
fn levels(bits: u8) -> f64 {
    ((1u64 << (bits.min(53) - 1)) - 1) as f64
}

impl QuantParams {
    pub fn new(clip: f64, bits: u8) -> Result<Self, QuantError> {
        scale_factor(clip, bits)?;
        Ok(Self {
            clip,
            bits,
            rounding: Rounding::Floor,
        })
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn is_passthrough(&self) -> bool {
        self.bits >= FULL_PRECISION_BITS
    }

    pub fn scale(&self) -> f64 {
        self.clip / levels(self.bits)
    }

    /// Integer grid index of `r`.
    pub fn level(&self, r: f64) -> i64 {
        let l = levels(self.bits);
        let clamped = r.clamp(-self.clip, self.clip);
        let t = clamped / self.clip * l;
        let nearest = t.round();
        let idx = if (t - nearest).abs() <= GRID_SNAP * nearest.abs().max(1.0) {
            nearest
        } else {
            match self.rounding {
                Rounding::Floor => t.floor(),
                Rounding::Nearest => nearest,
            }
        };
        idx.clamp(-l, l) as i64
    }

    pub fn quantize(&self, r: f64) -> f64 {
        if self.is_passthrough() {
            return r;
        }
        if r.is_nan() {
            return r;
        }
        let l = levels(self.bits) as i64;
        match self.level(r) {
            x if x == l => self.clip,
            x if x == -l => -self.clip,
            x => x as f64 * self.scale(),
        }
    }
}

/// `Q(r)` for the given parameters.
pub fn quantize(r: f64, params: &QuantParams) -> f64 {
    params.quantize(r)
}

/// Elementwise [`quantize`]; identity for 32-bit parameters.
pub fn fake_quant_forward(tensor: &[f64], params: &QuantParams) -> Vec<f64> {
    tensor.iter().map(|&x| params.quantize(x)).collect()
}

/// Straight-through gradient: passes where the input was inside the clip
/// range and blocks elsewhere.
pub fn fake_quant_backward(input: &[f64], grad: &[f64], params: &QuantParams) -> Vec<f64> {
    if params.is_passthrough() {
        return grad.to_vec();
    }
    input
        .iter()
        .zip(grad)
        .map(|(&x, &g)| if x.abs() <= params.clip { g } else { 0.0 })
        .collect()
}

/// Number of histogram bins used for KL calibration.
pub const CALIBRATION_BINS: usize = 128;

/// Default clip candidates, as percentiles of the absolute sample values.
pub const CALIBRATION_PERCENTILES: [f64; 5] = [90.0, 95.0, 99.0, 99.9, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub clip: f64,
    pub kl: f64,
    /// Set when the sample carried no signal (all zeros) and the smallest
    /// candidate was returned without comparison.
    pub degenerate: bool,
}

/// Percentile magnitudes of `values` for use as clip candidates. Zero
/// percentiles are dropped.
pub fn percentile_candidates(values: &[f64], percentiles: &[f64]) -> Vec<f64> {
    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).filter(|v| v.is_finite()).collect();
    if mags.is_empty() {
        return Vec::new();
    }
    mags.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = percentiles
        .iter()
        .map(|p| {
            let rank = (p / 100.0 * (mags.len() - 1) as f64).round() as usize;
            mags[rank.min(mags.len() - 1)]
        })
        .filter(|&c| c > 0.0)
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn histogram(values: impl Iterator<Item = f64>, range: f64) -> Vec<f64> {
    let mut h = vec![0.0; CALIBRATION_BINS];
    let width = 2.0 * range / CALIBRATION_BINS as f64;
    for v in values {
        let idx = ((v + range) / width).floor();
        let idx = (idx.max(0.0) as usize).min(CALIBRATION_BINS - 1);
        h[idx] += 1.0;
    }
    h
}

/// `D_KL(P || Q)` between two histograms over the same bins, with empty `Q`
/// bins smoothed by a small floor so the divergence stays finite.
pub fn histogram_kl(p: &[f64], q: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-10;
    let ps: f64 = p.iter().sum();
    let qs: f64 = q.iter().sum();
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| {
            let pn = pi / ps;
            let qn = (qi / qs).max(FLOOR);
            pn * (pn / qn).ln()
        })
        .sum()
}

/// KL divergence between the sample's histogram and the histogram of its
/// quantized values under clip `clip`.
pub fn clip_divergence(values: &[f64], bits: u8, clip: f64) -> Result<f64, QuantError> {
    let params = QuantParams::new(clip, bits)?;
    let range = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if range == 0.0 {
        return Ok(0.0);
    }
    let p = histogram(values.iter().copied(), range);
    let q = histogram(values.iter().map(|&v| params.quantize(v)), range);
    Ok(histogram_kl(&p, &q))
}

/// Pick the candidate clip with minimal KL divergence over a fixed
/// 128-bin histogram spanning the sample's magnitude. Ties go to the
/// smaller clip.
pub fn calibrate_clip(values: &[f64], bits: u8, candidates: &[f64]) -> Result<Calibration, QuantError> {
    if values.is_empty() {
        return Err(QuantError::EmptySample);
    }
    if candidates.is_empty() {
        return Err(QuantError::NoCandidates);
    }
    let mut sorted = candidates.to_vec();
    for &c in &sorted {
        scale_factor(c, bits.max(2))?;
    }
    sorted.sort_by(f64::total_cmp);
    if values.iter().all(|&v| v == 0.0) {
        log::warn!("all-zero calibration sample; using smallest clip candidate");
        return Ok(Calibration {
            clip: sorted[0],
            kl: 0.0,
            degenerate: true,
        });
    }
    let mut best = Calibration {
        clip: sorted[0],
        kl: f64::INFINITY,
        degenerate: false,
    };
    for &c in &sorted {
        let kl = clip_divergence(values, bits, c)?;
        if kl < best.kl {
            best = Calibration {
                clip: c,
                kl,
                degenerate: false,
            };
        }
    }
    Ok(best)
}
