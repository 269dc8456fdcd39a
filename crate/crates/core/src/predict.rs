//! Weak surrogate predictors of average accuracy and average ET.
//!
//! Architectures are mapped to a fixed-length feature vector and a ridge
//! regression is fit on standardized features. ET spans orders of magnitude
//! and is fit on its logarithm.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arch::{ArchError, Chromosome, ChromosomeHash, SearchSpace};

#[derive(Debug, thiserror::Error)]
pub enum PredictError {
    #[error("need at least 2 records to fit, got {0}")]
    TooFewRecords(usize),
    #[error("feature length {found}, predictor expects {expected}")]
    FeatureLength { expected: usize, found: usize },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("ridge strength must be finite and >= 0, got {0}")]
    InvalidStrength(f64),
    #[error("labeled set line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Arch(#[from] ArchError),
}

/// Fixed-length description of an architecture:
/// exit count; occupancy of each optional mount; cumulative backbone MAC
/// fraction at each occupied mount (0 when empty); head depth and bit width
/// of each exit position including the final one (0 when empty); backbone
/// bit width. Length `4H + 4`.
pub fn featurize(chrom: &Chromosome, space: &SearchSpace) -> Result<Vec<f64>, ArchError> {
    let arch = space.decode(chrom)?;
    let h = space.h();
    let fractions = space.mount_mac_fractions();
    let mut occupancy = vec![0.0; h];
    let mut macs = vec![0.0; h];
    let mut depth = vec![0.0; h + 1];
    let mut bits = vec![0.0; h + 1];
    for (i, e) in arch.exits.iter().enumerate() {
        let slot = e.mount.min(h);
        if slot < h {
            occupancy[slot] = 1.0;
            macs[slot] = fractions[e.mount];
        }
        depth[slot] = e.head.linear_layers as f64;
        bits[slot] = arch.quant.exit_bits[i] as f64;
    }
    let mut f = Vec::with_capacity(4 * h + 4);
    f.push(arch.exit_count() as f64);
    f.extend(occupancy);
    f.extend(macs);
    f.extend(depth);
    f.extend(bits);
    f.push(arch.quant.backbone_bits as f64);
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Accuracy,
    /// Fit on `ln(ET)`.
    Et,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub target: Target,
    pub means: Vec<f64>,
    /// Standard deviations; features constant on the training set get 0 and
    /// are ignored.
    pub scales: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Training mean squared error in the fitted space.
    pub train_mse: f64,
}

impl Predictor {
    pub fn feature_len(&self) -> usize {
        self.means.len()
    }

    /// Raw model output in the fitted space (log space for ET).
    fn linear(&self, x: &[f64]) -> Result<f64, PredictError> {
        if x.len() != self.feature_len() {
            return Err(PredictError::FeatureLength {
                expected: self.feature_len(),
                found: x.len(),
            });
        }
        Ok(self.intercept
            + x.iter()
                .zip(&self.means)
                .zip(&self.scales)
                .zip(&self.coefficients)
                .map(|(((v, m), s), c)| if *s > 0.0 { c * (v - m) / s } else { 0.0 })
                .sum::<f64>())
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<f64, PredictError> {
        let y = self.linear(x)?;
        Ok(match self.target {
            Target::Accuracy => y.clamp(0.0, 100.0),
            Target::Et => y.exp(),
        })
    }

    pub fn predict(&self, chrom: &Chromosome, space: &SearchSpace) -> Result<f64, PredictError> {
        self.predict_features(&featurize(chrom, space)?)
    }
}

/// Ridge regression on standardized features with an unpenalized intercept.
pub fn fit(features: &[Vec<f64>], targets: &[f64], target: Target, ridge: f64) -> Result<Predictor, PredictError> {
    let n = features.len();
    if n < 2 {
        return Err(PredictError::TooFewRecords(n));
    }
    if targets.len() != n {
        return Err(PredictError::InvalidTarget(format!("{} targets for {n} records", targets.len())));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(PredictError::InvalidStrength(ridge));
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(PredictError::FeatureLength {
            expected: d,
            found: bad.len(),
        });
    }
    let y: Vec<f64> = match target {
        Target::Accuracy => targets.to_vec(),
        Target::Et => {
            if let Some(bad) = targets.iter().find(|&&t| !(t > 0.0)) {
                return Err(PredictError::InvalidTarget(format!("ET {bad} is not positive")));
            }
            targets.iter().map(|t| t.ln()).collect()
        }
    };
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(PredictError::InvalidTarget(format!("non-finite target {bad}")));
    }
    let nf = n as f64;
    let means: Vec<f64> = (0..d).map(|j| features.iter().map(|f| f[j]).sum::<f64>() / nf).collect();
    let scales: Vec<f64> = (0..d)
        .map(|j| {
            let var = features.iter().map(|f| (f[j] - means[j]).powi(2)).sum::<f64>() / nf;
            if var > 1e-24 {
                var.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let y_mean = y.iter().sum::<f64>() / nf;
    let x = DMatrix::from_fn(n, d, |i, j| {
        if scales[j] > 0.0 {
            (features[i][j] - means[j]) / scales[j]
        } else {
            0.0
        }
    });
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    // w = V diag(s / (s^2 + ridge)) U^T y, dropping numerically null directions.
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = s_max * 1e-10 * (n.max(d) as f64);
    let uty = u.transpose() * &yc;
    let mut scaled = DVector::zeros(svd.singular_values.len());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            scaled[k] = uty[k] * s / (s * s + ridge);
        }
    }
    let w = v_t.transpose() * scaled;
    let resid = &x * &w - &yc;
    let train_mse = resid.norm_squared() / nf;
    Ok(Predictor {
        target,
        means,
        scales,
        coefficients: w.iter().copied().collect(),
        intercept: y_mean,
        train_mse,
    })
}

/// Fit on every record of a labeled set.
pub fn fit_labeled(set: &LabeledSet, space: &SearchSpace, target: Target, ridge: f64) -> Result<Predictor, PredictError> {
    let mut xs = Vec::with_capacity(set.len());
    let mut ys = Vec::with_capacity(set.len());
    for r in set.iter() {
        xs.push(featurize(&r.chromosome, space)?);
        ys.push(match target {
            Target::Accuracy => r.acc_avg,
            Target::Et => r.et_avg,
        });
    }
    fit(&xs, &ys, target, ridge)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub hash: ChromosomeHash,
    pub chromosome: Chromosome,
    pub acc_avg: f64,
    pub et_avg: f64,
    #[serde(default)]
    pub exit_ratios: Vec<f64>,
    /// Iteration in which the label was produced.
    pub iteration: usize,
}

impl LabeledRecord {
    pub fn new(chromosome: Chromosome, acc_avg: f64, et_avg: f64, exit_ratios: Vec<f64>, iteration: usize) -> Self {
        let chromosome = chromosome.canonical();
        Self {
            hash: chromosome.hash(),
            chromosome,
            acc_avg,
            et_avg,
            exit_ratios,
            iteration,
        }
    }
}

/// Labeled architectures keyed by canonical hash; relabeling keeps the latest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    records: BTreeMap<ChromosomeHash, LabeledRecord>,
}

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns whether the chromosome was new.
    pub fn insert(&mut self, record: LabeledRecord) -> bool {
        self.records.insert(record.hash.clone(), record).is_none()
    }

    pub fn get(&self, hash: &ChromosomeHash) -> Option<&LabeledRecord> {
        self.records.get(hash)
    }

    pub fn contains(&self, hash: &ChromosomeHash) -> bool {
        self.records.contains_key(hash)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in hash order.
    pub fn iter(&self) -> impl Iterator<Item = &LabeledRecord> {
        self.records.values()
    }

    pub fn hashes(&self) -> impl Iterator<Item = &ChromosomeHash> {
        self.records.keys()
    }

    pub fn extend(&mut self, other: &LabeledSet) {
        for r in other.iter() {
            self.insert(r.clone());
        }
    }

    pub fn is_superset_of(&self, other: &LabeledSet) -> bool {
        other.hashes().all(|h| self.contains(h))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.iter() {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, PredictError> {
        let mut set = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| PredictError::Io {
                path: "<labeled set>".into(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LabeledRecord = serde_json::from_str(&line).map_err(|e| PredictError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            if rec.chromosome.clone().canonical().hash() != rec.hash {
                return Err(PredictError::Parse {
                    line: i + 1,
                    msg: format!("hash {} does not match chromosome", rec.hash),
                });
            }
            set.insert(rec);
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PredictError> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|source| PredictError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PredictError> {
        let path = path.as_ref();
        crate::io::atomic_write(path, self.to_jsonl().as_bytes()).map_err(|source| PredictError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }
}
