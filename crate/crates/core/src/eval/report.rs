use serde::{Deserialize, Serialize};

use super::{check_ratios, EvalError};
use crate::arch::ChromosomeHash;

/// Tolerance on `sum(ER) == 1` and on the average-accuracy identity.
pub const ER_TOLERANCE: f64 = 1e-9;

/// Per-exit accuracy and exit ratio of one evaluated architecture.
///
/// Exits that no sample reached carry `None` as accuracy and a zero ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub arch_hash: Option<ChromosomeHash>,
    pub tau: f64,
    /// Percent, over the samples that left at each exit.
    pub accuracy: Vec<Option<f64>>,
    pub exit_ratios: Vec<f64>,
    pub sample_counts: Vec<u64>,
    pub acc_avg: f64,
}

impl EvaluationReport {
    /// Build from per-exit sample and correct-prediction counts.
    pub fn from_counts(
        arch_hash: Option<ChromosomeHash>,
        tau: f64,
        counts: &[u64],
        correct: &[u64],
    ) -> Result<Self, EvalError> {
        if counts.len() != correct.len() || counts.is_empty() {
            return Err(EvalError::LengthMismatch(format!(
                "{} counts, {} correct counts",
                counts.len(),
                correct.len()
            )));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(EvalError::EmptyDataset);
        }
        let mut accuracy = Vec::with_capacity(counts.len());
        for (&n, &k) in counts.iter().zip(correct) {
            if k > n {
                return Err(EvalError::InvalidValue(format!("{k} correct out of {n}")));
            }
            accuracy.push((n > 0).then(|| 100.0 * k as f64 / n as f64));
        }
        let exit_ratios: Vec<f64> = counts.iter().map(|&n| n as f64 / total as f64).collect();
        Self::from_parts(arch_hash, tau, accuracy, exit_ratios, counts.to_vec())
    }

    /// Build from accuracies and ratios; computes `acc_avg` and validates.
    pub fn from_parts(
        arch_hash: Option<ChromosomeHash>,
        tau: f64,
        accuracy: Vec<Option<f64>>,
        exit_ratios: Vec<f64>,
        sample_counts: Vec<u64>,
    ) -> Result<Self, EvalError> {
        let acc_avg = weighted_accuracy(&accuracy, &exit_ratios);
        let report = Self {
            arch_hash,
            tau,
            accuracy,
            exit_ratios,
            sample_counts,
            acc_avg,
        };
        report.validate()?;
        Ok(report)
    }

    pub fn exit_count(&self) -> usize {
        self.exit_ratios.len()
    }

    /// Ratio of samples reaching the final classifier.
    pub fn last_exit_ratio(&self) -> f64 {
        *self.exit_ratios.last().expect("validated report is nonempty")
    }

    pub fn with_hash(mut self, hash: ChromosomeHash) -> Self {
        self.arch_hash = Some(hash);
        self
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let m = self.exit_ratios.len();
        if m == 0 {
            return Err(EvalError::Invariant("report has no exits".into()));
        }
        if self.accuracy.len() != m || self.sample_counts.len() != m {
            return Err(EvalError::Invariant(format!(
                "{} accuracies, {} ratios, {} counts",
                self.accuracy.len(),
                m,
                self.sample_counts.len()
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(EvalError::Invariant(format!("threshold {} outside (0, 1]", self.tau)));
        }
        check_ratios(&self.exit_ratios).map_err(|e| EvalError::Invariant(e.to_string()))?;
        for (i, (a, r)) in self.accuracy.iter().zip(&self.exit_ratios).enumerate() {
            match a {
                Some(a) if !(0.0..=100.0).contains(a) => {
                    return Err(EvalError::Invariant(format!("exit {i}: accuracy {a} outside [0, 100]")))
                }
                None if *r != 0.0 => {
                    return Err(EvalError::Invariant(format!(
                        "exit {i}: undefined accuracy with nonzero ratio {r}"
                    )))
                }
                _ => {}
            }
        }
        let expected = weighted_accuracy(&self.accuracy, &self.exit_ratios);
        if (expected - self.acc_avg).abs() > ER_TOLERANCE * expected.abs().max(1.0) {
            return Err(EvalError::Invariant(format!(
                "average accuracy {} differs from sum(ER*ACC) = {}",
                self.acc_avg, expected
            )));
        }
        Ok(())
    }
}

fn weighted_accuracy(acc: &[Option<f64>], er: &[f64]) -> f64 {
    acc.iter()
        .zip(er)
        .map(|(a, r)| a.map_or(0.0, |a| a * r))
        .sum()
}
