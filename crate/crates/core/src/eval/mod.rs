//! Early-exit inference semantics and architecture evaluators.
//!
//! A sample leaves at the first exit whose max-softmax confidence reaches the
//! threshold `tau`; the final exit always accepts. Exit ratios and per-exit
//! accuracies aggregate into the average accuracy `sum_i ER_i * ACC_i`.

mod external;
mod oracle;
mod report;
mod toy;

pub use external::{load_external_report, save_report, ExternalEvaluator};
pub use oracle::{synthetic_oracle, DifficultyComponent, OracleConfig, OracleEvaluator};
pub use report::{EvaluationReport, ER_TOLERANCE};
pub use toy::{
    blobs_dataset, toy_dataset, train_toy, Dataset, ToyEvaluator, ToyNet, TrainingConfig,
};

use crate::arch::{ArchError, Chromosome, EennArchitecture};
use crate::quant::QuantError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no confidences given")]
    EmptyConfidences,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("exit index {index} out of range for {exits} exits")]
    ExitOutOfRange { index: usize, exits: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("exit ratios sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("report invariant violated: {0}")]
    Invariant(String),
    #[error("report schema: {0}")]
    Schema(String),
    #[error("report is for architecture {found}, expected {expected}")]
    UnknownArchitecture { expected: String, found: String },
    #[error("no external report for architecture {0}")]
    MissingReport(String),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("backbone not usable by the toy trainer: {0}")]
    IncompatibleBackbone(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// Produces an evaluation report for an architecture.
pub trait Evaluator: Sync {
    fn name(&self) -> &str;

    fn evaluate(
        &self,
        chrom: &Chromosome,
        arch: &EennArchitecture,
    ) -> Result<EvaluationReport, EvalError>;
}

/// Index (0-based) of the exit a sample leaves at: the first with
/// confidence `>= tau`, else the last.
pub fn exit_decision(confidences: &[f64], tau: f64) -> Result<usize, EvalError> {
    if confidences.is_empty() {
        return Err(EvalError::EmptyConfidences);
    }
    let last = confidences.len() - 1;
    Ok(confidences[..last]
        .iter()
        .position(|&c| c >= tau)
        .unwrap_or(last))
}

/// Like [`exit_decision`] with one threshold per exit.
pub fn exit_decision_per_exit(confidences: &[f64], taus: &[f64]) -> Result<usize, EvalError> {
    if confidences.is_empty() {
        return Err(EvalError::EmptyConfidences);
    }
    if taus.len() != confidences.len() {
        return Err(EvalError::LengthMismatch(format!(
            "{} thresholds for {} exits",
            taus.len(),
            confidences.len()
        )));
    }
    let last = confidences.len() - 1;
    Ok((0..last)
        .find(|&i| confidences[i] >= taus[i])
        .unwrap_or(last))
}

/// Fraction of samples leaving at each of `m` exits.
pub fn exit_ratios(decisions: &[usize], m: usize) -> Result<Vec<f64>, EvalError> {
    if decisions.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut counts = vec![0u64; m];
    for &d in decisions {
        *counts.get_mut(d).ok_or(EvalError::ExitOutOfRange { index: d, exits: m })? += 1;
    }
    let n = decisions.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

fn check_ratios(er: &[f64]) -> Result<(), EvalError> {
    if let Some(bad) = er.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(EvalError::InvalidValue(format!("exit ratio {bad} outside [0, 1]")));
    }
    let sum: f64 = er.iter().sum();
    if (sum - 1.0).abs() > ER_TOLERANCE {
        return Err(EvalError::NotNormalized(sum));
    }
    Ok(())
}

/// `sum_i ER_i * ACC_i`.
pub fn acc_avg(acc: &[f64], er: &[f64]) -> Result<f64, EvalError> {
    if acc.len() != er.len() {
        return Err(EvalError::LengthMismatch(format!(
            "{} accuracies, {} exit ratios",
            acc.len(),
            er.len()
        )));
    }
    check_ratios(er)?;
    Ok(acc.iter().zip(er).map(|(a, r)| a * r).sum())
}

/// Linearly scalarized multi-exit loss `sum_i lambda_i * L_i`.
pub fn scalarized_loss(losses: &[f64], lambdas: &[f64]) -> Result<f64, EvalError> {
    if losses.len() != lambdas.len() {
        return Err(EvalError::LengthMismatch(format!(
            "{} losses, {} weights",
            losses.len(),
            lambdas.len()
        )));
    }
    if let Some(l) = lambdas.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(EvalError::InvalidValue(format!("preference weight {l} must be positive")));
    }
    Ok(losses.iter().zip(lambdas).map(|(l, w)| l * w).sum())
}
