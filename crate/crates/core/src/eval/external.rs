//! Evaluator protocol: one JSON file per architecture, named after the
//! canonical chromosome hash.
//!
//! ```json
//! {
//!   "arch_hash": "3f2a9c0d11b2e4f7",
//!   "tau": 0.9,
//!   "accuracy": [99.1, 96.86, null, 66.36],
//!   "exit_ratios": [0.2549, 0.1531, 0.0, 0.592],
//!   "sample_counts": [2549, 1531, 0, 5920]
//! }
//! ```
//!
//! `acc_avg` may be included; when present it must match `sum(ER * ACC)`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, EvaluationReport, Evaluator};
use crate::arch::{Chromosome, ChromosomeHash, EennArchitecture};
use crate::io::atomic_write;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireReport {
    arch_hash: String,
    tau: f64,
    accuracy: Vec<Option<f64>>,
    exit_ratios: Vec<f64>,
    sample_counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    acc_avg: Option<f64>,
}

/// Read and validate an external report. With `expected` set, the file must
/// be bound to that architecture hash.
pub fn load_external_report(
    path: &Path,
    expected: Option<&ChromosomeHash>,
) -> Result<EvaluationReport, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let wire: WireReport = serde_json::from_str(&text)
        .map_err(|e| EvalError::Schema(format!("{}: {e}", path.display())))?;
    if !ChromosomeHash::is_well_formed(&wire.arch_hash) {
        return Err(EvalError::Schema(format!(
            "arch_hash `{}` is not 16 lowercase hex digits",
            wire.arch_hash
        )));
    }
    if let Some(exp) = expected {
        if exp.as_str() != wire.arch_hash {
            return Err(EvalError::UnknownArchitecture {
                expected: exp.to_string(),
                found: wire.arch_hash,
            });
        }
    }
    let report = EvaluationReport::from_parts(
        Some(ChromosomeHash(wire.arch_hash)),
        wire.tau,
        wire.accuracy,
        wire.exit_ratios,
        wire.sample_counts,
    )?;
    if let Some(claimed) = wire.acc_avg {
        if (claimed - report.acc_avg).abs() > 1e-6 * report.acc_avg.abs().max(1.0) {
            return Err(EvalError::Invariant(format!(
                "acc_avg {claimed} differs from sum(ER*ACC) = {}",
                report.acc_avg
            )));
        }
    }
    Ok(report)
}

/// Write a report in the evaluator protocol format.
pub fn save_report(report: &EvaluationReport, path: &Path) -> Result<(), EvalError> {
    report.validate()?;
    let hash = report
        .arch_hash
        .as_ref()
        .ok_or_else(|| EvalError::Schema("report is not bound to an architecture hash".into()))?;
    let wire = WireReport {
        arch_hash: hash.to_string(),
        tau: report.tau,
        accuracy: report.accuracy.clone(),
        exit_ratios: report.exit_ratios.clone(),
        sample_counts: report.sample_counts.clone(),
        acc_avg: Some(report.acc_avg),
    };
    let mut text = serde_json::to_string_pretty(&wire).expect("report serializes");
    text.push('\n');
    atomic_write(path, text.as_bytes()).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Reads `<dir>/<hash>.json` for each requested architecture.
#[derive(Debug, Clone)]
pub struct ExternalEvaluator {
    pub dir: PathBuf,
}

impl ExternalEvaluator {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, hash: &ChromosomeHash) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }
}

impl Evaluator for ExternalEvaluator {
    fn name(&self) -> &str {
        "external"
    }

    fn evaluate(
        &self,
        chrom: &Chromosome,
        arch: &EennArchitecture,
    ) -> Result<EvaluationReport, EvalError> {
        let hash = chrom.hash();
        let path = self.path_for(&hash);
        if !path.exists() {
            return Err(EvalError::MissingReport(hash.to_string()));
        }
        let report = load_external_report(&path, Some(&hash))?;
        if report.exit_count() != arch.exit_count() {
            return Err(EvalError::Invariant(format!(
                "report has {} exits, architecture has {}",
                report.exit_count(),
                arch.exit_count()
            )));
        }
        Ok(report)
    }
}
