//! CSV and JSONL outputs. Everything is rendered in memory and written
//! atomically, so a rerun over the same state produces identical bytes.

use std::collections::BTreeSet;
use std::path::Path;

use eenas_core::arch::{ChromosomeHash, EennArchitecture};
use eenas_core::hwcost::HwCostReport;
use eenas_core::io::atomic_write;
use eenas_core::nas::{et_reduction, CostCache, SearchState};
use eenas_core::predict::LabeledRecord;

use crate::error::CliError;

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    atomic_write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn join<T: ToString>(xs: &[T], sep: &str) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner().map_err(|e| CliError::Other(format!("csv: {e}")))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-exit cumulative costs plus one average row.
pub fn cost_csv(arch: &EennArchitecture, report: &HwCostReport) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["exit", "mount", "exit_ratio", "cumulative_macs", "energy_pj", "latency_cycles", "et"])?;
    for (i, label) in arch.exit_labels().iter().enumerate() {
        let nodes = report.graph.required_nodes(i)?;
        let energy: f64 = nodes.iter().map(|&k| report.layers[k].energy).sum();
        let latency: u64 = nodes.iter().map(|&k| report.layers[k].latency).sum();
        w.write_record([
            (i + 1).to_string(),
            label.to_string(),
            report.exit_ratios[i].to_string(),
            report.cumulative_macs[i].to_string(),
            energy.to_string(),
            latency.to_string(),
            report.et[i].to_string(),
        ])?;
    }
    let expected_macs: f64 = report
        .exit_ratios
        .iter()
        .zip(&report.cumulative_macs)
        .map(|(r, &m)| r * m as f64)
        .sum();
    let ratio_sum: f64 = report.exit_ratios.iter().sum();
    w.write_record([
        "avg".to_string(),
        String::new(),
        ratio_sum.to_string(),
        expected_macs.to_string(),
        String::new(),
        String::new(),
        report.et_avg.to_string(),
    ])?;
    finish(w)
}

/// A labeled record with what the exports derive from it.
pub struct Row {
    pub record: LabeledRecord,
    pub exits: Vec<String>,
    pub static_et: f64,
    pub static_macs: u64,
    pub et_reduction: f64,
    pub mac_reduction: f64,
    pub on_front: bool,
}

/// Labeled records in hash order.
pub fn rows(state: &SearchState, costs: &CostCache) -> Result<Vec<Row>, CliError> {
    let front: BTreeSet<ChromosomeHash> = state.front().into_iter().map(|r| r.hash).collect();
    state
        .labeled
        .iter()
        .map(|r| {
            let arch = costs.space.decode(&r.chromosome)?;
            let summary = costs.get(&r.chromosome)?;
            let static_et = costs.static_et(&r.chromosome)?;
            let static_macs = costs.static_macs(&r.chromosome)?;
            Ok(Row {
                exits: arch.exit_labels().into_iter().map(String::from).collect(),
                et_reduction: et_reduction(r.et_avg, static_et)?,
                mac_reduction: eenas_core::nas::mac_reduction(&r.exit_ratios, &summary.cumulative_macs, static_macs)?,
                static_et,
                static_macs,
                on_front: front.contains(&r.hash),
                record: r.clone(),
            })
        })
        .collect()
}

/// Front members, most accurate first.
pub fn front_csv(rows: &[Row]) -> Result<Vec<u8>, CliError> {
    let mut front: Vec<&Row> = rows.iter().filter(|r| r.on_front).collect();
    front.sort_by(|a, b| {
        b.record
            .acc_avg
            .total_cmp(&a.record.acc_avg)
            .then(a.record.et_avg.total_cmp(&b.record.et_avg))
            .then(a.record.hash.cmp(&b.record.hash))
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "hash",
        "genes",
        "exit_count",
        "exits",
        "acc_avg",
        "et_avg",
        "et_reduction",
        "mac_reduction",
        "exit_ratios",
        "iteration",
    ])?;
    for r in front {
        w.write_record([
            r.record.hash.to_string(),
            join(&r.record.chromosome.genes(), " "),
            r.exits.len().to_string(),
            r.exits.join(" "),
            r.record.acc_avg.to_string(),
            r.record.et_avg.to_string(),
            r.et_reduction.to_string(),
            r.mac_reduction.to_string(),
            join(&r.record.exit_ratios, " "),
            r.record.iteration.to_string(),
        ])?;
    }
    finish(w)
}

/// Every labeled architecture, for accuracy against ET-reduction plots.
pub fn scatter_csv(rows: &[Row]) -> Result<Vec<u8>, CliError> {
    let mut ordered: Vec<&Row> = rows.iter().collect();
    ordered.sort_by(|a, b| a.record.iteration.cmp(&b.record.iteration).then(a.record.hash.cmp(&b.record.hash)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "hash", "exits", "acc_avg", "et_avg", "static_et", "et_reduction", "on_front"])?;
    for r in ordered {
        w.write_record([
            r.record.iteration.to_string(),
            r.record.hash.to_string(),
            r.exits.len().to_string(),
            r.record.acc_avg.to_string(),
            r.record.et_avg.to_string(),
            r.static_et.to_string(),
            r.et_reduction.to_string(),
            r.on_front.to_string(),
        ])?;
    }
    finish(w)
}

/// One row per iteration summary.
pub fn iterations_csv(state: &SearchState) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "iteration",
        "final_evaluation",
        "population",
        "labeled",
        "newly_labeled",
        "rejected_mu",
        "failed",
        "offspring",
        "promoted",
        "acc_mean",
        "acc_max",
        "et_mean",
        "et_min",
    ])?;
    for s in &state.stats {
        w.write_record([
            s.iteration.to_string(),
            s.final_evaluation.to_string(),
            s.population.to_string(),
            s.labeled.to_string(),
            s.newly_labeled.to_string(),
            s.rejected_mu.to_string(),
            s.failed.to_string(),
            s.offspring.to_string(),
            s.promoted.to_string(),
            opt(s.acc.map(|a| a.mean)),
            opt(s.acc.map(|a| a.max)),
            opt(s.et.map(|e| e.mean)),
            opt(s.et.map(|e| e.min)),
        ])?;
    }
    finish(w)
}

pub fn labeled_jsonl(state: &SearchState) -> String {
    let mut out = String::new();
    for r in state.labeled.iter() {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Write every search output under `dir`.
pub fn write_all(dir: &Path, state: &SearchState, costs: &CostCache) -> Result<Vec<Row>, CliError> {
    let rows = rows(state, costs)?;
    write(&dir.join("labeled.jsonl"), labeled_jsonl(state).as_bytes())?;
    write(&dir.join("front.csv"), &front_csv(&rows)?)?;
    write(&dir.join("scatter.csv"), &scatter_csv(&rows)?)?;
    write(&dir.join("iterations.csv"), &iterations_csv(state)?)?;
    Ok(rows)
}
