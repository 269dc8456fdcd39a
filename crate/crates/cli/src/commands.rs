use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use eenas_core::arch::{search_space_size, search_space_size_binomial, Chromosome, ChromosomeHash};
use eenas_core::hwcost::{cost_report_with, AllocationMode};
use eenas_core::nas::{audit_costs, audit_history, CostCache, History, HistoryEvent, NasRun, SearchState};
use log::{info, warn};

use crate::config::Resolved;
use crate::error::CliError;
use crate::export::{self, Row};

pub fn space(r: &Resolved) -> Result<String, CliError> {
    let (h, p, q) = (r.space.h() as u64, r.space.p() as u64, r.space.q() as u64);
    let closed = search_space_size(h, p, q)?;
    let binomial = search_space_size_binomial(h, p, q)?;
    let mut s = String::new();
    writeln!(s, "optional mounting points H = {h}").unwrap();
    writeln!(s, "head options p = {p}").unwrap();
    writeln!(s, "quantization options q = {q}").unwrap();
    writeln!(s, "size (closed form) = {closed}").unwrap();
    writeln!(s, "size (binomial sum) = {binomial}").unwrap();
    if closed != binomial {
        return Err(CliError::Other(format!("size mismatch: {closed} vs {binomial}")));
    }
    Ok(s)
}

/// Genes as a JSON array or integers separated by commas or whitespace.
pub fn parse_genes(text: &str) -> Result<Chromosome, CliError> {
    let t = text.trim();
    let genes: Vec<u8> = if t.starts_with('[') {
        serde_json::from_str(t).map_err(|e| CliError::Config(format!("genes: {e}")))?
    } else {
        t.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u8>().map_err(|e| CliError::Config(format!("gene {s:?}: {e}"))))
            .collect::<Result<_, _>>()?
    };
    Ok(Chromosome::from_genes(&genes)?)
}

pub fn parse_ratios(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| CliError::Config(format!("exit ratio {s:?}: {e}"))))
        .collect()
}

pub fn cost(r: &Resolved, arch_file: &Path, ratios: Option<Vec<f64>>) -> Result<String, CliError> {
    let text = std::fs::read_to_string(arch_file).map_err(|e| CliError::Config(format!("{}: {e}", arch_file.display())))?;
    let chrom = parse_genes(&text)?;
    let arch = r.space.decode(&chrom)?;
    let er = match ratios {
        Some(er) => er,
        None => r.evaluator()?.evaluate(&chrom, &arch)?.exit_ratios,
    };
    if er.len() != arch.exit_count() {
        return Err(CliError::Config(format!("{} exit ratios for {} exits", er.len(), arch.exit_count())));
    }
    let report = cost_report_with(&arch, &r.spec, &er, &r.nas.allocation)?;
    report.validate()?;
    let csv = export::cost_csv(&arch, &report)?;
    report.save(r.out.join("cost.json"))?;
    export::write(&r.out.join("cost.csv"), &csv)?;

    let mut s = String::new();
    writeln!(s, "architecture {}", chrom.hash()).unwrap();
    writeln!(s, "{:>4} {:>6} {:>8} {:>14} {:>14}", "exit", "mount", "ratio", "cum. MACs", "ET").unwrap();
    for (i, label) in arch.exit_labels().iter().enumerate() {
        writeln!(
            s,
            "{:>4} {:>6} {:>8.4} {:>14} {:>14.6e}",
            i + 1,
            label,
            report.exit_ratios[i],
            report.cumulative_macs[i],
            report.et[i]
        )
        .unwrap();
    }
    writeln!(s, "ET_avg = {:.6e}", report.et_avg).unwrap();
    writeln!(s, "makespan = {} cycles", report.makespan).unwrap();
    Ok(s)
}

fn history_path(out: &Path) -> PathBuf {
    out.join("history.jsonl")
}

fn audit(history: &History, r: &Resolved, mode: &AllocationMode) -> Result<(), CliError> {
    let report = audit_history(history)?;
    let cost_violations = audit_costs(history, &r.space, &r.spec, mode)?;
    if !report.is_clean() || !cost_violations.is_empty() {
        return Err(CliError::Audit(format!(
            "{} theta, {} mu, {} duplicate, {} shape, {} recomputed-cost violations",
            report.theta_violations.len(),
            report.mu_violations.len(),
            report.duplicate_evaluations.len(),
            report.shape_violations.len(),
            cost_violations.len()
        )));
    }
    info!(
        "audit clean: {} population, {} labeled, {} evaluations, {} iterations",
        report.population, report.labeled, report.evaluations, report.iterations
    );
    Ok(())
}

fn describe(rows: &[Row], state: &SearchState) -> String {
    let front = rows.iter().filter(|r| r.on_front).count();
    format!(
        "{} iterations, {} in population, {} labeled, {} on the Pareto front, {} rejected by mu, {} failed\n",
        state.stats.len(),
        state.population.len(),
        state.labeled.len(),
        front,
        state.rejected.len(),
        state.failed.len()
    )
}

pub fn search(r: &Resolved, resume: bool) -> Result<String, CliError> {
    let evaluator = r.evaluator()?;
    let path = history_path(&r.out);
    let previous = if resume {
        if !path.exists() {
            return Err(CliError::Config(format!("nothing to resume: {} does not exist", path.display())));
        }
        Some(History::load(&path)?)
    } else {
        if path.exists() {
            return Err(CliError::Config(format!(
                "{} already exists; pass --resume or choose another output directory",
                path.display()
            )));
        }
        None
    };
    let run = NasRun::new(r.space.clone(), r.spec.clone(), r.nas.clone(), evaluator.as_ref())?;
    let (state, history) = run.run(previous, |h, s| {
        info!("iteration {} done: {} labeled", s.iteration, s.labeled.len());
        h.save(&path)
    })?;
    history.save(&path)?;
    let rows = export::write_all(&r.out, &state, &run.costs)?;
    audit(&history, r, &r.nas.allocation)?;
    if !state.failed.is_empty() {
        for (h, e) in &state.failed {
            warn!("{h}: {e}");
        }
        return Err(CliError::Eval(format!("{} architectures failed to evaluate", state.failed.len())));
    }
    Ok(describe(&rows, &state))
}

pub fn report(r: &Resolved, history_file: Option<&Path>, hash: Option<&str>) -> Result<String, CliError> {
    let path = history_file.map(Path::to_path_buf).unwrap_or_else(|| history_path(&r.out));
    let mut history = History::load(&path)?;
    if let Some(HistoryEvent::Started { h, p, q, .. }) = history.events.first() {
        if (*h, *p, *q) != (r.space.h(), r.space.p(), r.space.q()) {
            return Err(CliError::Config(format!(
                "history was recorded on a space with H={h}, p={p}, q={q}; the configured space has H={}, p={}, q={}",
                r.space.h(),
                r.space.p(),
                r.space.q()
            )));
        }
    }
    if !history.truncate_to_last_summary() {
        return Err(CliError::Other(format!("{} holds no completed iteration", path.display())));
    }
    let config = history.config().cloned().ok_or_else(|| CliError::Other("history has no start event".into()))?;
    audit(&history, r, &config.allocation)?;
    let state = SearchState::replay(&history)?;
    if state.labeled.is_empty() {
        return Err(CliError::Other("no labeled architectures in the history".into()));
    }
    let costs = CostCache::new(r.space.clone(), r.spec.clone(), config.allocation);
    let rows = export::write_all(&r.out, &state, &costs)?;
    let chosen = match hash {
        Some(h) => {
            let h = ChromosomeHash(h.to_string());
            rows.iter()
                .find(|row| row.record.hash == h)
                .ok_or_else(|| CliError::Other(format!("{h} is not a labeled architecture")))?
        }
        None => rows
            .iter()
            .filter(|row| row.on_front)
            .max_by(|a, b| {
                a.record
                    .acc_avg
                    .total_cmp(&b.record.acc_avg)
                    .then(b.record.et_avg.total_cmp(&a.record.et_avg))
                    .then(b.record.hash.cmp(&a.record.hash))
            })
            .expect("front of a nonempty set is nonempty"),
    };
    let mut s = describe(&rows, &state);
    writeln!(s, "architecture {} (exits {})", chosen.record.hash, chosen.exits.join(" ")).unwrap();
    writeln!(s, "ACC_avg = {:.4}", chosen.record.acc_avg).unwrap();
    writeln!(s, "ET_avg = {:.6e} (static {:.6e})", chosen.record.et_avg, chosen.static_et).unwrap();
    writeln!(s, "ET reduction = {:.2}%", 100.0 * chosen.et_reduction).unwrap();
    writeln!(s, "MAC reduction = {:.2}% (static {} MACs)", 100.0 * chosen.mac_reduction, chosen.static_macs).unwrap();
    Ok(s)
}
