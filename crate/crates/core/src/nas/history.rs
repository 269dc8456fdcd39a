use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::search::{CostCache, IterationStats};
use super::{NasConfig, NasError};
use crate::arch::{Chromosome, ChromosomeHash, SearchSpace};
use crate::hwcost::{AcceleratorSpec, AllocationMode};

/// JSON has no infinity; non-finite values are written as strings.
pub(crate) mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t
                .parse::<f64>()
                .map_err(|_| serde::de::Error::custom(format!("not a number: {t:?}"))),
        }
    }
}

/// One line of the search history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum HistoryEvent {
    Started {
        config: NasConfig,
        h: usize,
        p: usize,
        q: usize,
    },
    /// Admitted to the initial population.
    Sampled {
        iteration: usize,
        hash: ChromosomeHash,
        chromosome: Chromosome,
        #[serde(with = "lenient_f64")]
        max_overhead: f64,
    },
    FilteredTheta {
        iteration: usize,
        generation: Option<usize>,
        hash: ChromosomeHash,
        #[serde(with = "lenient_f64")]
        max_overhead: f64,
    },
    Evaluated {
        iteration: usize,
        hash: ChromosomeHash,
        acc_avg: f64,
        et_avg: f64,
        exit_ratios: Vec<f64>,
        accuracy: Vec<Option<f64>>,
    },
    EvalFailed {
        iteration: usize,
        hash: ChromosomeHash,
        error: String,
    },
    FilteredMu {
        iteration: usize,
        hash: ChromosomeHash,
        last_exit_ratio: f64,
    },
    /// Admitted to the labeled set.
    Admitted {
        iteration: usize,
        hash: ChromosomeHash,
    },
    Selected {
        iteration: usize,
        generation: usize,
        hashes: Vec<ChromosomeHash>,
    },
    Offspring {
        iteration: usize,
        generation: usize,
        hash: ChromosomeHash,
        chromosome: Chromosome,
        #[serde(with = "lenient_f64")]
        max_overhead: f64,
        predicted_acc: f64,
        #[serde(with = "lenient_f64")]
        predicted_et: f64,
    },
    /// `Top_GA_N` of an iteration, joining the population.
    Promoted {
        iteration: usize,
        hashes: Vec<ChromosomeHash>,
    },
    IterationSummary {
        stats: IterationStats,
        population: Vec<ChromosomeHash>,
        labeled: Vec<ChromosomeHash>,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub events: Vec<HistoryEvent>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: HistoryEvent) {
        self.events.push(e);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// Parse line-delimited events. An unterminated final line that does not
    /// parse is treated as a write cut short and dropped.
    pub fn from_jsonl(text: &str) -> Result<Self, NasError> {
        let mut events = Vec::new();
        let complete = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(line) {
                Ok(e) => events.push(e),
                Err(_) if i + 1 == lines.len() && !complete => {
                    log::warn!("dropping truncated final history line");
                }
                Err(e) => return Err(NasError::History(format!("line {}: {e}", i + 1))),
            }
        }
        Ok(Self { events })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NasError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| NasError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NasError> {
        let path = path.as_ref();
        crate::io::atomic_write(path, self.to_jsonl().as_bytes()).map_err(|source| NasError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn config(&self) -> Option<&NasConfig> {
        self.events.iter().find_map(|e| match e {
            HistoryEvent::Started { config, .. } => Some(config),
            _ => None,
        })
    }

    /// Drop everything after the last iteration summary. Returns whether any
    /// summary was found.
    pub fn truncate_to_last_summary(&mut self) -> bool {
        match self
            .events
            .iter()
            .rposition(|e| matches!(e, HistoryEvent::IterationSummary { .. }))
        {
            Some(i) => {
                self.events.truncate(i + 1);
                true
            }
            None => {
                self.events.clear();
                false
            }
        }
    }

    pub fn summaries(&self) -> impl Iterator<Item = &IterationStats> {
        self.events.iter().filter_map(|e| match e {
            HistoryEvent::IterationSummary { stats, .. } => Some(stats),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Population members whose recorded overhead exceeds theta.
    pub theta_violations: Vec<ChromosomeHash>,
    /// Labeled members whose last-exit ratio exceeds mu.
    pub mu_violations: Vec<ChromosomeHash>,
    pub duplicate_evaluations: Vec<ChromosomeHash>,
    /// Broken set-growth or bookkeeping invariants.
    pub shape_violations: Vec<String>,
    pub population: usize,
    pub labeled: usize,
    pub evaluations: usize,
    pub iterations: usize,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.theta_violations.is_empty()
            && self.mu_violations.is_empty()
            && self.duplicate_evaluations.is_empty()
            && self.shape_violations.is_empty()
    }
}

/// Replay a history and check both constraints, single evaluation per
/// architecture, and that population and labeled set only grow, with the
/// labeled set equal to the union of everything admitted so far.
pub fn audit_history(history: &History) -> Result<AuditReport, NasError> {
    let config = history
        .config()
        .ok_or_else(|| NasError::History("no start event".into()))?
        .clone();
    let mut report = AuditReport::default();
    let mut overhead: BTreeMap<ChromosomeHash, f64> = BTreeMap::new();
    let mut population: BTreeSet<ChromosomeHash> = BTreeSet::new();
    let mut labeled: BTreeSet<ChromosomeHash> = BTreeSet::new();
    let mut last_ratio: BTreeMap<ChromosomeHash, f64> = BTreeMap::new();
    let mut evaluated: BTreeSet<ChromosomeHash> = BTreeSet::new();
    let mut prev: Option<(BTreeSet<ChromosomeHash>, BTreeSet<ChromosomeHash>)> = None;
    let admit_s = |h: &ChromosomeHash, overhead: &BTreeMap<ChromosomeHash, f64>, report: &mut AuditReport, population: &mut BTreeSet<ChromosomeHash>| {
        match overhead.get(h) {
            Some(&o) if o <= config.theta => {}
            _ => report.theta_violations.push(h.clone()),
        }
        population.insert(h.clone());
    };
    for e in &history.events {
        match e {
            HistoryEvent::Started { .. } => {}
            HistoryEvent::Sampled { hash, max_overhead, .. } => {
                overhead.insert(hash.clone(), *max_overhead);
                admit_s(hash, &overhead, &mut report, &mut population);
            }
            HistoryEvent::Offspring { hash, max_overhead, .. } => {
                overhead.insert(hash.clone(), *max_overhead);
            }
            HistoryEvent::Promoted { hashes, .. } => {
                for h in hashes {
                    admit_s(h, &overhead, &mut report, &mut population);
                }
            }
            HistoryEvent::Evaluated { hash, exit_ratios, .. } => {
                report.evaluations += 1;
                if !evaluated.insert(hash.clone()) {
                    report.duplicate_evaluations.push(hash.clone());
                }
                if let Some(&r) = exit_ratios.last() {
                    last_ratio.insert(hash.clone(), r);
                }
            }
            HistoryEvent::EvalFailed { hash, .. } => {
                report.evaluations += 1;
                if !evaluated.insert(hash.clone()) {
                    report.duplicate_evaluations.push(hash.clone());
                }
            }
            HistoryEvent::Admitted { hash, .. } => {
                match last_ratio.get(hash) {
                    Some(&r) if r <= config.mu => {}
                    _ => report.mu_violations.push(hash.clone()),
                }
                if !population.contains(hash) {
                    report
                        .shape_violations
                        .push(format!("{hash} labeled without being in the population"));
                }
                labeled.insert(hash.clone());
            }
            HistoryEvent::IterationSummary {
                stats,
                population: pop,
                labeled: lab,
            } => {
                report.iterations += 1;
                let pop: BTreeSet<_> = pop.iter().cloned().collect();
                let lab: BTreeSet<_> = lab.iter().cloned().collect();
                if pop != population {
                    report
                        .shape_violations
                        .push(format!("iteration {}: recorded population differs from replay", stats.iteration));
                }
                if lab != labeled {
                    report.shape_violations.push(format!(
                        "iteration {}: labeled set differs from the union of admissions",
                        stats.iteration
                    ));
                }
                if let Some((pp, pl)) = &prev {
                    if !pp.is_subset(&pop) {
                        report
                            .shape_violations
                            .push(format!("iteration {}: population shrank", stats.iteration));
                    }
                    if !pl.is_subset(&lab) {
                        report
                            .shape_violations
                            .push(format!("iteration {}: labeled set shrank", stats.iteration));
                    }
                }
                prev = Some((pop, lab));
            }
            HistoryEvent::FilteredTheta { .. } | HistoryEvent::FilteredMu { .. } | HistoryEvent::Selected { .. } => {}
        }
    }
    report.population = population.len();
    report.labeled = labeled.len();
    Ok(report)
}

/// Recompute the exit overheads of every population member with the cost
/// engine and return those exceeding theta.
pub fn audit_costs(
    history: &History,
    space: &SearchSpace,
    spec: &AcceleratorSpec,
    mode: &AllocationMode,
) -> Result<Vec<ChromosomeHash>, NasError> {
    let config = history
        .config()
        .ok_or_else(|| NasError::History("no start event".into()))?;
    let cache = CostCache::new(space.clone(), spec.clone(), *mode);
    let mut chromosomes: BTreeMap<ChromosomeHash, Chromosome> = BTreeMap::new();
    let mut members: BTreeSet<ChromosomeHash> = BTreeSet::new();
    for e in &history.events {
        match e {
            HistoryEvent::Sampled { hash, chromosome, .. } => {
                chromosomes.insert(hash.clone(), chromosome.clone());
                members.insert(hash.clone());
            }
            HistoryEvent::Offspring { hash, chromosome, .. } => {
                chromosomes.insert(hash.clone(), chromosome.clone());
            }
            HistoryEvent::Promoted { hashes, .. } => members.extend(hashes.iter().cloned()),
            _ => {}
        }
    }
    let mut bad = Vec::new();
    for h in members {
        let c = chromosomes
            .get(&h)
            .ok_or_else(|| NasError::History(format!("no chromosome recorded for {h}")))?;
        if c.hash() != h {
            return Err(NasError::History(format!("chromosome recorded for {h} hashes differently")));
        }
        if cache.get(c)?.max_overhead > config.theta {
            bad.push(h);
        }
    }
    Ok(bad)
}
