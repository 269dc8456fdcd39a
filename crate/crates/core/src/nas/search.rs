use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::history::{History, HistoryEvent};
use super::{ga_generation, pareto_front, select_parents, Candidate, NasConfig, NasError};
use crate::arch::{Chromosome, ChromosomeHash, SearchSpace};
use crate::eval::{EvaluationReport, Evaluator};
use crate::hwcost::{arch_cost, et_avg, AcceleratorSpec, AllocationMode};
use crate::predict::{fit_labeled, LabeledRecord, LabeledSet, Predictor, Target};

/// Exit-ratio-independent hardware costs of one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub et: Vec<f64>,
    pub overheads: Vec<f64>,
    pub max_overhead: f64,
    pub cumulative_macs: Vec<u64>,
}

/// Memoized cost engine shared by concurrent evaluations.
#[derive(Debug)]
pub struct CostCache {
    pub space: SearchSpace,
    pub spec: AcceleratorSpec,
    pub mode: AllocationMode,
    map: Mutex<HashMap<ChromosomeHash, Arc<CostSummary>>>,
}

impl CostCache {
    pub fn new(space: SearchSpace, spec: AcceleratorSpec, mode: AllocationMode) -> Self {
        Self {
            space,
            spec,
            mode,
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, chrom: &Chromosome) -> Result<Arc<CostSummary>, NasError> {
        let hash = chrom.hash();
        if let Some(c) = self.map.lock().expect("cost cache lock").get(&hash) {
            return Ok(c.clone());
        }
        let arch = self.space.decode(chrom)?;
        let cost = arch_cost(&arch, &self.spec, &self.mode)?;
        let summary = Arc::new(CostSummary {
            max_overhead: cost.max_overhead(),
            et: cost.et,
            overheads: cost.overheads,
            cumulative_macs: cost.cumulative_macs,
        });
        self.map
            .lock()
            .expect("cost cache lock")
            .insert(hash, summary.clone());
        Ok(summary)
    }

    /// ET of the static counterpart: backbone plus the final head only.
    pub fn static_et(&self, chrom: &Chromosome) -> Result<f64, NasError> {
        let arch = self.space.decode(chrom)?.static_counterpart();
        Ok(arch_cost(&arch, &self.spec, &self.mode)?.et[0])
    }

    pub fn static_macs(&self, chrom: &Chromosome) -> Result<u64, NasError> {
        let arch = self.space.decode(chrom)?.static_counterpart();
        Ok(arch_cost(&arch, &self.spec, &self.mode)?.cumulative_macs[0])
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cost cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl ObjectiveStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub population: usize,
    pub labeled: usize,
    pub newly_labeled: usize,
    pub rejected_mu: usize,
    pub failed: usize,
    pub offspring: usize,
    pub promoted: usize,
    /// Over the architectures labeled in this iteration.
    pub acc: Option<ObjectiveStats>,
    pub et: Option<ObjectiveStats>,
    /// Evaluation of the last promoted members after the final iteration.
    pub final_evaluation: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchState {
    /// Next iteration to run.
    pub iteration: usize,
    /// `S^k`, including members rejected by the last-exit constraint.
    pub population: BTreeMap<ChromosomeHash, Chromosome>,
    /// `P^k`.
    pub labeled: LabeledSet,
    /// Rejected by the last-exit constraint, with their last-exit ratio.
    pub rejected: BTreeMap<ChromosomeHash, f64>,
    pub failed: BTreeMap<ChromosomeHash, String>,
    pub stats: Vec<IterationStats>,
    pub finished: bool,
}

impl SearchState {
    /// Population members not yet evaluated, in hash order.
    pub fn pending(&self) -> Vec<Chromosome> {
        self.population
            .iter()
            .filter(|(h, _)| !self.labeled.contains(h) && !self.rejected.contains_key(*h) && !self.failed.contains_key(*h))
            .map(|(_, c)| c.clone())
            .collect()
    }

    pub fn front(&self) -> Vec<LabeledRecord> {
        let records: Vec<LabeledRecord> = self.labeled.iter().cloned().collect();
        pareto_front(&records).unwrap_or_default()
    }

    /// Rebuild the state recorded in a history that ends with an iteration
    /// summary.
    pub fn replay(history: &History) -> Result<Self, NasError> {
        let mut state = Self::default();
        let mut chromosomes: BTreeMap<ChromosomeHash, Chromosome> = BTreeMap::new();
        let mut evaluated: BTreeMap<ChromosomeHash, (f64, f64, Vec<f64>, usize)> = BTreeMap::new();
        let missing = |h: &ChromosomeHash| NasError::History(format!("no chromosome recorded for {h}"));
        for e in &history.events {
            match e {
                HistoryEvent::Sampled { hash, chromosome, .. } => {
                    state.population.insert(hash.clone(), chromosome.clone());
                }
                HistoryEvent::Offspring { hash, chromosome, .. } => {
                    chromosomes.insert(hash.clone(), chromosome.clone());
                }
                HistoryEvent::Promoted { hashes, .. } => {
                    for h in hashes {
                        let c = chromosomes.get(h).ok_or_else(|| missing(h))?;
                        state.population.insert(h.clone(), c.clone());
                    }
                }
                HistoryEvent::Evaluated {
                    iteration,
                    hash,
                    acc_avg,
                    et_avg,
                    exit_ratios,
                    ..
                } => {
                    evaluated.insert(hash.clone(), (*acc_avg, *et_avg, exit_ratios.clone(), *iteration));
                }
                HistoryEvent::Admitted { hash, .. } => {
                    let c = state.population.get(hash).ok_or_else(|| missing(hash))?;
                    let (acc, et, er, it) = evaluated
                        .get(hash)
                        .cloned()
                        .ok_or_else(|| NasError::History(format!("{hash} admitted before evaluation")))?;
                    state.labeled.insert(LabeledRecord::new(c.clone(), acc, et, er, it));
                }
                HistoryEvent::FilteredMu {
                    hash, last_exit_ratio, ..
                } => {
                    state.rejected.insert(hash.clone(), *last_exit_ratio);
                }
                HistoryEvent::EvalFailed { hash, error, .. } => {
                    state.failed.insert(hash.clone(), error.clone());
                }
                HistoryEvent::IterationSummary { stats, .. } => {
                    state.iteration = stats.iteration + 1;
                    state.finished = stats.final_evaluation;
                    state.stats.push(stats.clone());
                }
                HistoryEvent::Started { .. } | HistoryEvent::FilteredTheta { .. } | HistoryEvent::Selected { .. } => {}
            }
        }
        if state.finished {
            state.iteration -= 1;
        }
        Ok(state)
    }
}

/// Indices of reports whose last-exit ratio is at most `mu`.
pub fn filter_exit_ratio(reports: &[EvaluationReport], mu: f64) -> Vec<usize> {
    reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.last_exit_ratio() <= mu)
        .map(|(i, _)| i)
        .collect()
}

struct Predictors {
    acc: Predictor,
    et: Predictor,
}

/// A configured search: space, cost engine, evaluator and hyperparameters.
pub struct NasRun<'a> {
    pub space: SearchSpace,
    pub config: NasConfig,
    pub costs: CostCache,
    evaluator: &'a dyn Evaluator,
}

impl<'a> NasRun<'a> {
    pub fn new(
        space: SearchSpace,
        spec: AcceleratorSpec,
        config: NasConfig,
        evaluator: &'a dyn Evaluator,
    ) -> Result<Self, NasError> {
        config.validate()?;
        space.validate()?;
        spec.validate()?;
        Ok(Self {
            costs: CostCache::new(space.clone(), spec, config.allocation),
            space,
            config,
            evaluator,
        })
    }

    /// Independent stream per phase: 0 for initialization, `k + 1` for
    /// iteration `k`, so a resumed run draws the same numbers.
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.config.seed);
        r.set_stream(stream);
        r
    }

    fn started(&self) -> HistoryEvent {
        HistoryEvent::Started {
            config: self.config.clone(),
            h: self.space.h(),
            p: self.space.p(),
            q: self.space.q(),
        }
    }

    /// Sample distinct architectures whose every exit overhead is at most
    /// theta until the requested count is reached.
    pub fn init_population(&self, history: &mut History) -> Result<SearchState, NasError> {
        let want = self.config.initial_population;
        let budget = want.saturating_mul(self.config.init_attempts_per_member.max(1));
        let mut rng = self.rng(0);
        let mut state = SearchState::default();
        let mut seen = BTreeSet::new();
        for _ in 0..budget {
            if state.population.len() == want {
                break;
            }
            let c = self.space.sample(&mut rng);
            let h = c.hash();
            if !seen.insert(h.clone()) {
                continue;
            }
            let max_overhead = self.costs.get(&c)?.max_overhead;
            if max_overhead <= self.config.theta {
                history.push(HistoryEvent::Sampled {
                    iteration: 0,
                    hash: h.clone(),
                    chromosome: c.clone(),
                    max_overhead,
                });
                state.population.insert(h, c);
            } else {
                history.push(HistoryEvent::FilteredTheta {
                    iteration: 0,
                    generation: None,
                    hash: h,
                    max_overhead,
                });
            }
        }
        if state.population.len() < want {
            return Err(NasError::InitExhausted {
                found: state.population.len(),
                requested: want,
            });
        }
        Ok(state)
    }

    /// Evaluate all pending members concurrently, merge in hash order and
    /// apply the last-exit constraint. Returns the newly labeled records.
    fn evaluate_pending(
        &self,
        state: &mut SearchState,
        history: &mut History,
        iteration: usize,
    ) -> Result<Vec<LabeledRecord>, NasError> {
        let pending = state.pending();
        let results: Vec<Result<(EvaluationReport, f64), String>> = pending
            .par_iter()
            .map(|c| {
                let arch = self.space.decode(c).map_err(|e| e.to_string())?;
                let report = self.evaluator.evaluate(c, &arch).map_err(|e| e.to_string())?;
                if report.exit_count() != arch.exit_count() {
                    return Err(format!(
                        "report has {} exits, architecture {}",
                        report.exit_count(),
                        arch.exit_count()
                    ));
                }
                let cost = self.costs.get(c).map_err(|e| e.to_string())?;
                let et = et_avg(&cost.et, &report.exit_ratios).map_err(|e| e.to_string())?;
                Ok((report, et))
            })
            .collect();
        let mut fresh = Vec::new();
        for (c, res) in pending.into_iter().zip(results) {
            let hash = c.hash();
            match res {
                Err(error) => {
                    log::warn!("evaluation of {hash} failed: {error}");
                    history.push(HistoryEvent::EvalFailed {
                        iteration,
                        hash: hash.clone(),
                        error: error.clone(),
                    });
                    state.failed.insert(hash, error);
                }
                Ok((report, et)) => {
                    history.push(HistoryEvent::Evaluated {
                        iteration,
                        hash: hash.clone(),
                        acc_avg: report.acc_avg,
                        et_avg: et,
                        exit_ratios: report.exit_ratios.clone(),
                        accuracy: report.accuracy.clone(),
                    });
                    let last = report.last_exit_ratio();
                    if last <= self.config.mu {
                        history.push(HistoryEvent::Admitted {
                            iteration,
                            hash: hash.clone(),
                        });
                        let rec = LabeledRecord::new(c, report.acc_avg, et, report.exit_ratios, iteration);
                        state.labeled.insert(rec.clone());
                        fresh.push(rec);
                    } else {
                        history.push(HistoryEvent::FilteredMu {
                            iteration,
                            hash: hash.clone(),
                            last_exit_ratio: last,
                        });
                        state.rejected.insert(hash, last);
                    }
                }
            }
        }
        Ok(fresh)
    }

    fn fit_predictors(&self, labeled: &LabeledSet) -> Result<Option<Predictors>, NasError> {
        if labeled.len() < 2 {
            log::warn!("only {} labeled architectures; ranking offspring by hash", labeled.len());
            return Ok(None);
        }
        Ok(Some(Predictors {
            acc: fit_labeled(labeled, &self.space, Target::Accuracy, self.config.ridge)?,
            et: fit_labeled(labeled, &self.space, Target::Et, self.config.ridge)?,
        }))
    }

    fn predict(&self, preds: &Option<Predictors>, c: &Chromosome) -> Result<(f64, f64), NasError> {
        Ok(match preds {
            Some(p) => (p.acc.predict(c, &self.space)?, p.et.predict(c, &self.space)?),
            None => (0.0, 1.0),
        })
    }

    fn summarize(
        &self,
        state: &mut SearchState,
        history: &mut History,
        iteration: usize,
        fresh: &[LabeledRecord],
        counts: (usize, usize, usize, usize),
        final_evaluation: bool,
    ) {
        let (rejected_mu, failed, offspring, promoted) = counts;
        let stats = IterationStats {
            iteration,
            population: state.population.len(),
            labeled: state.labeled.len(),
            newly_labeled: fresh.len(),
            rejected_mu,
            failed,
            offspring,
            promoted,
            acc: ObjectiveStats::of(&fresh.iter().map(|r| r.acc_avg).collect::<Vec<_>>()),
            et: ObjectiveStats::of(&fresh.iter().map(|r| r.et_avg).collect::<Vec<_>>()),
            final_evaluation,
        };
        history.push(HistoryEvent::IterationSummary {
            stats: stats.clone(),
            population: state.population.keys().cloned().collect(),
            labeled: state.labeled.hashes().cloned().collect(),
        });
        state.stats.push(stats);
    }

    /// One iteration: evaluate, refit predictors, run the GA and promote the
    /// best `N` offspring into the population.
    pub fn iterate(&self, state: &mut SearchState, history: &mut History) -> Result<(), NasError> {
        let k = state.iteration;
        let (rej0, fail0) = (state.rejected.len(), state.failed.len());
        let fresh = self.evaluate_pending(state, history, k)?;
        let preds = self.fit_predictors(&state.labeled)?;

        // Parents carry their true labels.
        let mut pop: Vec<Candidate> = state
            .labeled
            .iter()
            .map(|r| Candidate::new(r.chromosome.clone(), r.acc_avg, r.et_avg))
            .collect();
        if pop.is_empty() {
            pop = state
                .population
                .values()
                .map(|c| self.predict(&preds, c).map(|(a, e)| Candidate::new(c.clone(), a, e)))
                .collect::<Result<_, _>>()?;
        }
        let mut rng = self.rng(k as u64 + 1);
        let mut exclude: BTreeSet<ChromosomeHash> = state.population.keys().cloned().collect();
        let mut offspring: Vec<Candidate> = Vec::new();
        for g in 0..self.config.generations {
            let parents = select_parents(&pop, self.config.n, self.config.ranking);
            history.push(HistoryEvent::Selected {
                iteration: k,
                generation: g,
                hashes: parents.iter().map(|p| p.hash.clone()).collect(),
            });
            let chroms: Vec<Chromosome> = parents.iter().map(|p| p.chromosome.clone()).collect();
            let mut failure: Option<NasError> = None;
            let mut overheads: HashMap<ChromosomeHash, f64> = HashMap::new();
            let children = ga_generation(&chroms, &self.space, &self.config, &mut rng, &exclude, |c| {
                if failure.is_some() {
                    return false;
                }
                match self.costs.get(c) {
                    Ok(s) => {
                        overheads.insert(c.hash(), s.max_overhead);
                        if s.max_overhead > self.config.theta {
                            history.push(HistoryEvent::FilteredTheta {
                                iteration: k,
                                generation: Some(g),
                                hash: c.hash(),
                                max_overhead: s.max_overhead,
                            });
                            false
                        } else {
                            true
                        }
                    }
                    Err(e) => {
                        failure = Some(e);
                        false
                    }
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            let mut next = Vec::with_capacity(children.len());
            for c in children {
                let (acc, et) = self.predict(&preds, &c)?;
                let cand = Candidate::new(c, acc, et);
                history.push(HistoryEvent::Offspring {
                    iteration: k,
                    generation: g,
                    hash: cand.hash.clone(),
                    chromosome: cand.chromosome.clone(),
                    max_overhead: overheads[&cand.hash],
                    predicted_acc: acc,
                    predicted_et: et,
                });
                exclude.insert(cand.hash.clone());
                next.push(cand);
            }
            offspring.extend(next.iter().cloned());
            if !next.is_empty() {
                pop = next;
            }
        }
        let top = select_parents(&offspring, self.config.n, self.config.ranking);
        let mut promoted: Vec<ChromosomeHash> = top.iter().map(|c| c.hash.clone()).collect();
        promoted.sort();
        history.push(HistoryEvent::Promoted {
            iteration: k,
            hashes: promoted.clone(),
        });
        for c in top {
            state.population.insert(c.hash, c.chromosome);
        }
        let counts = (
            state.rejected.len() - rej0,
            state.failed.len() - fail0,
            offspring.len(),
            promoted.len(),
        );
        self.summarize(state, history, k, &fresh, counts, false);
        state.iteration += 1;
        Ok(())
    }

    /// Evaluate whatever the last iteration promoted.
    pub fn finish(&self, state: &mut SearchState, history: &mut History) -> Result<(), NasError> {
        let k = state.iteration;
        let (rej0, fail0) = (state.rejected.len(), state.failed.len());
        let fresh = self.evaluate_pending(state, history, k)?;
        let counts = (state.rejected.len() - rej0, state.failed.len() - fail0, 0, 0);
        self.summarize(state, history, k, &fresh, counts, true);
        state.finished = true;
        Ok(())
    }

    /// Full search. With `resume`, everything up to the last iteration
    /// summary is replayed and the run continues from there; the result is
    /// identical to an uninterrupted run. `checkpoint` is called after every
    /// iteration.
    pub fn run(
        &self,
        resume: Option<History>,
        mut checkpoint: impl FnMut(&History, &SearchState) -> Result<(), NasError>,
    ) -> Result<(SearchState, History), NasError> {
        let resumed = match resume.map(|mut h| (h.truncate_to_last_summary(), h)) {
            Some((true, h)) => {
                if h.config() != Some(&self.config) {
                    return Err(NasError::Resume("history was produced with a different configuration".into()));
                }
                let state = SearchState::replay(&h)?;
                Some((state, h))
            }
            _ => None,
        };
        let (mut state, mut history) = match resumed {
            Some(x) => x,
            None => {
                let mut h = History::new();
                h.push(self.started());
                let s = self.init_population(&mut h)?;
                (s, h)
            }
        };
        while !state.finished && state.iteration < self.config.iterations {
            self.iterate(&mut state, &mut history)?;
            checkpoint(&history, &state)?;
        }
        if !state.finished {
            self.finish(&mut state, &mut history)?;
            checkpoint(&history, &state)?;
        }
        Ok((state, history))
    }
}

/// Run one iteration of a configured search.
pub fn nas_iterate(run: &NasRun<'_>, state: &mut SearchState, history: &mut History) -> Result<(), NasError> {
    run.iterate(state, history)
}

/// Run a complete search without checkpoints.
pub fn run_search(
    space: SearchSpace,
    spec: AcceleratorSpec,
    config: NasConfig,
    evaluator: &dyn Evaluator,
) -> Result<(SearchState, History), NasError> {
    NasRun::new(space, spec, config, evaluator)?.run(None, |_, _| Ok(()))
}
