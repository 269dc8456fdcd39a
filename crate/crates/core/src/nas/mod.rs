//! Constrained multi-objective genetic search over early-exit architectures.
//!
//! Each iteration evaluates the not-yet-labeled members of the population
//! `S^k`, keeps those whose last-exit ratio is at most `mu` in the labeled set
//! `P^k`, refits the weak predictors on `P^k` and runs a few GA generations
//! guided by them. The best `N` offspring join the population:
//! `S^(k+1) = Top_GA_N(S^k) ∪ S^k`. Every candidate that enters `S` has
//! exit overheads of at most `theta`.

mod ga;
mod history;
mod pareto;
mod search;
mod select;

pub use ga::{crossover, ga_generation, mutate};
pub use history::{audit_costs, audit_history, AuditReport, History, HistoryEvent};
pub use pareto::{dominates, et_reduction, mac_reduction, pareto_front, pareto_indices};
pub use search::{
    filter_exit_ratio, nas_iterate, run_search, CostCache, CostSummary, IterationStats, NasRun, ObjectiveStats,
    SearchState,
};
pub use select::{select_parents, Candidate};

use serde::{Deserialize, Serialize};

use crate::arch::ArchError;
use crate::eval::EvalError;
use crate::hwcost::{AllocationMode, HwError};
use crate::predict::PredictError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    Toy,
    #[default]
    Oracle,
    External,
}

impl std::str::FromStr for EvaluatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy" => Ok(Self::Toy),
            "oracle" => Ok(Self::Oracle),
            "external" => Ok(Self::External),
            other => Err(format!("unknown evaluator {other:?} (toy, oracle or external)")),
        }
    }
}

/// How candidates are ranked for parent selection and `Top_GA_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum RankingMode {
    /// Shortlist the `2N` most accurate, then keep the `N` cheapest of those.
    #[default]
    Lexicographic,
    /// Keep the `N` highest `acc_weight * acc - et_weight * ln(et)`.
    WeightedSum { acc_weight: f64, et_weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NasConfig {
    /// Selection size `N`.
    pub n: usize,
    pub generations: usize,
    /// Iterations `K`.
    pub iterations: usize,
    /// Cap on every exit overhead; may be infinite.
    #[serde(with = "history::lenient_f64")]
    pub theta: f64,
    /// Cap on the last-exit ratio.
    pub mu: f64,
    /// Probability that a gene group mutates.
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub initial_population: usize,
    /// Sampling attempts allowed per requested initial member.
    pub init_attempts_per_member: usize,
    pub seed: u64,
    pub evaluator: EvaluatorKind,
    pub ranking: RankingMode,
    pub ridge: f64,
    pub allocation: AllocationMode,
}

impl Default for NasConfig {
    fn default() -> Self {
        Self {
            n: 20,
            generations: 3,
            iterations: 6,
            theta: 0.5,
            mu: 0.5,
            mutation_rate: 0.1,
            crossover_rate: 0.9,
            initial_population: 50,
            init_attempts_per_member: 200,
            seed: 0,
            evaluator: EvaluatorKind::Oracle,
            ranking: RankingMode::Lexicographic,
            ridge: 1.0,
            allocation: AllocationMode::Greedy,
        }
    }
}

impl NasConfig {
    pub fn validate(&self) -> Result<(), NasError> {
        let bad = |m: String| Err(NasError::InvalidConfig(m));
        if self.n == 0 {
            return bad("N must be at least 1".into());
        }
        if !(self.theta > 0.0) {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return bad(format!("mu must be in (0, 1], got {}", self.mu));
        }
        for (name, r) in [("mutation_rate", self.mutation_rate), ("crossover_rate", self.crossover_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} must be in [0, 1], got {r}"));
            }
        }
        if self.initial_population == 0 {
            return bad("initial population must be nonempty".into());
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge strength must be >= 0, got {}", self.ridge));
        }
        if let RankingMode::WeightedSum { acc_weight, et_weight } = self.ranking {
            if !(acc_weight >= 0.0 && et_weight >= 0.0 && acc_weight + et_weight > 0.0) {
                return bad("weighted-sum ranking needs nonnegative weights, not both zero".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NasError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("found only {found} of {requested} initial architectures within the attempt budget")]
    InitExhausted { found: usize, requested: usize },
    #[error("history: {0}")]
    History(String),
    #[error("resume: {0}")]
    Resume(String),
    #[error("record set is empty")]
    Empty,
    #[error("static ET must be positive, got {0}")]
    ZeroStatic(f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Hw(#[from] HwError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}
