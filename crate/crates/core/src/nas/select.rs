use std::cmp::Ordering;

use super::RankingMode;
use crate::arch::{Chromosome, ChromosomeHash};

/// A chromosome with its (true or predicted) objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub chromosome: Chromosome,
    pub hash: ChromosomeHash,
    pub acc: f64,
    pub et: f64,
}

impl Candidate {
    pub fn new(chromosome: Chromosome, acc: f64, et: f64) -> Self {
        let chromosome = chromosome.canonical();
        Self {
            hash: chromosome.hash(),
            chromosome,
            acc,
            et,
        }
    }
}

fn by_acc(a: &Candidate, b: &Candidate) -> Ordering {
    b.acc.total_cmp(&a.acc).then_with(|| a.hash.cmp(&b.hash))
}

fn by_et(a: &Candidate, b: &Candidate) -> Ordering {
    a.et.total_cmp(&b.et).then_with(|| a.hash.cmp(&b.hash))
}

/// Pick `n` candidates. Ties are broken by hash ascending, so the result
/// does not depend on input order.
pub fn select_parents(population: &[Candidate], n: usize, mode: RankingMode) -> Vec<Candidate> {
    let mut pool = population.to_vec();
    if pool.len() < 2 * n {
        log::debug!("selecting from {} candidates, fewer than 2N = {}", pool.len(), 2 * n);
    }
    match mode {
        RankingMode::Lexicographic => {
            pool.sort_by(by_acc);
            pool.truncate(2 * n);
            pool.sort_by(by_et);
        }
        RankingMode::WeightedSum { acc_weight, et_weight } => {
            let score = |c: &Candidate| acc_weight * c.acc - et_weight * c.et.max(f64::MIN_POSITIVE).ln();
            pool.sort_by(|a, b| score(b).total_cmp(&score(a)).then_with(|| a.hash.cmp(&b.hash)));
        }
    }
    pool.truncate(n);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(i: u8, acc: f64, et: f64) -> Candidate {
        let mut genes = vec![0u8; 5];
        genes[3] = i % 2;
        genes[4] = i / 2;
        Candidate::new(Chromosome::from_genes(&genes).unwrap(), acc, et)
    }

    #[test]
    fn two_stage_example() {
        let pop = vec![cand(0, 90.0, 5.0), cand(1, 80.0, 1.0), cand(2, 85.0, 2.0), cand(3, 70.0, 9.0)];
        let sel = select_parents(&pop, 1, RankingMode::Lexicographic);
        assert_eq!(sel.len(), 1);
        assert_eq!((sel[0].acc, sel[0].et), (85.0, 2.0));
    }

    #[test]
    fn identical_predictions_fall_back_to_hash_order() {
        let pop: Vec<Candidate> = (0..4).map(|i| cand(i, 50.0, 1.0)).collect();
        let mut reversed = pop.clone();
        reversed.reverse();
        let a = select_parents(&pop, 2, RankingMode::Lexicographic);
        let b = select_parents(&reversed, 2, RankingMode::Lexicographic);
        assert_eq!(a, b);
        let mut hashes: Vec<_> = pop.iter().map(|c| c.hash.clone()).collect();
        hashes.sort();
        assert_eq!(a.iter().map(|c| c.hash.clone()).collect::<Vec<_>>(), hashes[..2].to_vec());
    }

    #[test]
    fn half_population_sorts_everything_by_et() {
        let pop = vec![cand(0, 90.0, 5.0), cand(1, 80.0, 1.0), cand(2, 85.0, 2.0), cand(3, 70.0, 9.0)];
        let sel = select_parents(&pop, 2, RankingMode::Lexicographic);
        assert_eq!(sel.iter().map(|c| c.et).collect::<Vec<_>>(), vec![1.0, 2.0]);
    }

    #[test]
    fn weighted_sum_mode() {
        let pop = vec![cand(0, 90.0, 100.0), cand(1, 89.0, 1.0)];
        let sel = select_parents(
            &pop,
            1,
            RankingMode::WeightedSum {
                acc_weight: 1.0,
                et_weight: 1.0,
            },
        );
        assert_eq!(sel[0].acc, 89.0);
    }
}
