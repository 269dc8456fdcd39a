use std::collections::BTreeSet;

use rand::Rng;

use super::NasConfig;
use crate::arch::{Chromosome, ChromosomeHash, ExitGene, SearchSpace};

fn resample<R: Rng + ?Sized>(current: u8, options: usize, rng: &mut R) -> u8 {
    if options <= 1 {
        return current;
    }
    // Uniform over the other options.
    let pick = rng.random_range(0..options - 1) as u8;
    if pick >= current {
        pick + 1
    } else {
        pick
    }
}

fn mutate_gene<R: Rng + ?Sized>(gene: &mut ExitGene, space: &SearchSpace, rng: &mut R) {
    if rng.random_bool(0.5) {
        gene.head = resample(gene.head, space.p(), rng);
    } else {
        gene.quant = resample(gene.quant, space.q(), rng);
    }
}

/// Each gene group mutates with probability `rate`: a mount group either
/// flips its presence bit (a newly present exit gets fresh options) or
/// resamples one option; the final group resamples one option.
pub fn mutate<R: Rng + ?Sized>(chrom: &Chromosome, space: &SearchSpace, rate: f64, rng: &mut R) -> Chromosome {
    let mut c = chrom.clone();
    for m in &mut c.mounts {
        if !rng.random_bool(rate) {
            continue;
        }
        if !m.present || rng.random_bool(0.5) {
            m.present = !m.present;
            if m.present {
                m.gene = ExitGene {
                    head: rng.random_range(0..space.p()) as u8,
                    quant: rng.random_range(0..space.q()) as u8,
                };
            }
        } else {
            mutate_gene(&mut m.gene, space, rng);
        }
    }
    if rng.random_bool(rate) {
        mutate_gene(&mut c.last, space, rng);
    }
    c.canonical()
}

/// Uniform crossover over gene groups; each group comes whole from one
/// parent. Returns both complementary children.
pub fn crossover<R: Rng + ?Sized>(a: &Chromosome, b: &Chromosome, rng: &mut R) -> (Chromosome, Chromosome) {
    let mut x = a.clone();
    let mut y = b.clone();
    for (mx, my) in x.mounts.iter_mut().zip(y.mounts.iter_mut()) {
        if rng.random_bool(0.5) {
            std::mem::swap(mx, my);
        }
    }
    if rng.random_bool(0.5) {
        std::mem::swap(&mut x.last, &mut y.last);
    }
    (x.canonical(), y.canonical())
}

/// One generation of offspring from `parents`.
///
/// Parents are paired in order with a random partner; each pair crosses over
/// with the configured probability and both children are mutated. Children
/// rejected by `admissible`, equal to a parent, already in `exclude` or
/// already produced are dropped. Output is in production order.
pub fn ga_generation<R: Rng + ?Sized>(
    parents: &[Chromosome],
    space: &SearchSpace,
    config: &NasConfig,
    rng: &mut R,
    exclude: &BTreeSet<ChromosomeHash>,
    mut admissible: impl FnMut(&Chromosome) -> bool,
) -> Vec<Chromosome> {
    let mut seen: BTreeSet<ChromosomeHash> = parents.iter().map(|p| p.clone().canonical().hash()).collect();
    let mut out = Vec::new();
    for (i, pa) in parents.iter().enumerate() {
        let (x, y) = if parents.len() >= 2 && rng.random_bool(config.crossover_rate) {
            let mut j = rng.random_range(0..parents.len() - 1);
            if j >= i {
                j += 1;
            }
            crossover(pa, &parents[j], rng)
        } else {
            (pa.clone(), pa.clone())
        };
        for child in [x, y] {
            let child = mutate(&child, space, config.mutation_rate, rng);
            let h = child.hash();
            if exclude.contains(&h) || !seen.insert(h) {
                continue;
            }
            if admissible(&child) {
                out.push(child);
            }
        }
    }
    out
}
