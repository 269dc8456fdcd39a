//! Release gate: every acceptance criterion, one PASS/FAIL line each.
//!
//! Runs as a plain binary so the lines are printed even when everything
//! passes. The process fails when the set of failing criteria differs from
//! [`KNOWN_FAILING`].

mod common;

use std::collections::{BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{dense_arch, gradient_gap, naive_front, quant_violations, random_chain, random_graph, random_points, Role};
use eenas_core::arch::{
    cumulative_macs, expand_layers, sample_architecture, search_space_size, BackboneSpec, Chromosome,
    EennArchitecture, ExitConfig, ExitHeadSpec, QuantScheme, SearchSpace,
};
use eenas_core::eval::{acc_avg, blobs_dataset, toy_dataset, train_toy, OracleEvaluator, ToyNet, TrainingConfig};
use eenas_core::hwcost::{
    allocate_with_costs, arch_cost, cost_report, et_subnetwork, schedule_assignment, AcceleratorSpec,
    AllocationMode,
};
use eenas_core::nas::{audit_costs, audit_history, et_reduction, pareto_front, run_search, HistoryEvent, NasConfig};
use eenas_core::predict::LabeledRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail, with the reason recorded in the README.
const KNOWN_FAILING: &[u32] = &[8];

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_weighted_accuracy() -> Result<String, String> {
    let rows = [
        ("INT8+8", [99.10, 96.86, 95.70, 66.36], [25.49, 15.31, 31.14, 28.06], 88.51),
        ("FP32+32", [98.48, 94.73, 93.80, 63.68], [34.21, 14.22, 28.22, 23.35], 88.50),
    ];
    let mut out = Vec::new();
    for (name, acc, er_pct, want) in rows {
        let er: Vec<f64> = er_pct.iter().map(|p| p / 100.0).collect();
        let got = acc_avg(&acc, &er).map_err(|e| e.to_string())?;
        ensure((got - want).abs() <= 0.01, || format!("{name}: {got:.4} vs {want}"))?;
        out.push(format!("{name} {got:.4}"));
    }
    Ok(out.join(", "))
}

fn enumeration_space(h: usize, p: usize, q: usize) -> SearchSpace {
    let mut text = String::from("input 4 4 2\nclasses 2\nkernel 1\npadding 0\nexpansion 1\nconv2d 1 - 2 1\n");
    for k in 0..h {
        text.push_str(&format!("conv2d 1 M{k} 2 1\n"));
    }
    text.push_str("conv2d 1 Z 2 1\n");
    let heads = [
        ExitHeadSpec::single().with_pooled(1, 1),
        ExitHeadSpec::double(4).with_pooled(1, 1),
        ExitHeadSpec::double(8).with_pooled(1, 1),
    ];
    SearchSpace::new(Arc::new(text.parse().unwrap()), heads[..p].to_vec(), [8u8, 4, 2][..q].to_vec(), 8).unwrap()
}

/// Build every architecture of the space directly (subset of mounts, then
/// one head and precision per exit) and check the encoder maps them one to
/// one onto chromosomes.
fn enumerate_architectures(space: &SearchSpace) -> Result<u64, String> {
    let (h, p, q) = (space.h(), space.p(), space.q());
    let per = 1 + p * q;
    let slots = per.pow(h as u32) * p * q;
    let mut hit = vec![false; slots];
    let mut count = 0u64;
    for mask in 0u32..(1 << h) {
        let mounts: Vec<usize> = (0..h).filter(|k| mask & (1 << k) != 0).chain([h]).collect();
        let combos = (p * q).pow(mounts.len() as u32);
        for mut x in 0..combos {
            let mut exits = Vec::with_capacity(mounts.len());
            let mut bits = Vec::with_capacity(mounts.len());
            for &m in &mounts {
                let opt = x % (p * q);
                x /= p * q;
                exits.push(ExitConfig {
                    mount: m,
                    head: space.heads[opt / q],
                });
                bits.push(space.quant_bits[opt % q]);
            }
            let arch = EennArchitecture::new(
                space.backbone.clone(),
                exits,
                QuantScheme {
                    backbone_bits: space.backbone_bits,
                    exit_bits: bits,
                    clips: Default::default(),
                },
            )
            .map_err(|e| e.to_string())?;
            let c = space.encode(&arch).map_err(|e| e.to_string())?;
            let mut idx = 0usize;
            for g in c.mounts.iter().rev() {
                let d = if g.present { 1 + g.gene.head as usize * q + g.gene.quant as usize } else { 0 };
                idx = idx * per + d;
            }
            idx += per.pow(h as u32) * (c.last.head as usize * q + c.last.quant as usize);
            if std::mem::replace(&mut hit[idx], true) {
                return Err(format!("two architectures encode to {c}"));
            }
            count += 1;
        }
    }
    Ok(count)
}

fn c2_space_size() -> Result<String, String> {
    let mut checked = 0;
    let mut largest = 0;
    for h in 0..=6 {
        for p in 1..=3 {
            for q in 1..=3 {
                let space = enumeration_space(h, p, q);
                let closed = search_space_size(h as u64, p as u64, q as u64).map_err(|e| e.to_string())?;
                let counted = enumerate_architectures(&space)?;
                ensure(counted == closed, || format!("H={h} p={p} q={q}: {counted} vs {closed}"))?;
                checked += 1;
                largest = largest.max(counted);
            }
        }
    }
    Ok(format!("{checked} (H,p,q) triples, largest {largest} architectures"))
}

fn c3_quantization() -> Result<String, String> {
    let mut total = 0;
    for (i, bits) in [4u8, 8].into_iter().enumerate() {
        for (j, clip) in [0.5, 1.0, 6.0].into_iter().enumerate() {
            let v = quant_violations(bits, clip, 1_000_000, (10 * i + j) as u64, bits == 4);
            ensure(v.total() == 0, || format!("b={bits} c={clip}: {v:?}"))?;
            total += 1_000_000;
        }
    }
    Ok(format!("{total} inputs, brute-force grid scan at b=4"))
}

fn c4_et_oracle() -> Result<String, String> {
    let spec = AcceleratorSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut exits = 0;
    for _ in 0..100 {
        let (g, roles) = random_graph(&mut rng);
        let (_, costs) = allocate_with_costs(&g, &spec, &AllocationMode::Greedy).map_err(|e| e.to_string())?;
        for i in 0..g.exit_count() {
            let mut e = 0.0f64;
            let mut t = 0u64;
            for (k, role) in roles.iter().enumerate() {
                let member = match *role {
                    Role::Backbone(s) => s <= i,
                    Role::Head(x) => x <= i,
                };
                if member {
                    e += costs[k].energy;
                    t += costs[k].latency;
                }
            }
            let naive = e * t as f64;
            let got = et_subnetwork(&costs, &g, i).map_err(|e| e.to_string())?;
            ensure(got == naive, || format!("exit {i}: {got} vs {naive}"))?;
            exits += 1;
        }
    }
    Ok(format!("100 graphs, {exits} exits, bitwise equal"))
}

fn c5_allocation() -> Result<String, String> {
    let spec = AcceleratorSpec::default();
    let cores = spec.compute_cores;
    if cores != 4 {
        return Err(format!("default spec has {cores} compute cores"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 1.0f64;
    let mut graphs = 0;
    for len in 1..=6 {
        for _ in 0..25 {
            let g = random_chain(&mut rng, len);
            let (greedy, _) = allocate_with_costs(&g, &spec, &AllocationMode::Greedy).map_err(|e| e.to_string())?;
            let mut best: Option<(u64, Vec<usize>)> = None;
            for code in 0..cores.pow(len as u32) {
                let mut x = code;
                let a: Vec<usize> = (0..len)
                    .map(|_| {
                        let c = x % cores;
                        x /= cores;
                        c
                    })
                    .collect();
                let (plan, _) = schedule_assignment(&g, &spec, &a).map_err(|e| e.to_string())?;
                if best.as_ref().is_none_or(|(m, _)| plan.makespan < *m) {
                    best = Some((plan.makespan, a));
                }
            }
            let (opt, a) = best.expect("at least one assignment");
            let (plan, _) = schedule_assignment(&g, &spec, &a).map_err(|e| e.to_string())?;
            plan.validate(&g).map_err(|e| format!("optimal plan infeasible: {e}"))?;
            ensure(greedy.makespan >= opt, || "greedy beat exhaustive search".into())?;
            worst = worst.max(greedy.makespan as f64 / opt as f64);
            graphs += 1;
        }
    }
    ensure(worst.is_finite(), || "unbounded factor".into())?;
    Ok(format!("{graphs} chains, worst greedy/optimal makespan factor {worst:.4}"))
}

fn reference_run() -> Result<(eenas_core::nas::SearchState, eenas_core::nas::History), String> {
    run_search(
        common::table3_space(),
        AcceleratorSpec::default(),
        NasConfig::default(),
        &OracleEvaluator::default(),
    )
    .map_err(|e| e.to_string())
}

fn c6_constraint_audit() -> Result<String, String> {
    let (_, history) = reference_run()?;
    let audit = audit_history(&history).map_err(|e| e.to_string())?;
    ensure(audit.theta_violations.is_empty(), || format!("theta: {:?}", audit.theta_violations))?;
    ensure(audit.mu_violations.is_empty(), || format!("mu: {:?}", audit.mu_violations))?;
    let recomputed = audit_costs(
        &history,
        &common::table3_space(),
        &AcceleratorSpec::default(),
        &AllocationMode::Greedy,
    )
    .map_err(|e| e.to_string())?;
    ensure(recomputed.is_empty(), || format!("recomputed overheads exceed theta: {recomputed:?}"))?;
    Ok(format!(
        "{} population members, {} labeled, 0 violations",
        audit.population, audit.labeled
    ))
}

fn c7_set_shape() -> Result<String, String> {
    let (_, history) = reference_run()?;
    let audit = audit_history(&history).map_err(|e| e.to_string())?;
    ensure(audit.shape_violations.is_empty(), || format!("{:?}", audit.shape_violations))?;
    ensure(audit.duplicate_evaluations.is_empty(), || format!("{:?}", audit.duplicate_evaluations))?;
    // independent pass over the recorded snapshots
    let mut prev: Option<(BTreeSet<String>, BTreeSet<String>)> = None;
    let mut admitted = BTreeSet::new();
    let mut evaluated = HashSet::new();
    for e in &history.events {
        match e {
            HistoryEvent::Evaluated { hash, .. } => {
                ensure(evaluated.insert(hash.clone()), || format!("{hash} evaluated twice"))?;
            }
            HistoryEvent::Admitted { hash, .. } => {
                admitted.insert(hash.0.clone());
            }
            HistoryEvent::IterationSummary { population, labeled, stats } => {
                let s: BTreeSet<String> = population.iter().map(|h| h.0.clone()).collect();
                let p: BTreeSet<String> = labeled.iter().map(|h| h.0.clone()).collect();
                ensure(p == admitted, || format!("iteration {}: P is not the union of admissions", stats.iteration))?;
                if let Some((ps, pp)) = &prev {
                    ensure(ps.is_subset(&s), || format!("iteration {}: S shrank", stats.iteration))?;
                    ensure(pp.is_subset(&p), || format!("iteration {}: P shrank", stats.iteration))?;
                }
                prev = Some((s, p));
            }
            _ => {}
        }
    }
    Ok(format!("{} iterations, {} evaluations, each once", audit.iterations, evaluated.len()))
}

fn c8_front_recovery() -> Result<String, String> {
    let space = common::four_mount_space();
    let spec = AcceleratorSpec::default();
    let cfg = NasConfig {
        iterations: 5,
        n: 10,
        ..NasConfig::default()
    };
    let oracle = OracleEvaluator::default();
    let (state, _) = run_search(space.clone(), spec.clone(), cfg.clone(), &oracle).map_err(|e| e.to_string())?;

    let costs = eenas_core::nas::CostCache::new(space.clone(), spec, AllocationMode::Greedy);
    let mut feasible = Vec::new();
    for c in common::enumerate(&space) {
        let cost = costs.get(&c).map_err(|e| e.to_string())?;
        if cost.max_overhead > cfg.theta {
            continue;
        }
        let arch = space.decode(&c).map_err(|e| e.to_string())?;
        let r = eenas_core::eval::Evaluator::evaluate(&oracle, &c, &arch).map_err(|e| e.to_string())?;
        if r.last_exit_ratio() > cfg.mu {
            continue;
        }
        let et = eenas_core::hwcost::et_avg(&cost.et, &r.exit_ratios).map_err(|e| e.to_string())?;
        feasible.push(LabeledRecord::new(c, r.acc_avg, et, r.exit_ratios, 0));
    }
    let truth: BTreeSet<_> = pareto_front(&feasible)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|r| r.hash)
        .collect();
    let found: BTreeSet<_> = state.front().into_iter().map(|r| r.hash).collect();
    let hits = truth.intersection(&found).count();
    let share = hits as f64 / truth.len() as f64;
    let msg = format!(
        "{hits}/{} true Pareto points recovered ({:.0}%), {} of {} architectures evaluated",
        truth.len(),
        100.0 * share,
        state.labeled.len() + state.rejected.len(),
        space.size().unwrap()
    );
    if share >= 0.8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c9_pareto() -> Result<String, String> {
    let space = common::table3_space();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pts = random_points(&mut rng, 1000);
    let mut seen = HashSet::new();
    let mut chroms: Vec<Chromosome> = Vec::new();
    let mut seed = 0;
    while chroms.len() < pts.len() {
        let c = sample_architecture(&space, seed);
        seed += 1;
        if seen.insert(c.hash()) {
            chroms.push(c);
        }
    }
    let records: Vec<LabeledRecord> = chroms
        .into_iter()
        .zip(&pts)
        .map(|(c, &(a, e))| LabeledRecord::new(c, a, e, vec![], 0))
        .collect();
    let got: BTreeSet<_> = pareto_front(&records)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|r| r.hash)
        .collect();
    let want: BTreeSet<_> = naive_front(&pts).into_iter().map(|i| records[i].hash.clone()).collect();
    ensure(got == want, || format!("{} vs {} front members", got.len(), want.len()))?;
    Ok(format!("1000 records, front of {}", want.len()))
}

fn c10_gradient() -> Result<String, String> {
    let arch = dense_arch(
        "input 1 1 3\nclasses 2\nkernel 1\npadding 0\nconv2d 1 A 4 1\nconv2d 1 K 3 1\n",
        &["A", "K"],
        1,
        32,
    );
    let mut net = ToyNet::new(&arch, 3).map_err(|e| e.to_string())?;
    // move off the ReLU6 kinks that zero-initialized biases sit on
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for p in net.params_mut() {
        *p += rng.random_range(-0.1..0.1);
    }
    let data = blobs_dataset(16, 3, 4);
    let xs: Vec<&[f64]> = data.features.iter().map(Vec::as_slice).collect();
    let gap = gradient_gap(&mut net, &xs, &data.labels, &[1.0, 1.0], 1e-4);
    ensure(gap < 1e-3, || format!("relative gap {gap:.3e}"))?;
    Ok(format!("{} parameters, worst relative gap {gap:.2e}", net.param_count()))
}

fn c11_toy_profitability() -> Result<String, String> {
    let space = SearchSpace::toy();
    let chrom = Chromosome::from_genes(&[1, 0, 0, 1, 0]).map_err(|e| e.to_string())?;
    let arch = space.decode(&chrom).map_err(|e| e.to_string())?;
    let data = toy_dataset(1500, 0);
    let cfg = TrainingConfig {
        epochs: 30,
        learning_rate: 0.05,
        batch_size: 32,
        ..TrainingConfig::default()
    };
    let report = train_toy(&arch, &data, &cfg).map_err(|e| e.to_string())?;
    let fixed = arch.static_counterpart();
    let baseline = train_toy(&fixed, &data, &cfg).map_err(|e| e.to_string())?;
    let spec = AcceleratorSpec::default();
    let et = cost_report(&arch, &spec, &report.exit_ratios).map_err(|e| e.to_string())?.et_avg;
    let static_et = arch_cost(&fixed, &spec, &AllocationMode::Greedy).map_err(|e| e.to_string())?.et[0];
    let reduction = et_reduction(et, static_et).map_err(|e| e.to_string())?;
    let er1 = report.exit_ratios[0];
    let msg = format!(
        "ER_1 {er1:.3}, ET reduction {reduction:.3}, ACC_avg {:.2} vs static {:.2}",
        report.acc_avg, baseline.acc_avg
    );
    ensure(er1 > 0.0 && reduction > 0.0 && (report.acc_avg - baseline.acc_avg).abs() <= 5.0, || msg.clone())?;
    Ok(msg)
}

fn c12_mac_plausibility() -> Result<String, String> {
    let bb = Arc::new(BackboneSpec::mobilenetv2_table3());
    let labels = ["D", "F", "I", "K"];
    let exits: Vec<ExitConfig> = labels
        .iter()
        .map(|l| ExitConfig {
            mount: bb.mount_index(l).unwrap(),
            head: ExitHeadSpec::single(),
        })
        .collect();
    let arch = EennArchitecture::new(
        bb,
        exits,
        QuantScheme {
            backbone_bits: 8,
            exit_bits: vec![8; 4],
            clips: Default::default(),
        },
    )
    .map_err(|e| e.to_string())?;
    let g = expand_layers(&arch).map_err(|e| e.to_string())?;
    let k = cumulative_macs(&g, 3).map_err(|e| e.to_string())?;
    let reference = 195_377_152.0;
    let dev = (k as f64 - reference) / reference;
    ensure(dev.abs() <= 0.10, || format!("{k} MACs, deviation {:.2}%", 100.0 * dev))?;
    Ok(format!("{k} MACs at K, deviation {:+.2}%", 100.0 * dev))
}

fn main() {
    let criteria: [(u32, &str, u64, Check); 12] = [
        (1, "weighted accuracy arithmetic", 1, c1_weighted_accuracy),
        (2, "search-space size vs enumeration", 10, c2_space_size),
        (3, "quantizer properties", 10, c3_quantization),
        (4, "sub-network ET vs naive oracle", 5, c4_et_oracle),
        (5, "allocation vs exhaustive assignment", 30, c5_allocation),
        (6, "constraint soundness audit", 10, c6_constraint_audit),
        (7, "population and labeled-set shape", 5, c7_set_shape),
        (8, "GA Pareto front recovery", 60, c8_front_recovery),
        (9, "Pareto front vs pairwise oracle", 5, c9_pareto),
        (10, "toy gradient check", 10, c10_gradient),
        (11, "toy end-to-end profitability", 120, c11_toy_profitability),
        (12, "MAC model plausibility", 1, c12_mac_plausibility),
    ];
    let mut failing = Vec::new();
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let took = start.elapsed();
        let result = match result {
            Ok(_) if took > Duration::from_secs(budget) => Err(format!("took {took:.2?}, budget {budget} s")),
            r => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        if result.is_err() {
            failing.push(id);
        }
        let note = if result.is_err() && KNOWN_FAILING.contains(&id) { " (known)" } else { "" };
        println!("[{tag}] {id:>2} {name}: {detail} [{took:.2?}]{note}");
    }
    if failing != KNOWN_FAILING {
        eprintln!("failing criteria {failing:?}, expected {KNOWN_FAILING:?}");
        std::process::exit(1);
    }
    println!("acceptance: {} passed, {} known failing", 12 - failing.len(), failing.len());
}
