use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eenas_core::nas::{pareto_indices, History, HistoryEvent};
use eenas_core::predict::LabeledRecord;

fn eenas(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eenas"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

const TOY_ORACLE: &str = r#"
backbone = "toy_dense"
out = "out"
[nas]
n = 4
iterations = 3
initial_population = 8
theta = 1e9
mu = 0.6
"#;

fn toy_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), TOY_ORACLE).unwrap();
    dir
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn space_reports_the_default_size() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&eenas(dir.path(), &["space"]));
    assert!(text.contains("H = 10"));
    assert!(text.contains("size (closed form) = 39062500"), "{text}");
    assert!(text.contains("size (binomial sum) = 39062500"));
}

#[test]
fn space_without_optional_mounts_has_pq_members() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("single.txt"),
        "input 1 1 8\nclasses 3\nkernel 1\npadding 0\nexpansion 1\nconv2d 1 K 32 1\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("run.toml"), "backbone = \"single.txt\"\n").unwrap();
    let text = ok(&eenas(dir.path(), &["--config", "run.toml", "space"]));
    assert!(text.contains("H = 0"), "{text}");
    assert!(text.contains("size (closed form) = 4\n"), "{text}");
}

#[test]
fn bundled_configs_load() {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let dir = tempfile::tempdir().unwrap();
    let t3 = ok(&eenas(dir.path(), &["--config", configs.join("table3.toml").to_str().unwrap(), "space"]));
    assert!(t3.contains("39062500"));
    let toy = ok(&eenas(dir.path(), &["--config", configs.join("toy.toml").to_str().unwrap(), "space"]));
    assert!(toy.contains("size (closed form) = 20"), "{toy}");
}

#[test]
fn cost_writes_cumulative_rows_deterministically() {
    let dir = toy_dir();
    std::fs::write(dir.path().join("arch.txt"), "[1, 0, 0, 1, 0]\n").unwrap();
    let args = ["--config", "run.toml", "cost", "--arch", "arch.txt", "--exit-ratios", "0.25,0.75"];
    ok(&eenas(dir.path(), &args));
    let first = read(dir.path().join("out/cost.csv"));
    let json = read(dir.path().join("out/cost.json"));
    ok(&eenas(dir.path(), &args));
    assert_eq!(read(dir.path().join("out/cost.csv")), first);
    assert_eq!(read(dir.path().join("out/cost.json")), json);

    let rows = csv_rows(&first);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], "A");
    assert_eq!(rows[1][1], "K");
    assert_eq!(rows[2][0], "avg");
    let et: Vec<f64> = rows[..2].iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(et[0] < et[1]);
    // ET is energy times latency over the layers each exit needs
    for r in &rows[..2] {
        let (e, t, et): (f64, f64, f64) = (r[4].parse().unwrap(), r[5].parse().unwrap(), r[6].parse().unwrap());
        assert!((e * t - et).abs() <= 1e-9 * et);
    }
    let avg: f64 = rows[2][6].parse().unwrap();
    assert!((avg - (0.25 * et[0] + 0.75 * et[1])).abs() <= 1e-9 * avg);
    let macs: Vec<u64> = rows[..2].iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(macs[0] < macs[1]);
}

#[test]
fn cost_rejects_bad_inputs() {
    let dir = toy_dir();
    std::fs::write(dir.path().join("arch.txt"), "1 0 0 1 0").unwrap();
    std::fs::write(dir.path().join("bad.txt"), "1 0 0").unwrap();
    let wrong_len = eenas(dir.path(), &["--config", "run.toml", "cost", "--arch", "arch.txt", "--exit-ratios", "1"]);
    assert_eq!(wrong_len.status.code(), Some(2));
    let not_sum = eenas(dir.path(), &["--config", "run.toml", "cost", "--arch", "arch.txt", "--exit-ratios", "0.5,0.6"]);
    assert!(!not_sum.status.success());
    let malformed = eenas(dir.path(), &["--config", "run.toml", "cost", "--arch", "bad.txt", "--exit-ratios", "1"]);
    assert_eq!(malformed.status.code(), Some(2));
}

#[test]
fn search_front_matches_the_labeled_set() {
    let dir = toy_dir();
    ok(&eenas(dir.path(), &["--config", "run.toml", "search"]));
    let out = dir.path().join("out");
    let labeled: Vec<LabeledRecord> = read(out.join("labeled.jsonl"))
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!labeled.is_empty());
    let pts: Vec<(f64, f64)> = labeled.iter().map(|r| (r.acc_avg, r.et_avg)).collect();
    let mut expected: Vec<String> = pareto_indices(&pts).into_iter().map(|i| labeled[i].hash.0.clone()).collect();
    let mut front: Vec<String> = csv_rows(&read(out.join("front.csv"))).into_iter().map(|r| r[0].clone()).collect();
    assert!(!front.is_empty());
    expected.sort();
    front.sort();
    assert_eq!(front, expected);
    for r in &labeled {
        assert!(*r.exit_ratios.last().unwrap() <= 0.6);
    }
    let scatter = csv_rows(&read(out.join("scatter.csv")));
    assert_eq!(scatter.len(), labeled.len());
    assert_eq!(scatter.iter().filter(|r| r[7] == "true").count(), front.len());
    for r in csv_rows(&read(out.join("front.csv"))) {
        assert_eq!(r[2].parse::<usize>().unwrap(), r[3].split(' ').count());
    }
    let iterations = csv_rows(&read(out.join("iterations.csv")));
    assert_eq!(iterations.len(), 4);
    assert_eq!(iterations.last().unwrap()[1], "true");

    // a second search into the same directory must not clobber it
    let again = eenas(dir.path(), &["--config", "run.toml", "search"]);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn resume_and_report_reproduce_the_outputs() {
    let full = toy_dir();
    ok(&eenas(full.path(), &["--config", "run.toml", "search"]));
    let files = ["history.jsonl", "labeled.jsonl", "front.csv", "scatter.csv", "iterations.csv"];
    let reference: Vec<String> = files.iter().map(|f| read(full.path().join("out").join(f))).collect();

    // cut after the second iteration summary and tear the next line
    let cut = toy_dir();
    let history = History::from_jsonl(&reference[0]).unwrap();
    let lines: Vec<&str> = reference[0].lines().collect();
    let summaries: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.contains("\"iteration_summary\""))
        .map(|(i, _)| i)
        .collect();
    assert!(summaries.len() >= 3, "{} events", history.len());
    let keep = summaries[1] + 1;
    let mut partial = lines[..keep].join("\n");
    partial.push('\n');
    partial.push_str(&lines[keep][..lines[keep].len() / 2]);
    std::fs::create_dir_all(cut.path().join("out")).unwrap();
    std::fs::write(cut.path().join("out/history.jsonl"), partial).unwrap();
    ok(&eenas(cut.path(), &["--config", "run.toml", "search", "--resume"]));
    for (f, want) in files.iter().zip(&reference) {
        assert_eq!(&read(cut.path().join("out").join(f)), want, "{f} differs after resume");
    }

    for f in &files[1..] {
        std::fs::remove_file(full.path().join("out").join(f)).unwrap();
    }
    let text = ok(&eenas(full.path(), &["--config", "run.toml", "report"]));
    for (f, want) in files.iter().zip(&reference) {
        assert_eq!(&read(full.path().join("out").join(f)), want, "{f} differs after report");
    }
    assert!(text.contains("ET reduction"));
    assert!(text.contains("MAC reduction"));
}

#[test]
fn resume_needs_a_history_and_the_same_config() {
    let dir = toy_dir();
    let missing = eenas(dir.path(), &["--config", "run.toml", "search", "--resume"]);
    assert_eq!(missing.status.code(), Some(2));
    ok(&eenas(dir.path(), &["--config", "run.toml", "search"]));
    let other_seed = eenas(dir.path(), &["--config", "run.toml", "--seed", "7", "search", "--resume"]);
    assert!(!other_seed.status.success());
    assert!(String::from_utf8_lossy(&other_seed.stderr).contains("different configuration"));
}

#[test]
fn report_on_the_wrong_space_or_empty_history_fails() {
    let dir = toy_dir();
    ok(&eenas(dir.path(), &["--config", "run.toml", "search"]));
    let wrong = eenas(dir.path(), &["--out", "out", "report"]);
    assert_eq!(wrong.status.code(), Some(2));
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let empty = eenas(dir.path(), &["--config", "run.toml", "report", "--history", "empty.jsonl"]);
    assert!(!empty.status.success());
    let unknown = eenas(dir.path(), &["--config", "run.toml", "report", "--hash", "0000000000000000"]);
    assert!(!unknown.status.success());
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases = [
        ("unknown_key.toml", "colour = \"red\"\n"),
        ("bad_theta.toml", "[nas]\ntheta = -1.0\n"),
        ("bad_mu.toml", "[nas]\nmu = 1.5\n"),
        ("no_backbone.toml", "backbone = \"missing.txt\"\n"),
        ("bad_space.toml", "[space]\nheads = []\nquant_bits = [8]\n"),
        ("external.toml", "evaluator = \"external\"\n[external]\ndir = \"nowhere\"\n"),
        ("toy_on_conv.toml", "evaluator = \"toy\"\n"),
    ];
    for (name, text) in cases {
        std::fs::write(d.join(name), text).unwrap();
        let out = eenas(d, &["--config", name, "--out", "o", "search"]);
        assert_eq!(out.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!d.join("o").exists(), "{name} wrote outputs");
    }
}

#[test]
fn missing_external_reports_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("reports")).unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "backbone = \"toy_dense\"\nevaluator = \"external\"\nout = \"out\"\n[external]\ndir = \"reports\"\n[nas]\nn = 2\niterations = 1\ninitial_population = 3\ntheta = 1e9\n",
    )
    .unwrap();
    let out = eenas(dir.path(), &["--config", "run.toml", "search"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tampered_history_fails_the_audit_with_code_four() {
    let dir = toy_dir();
    ok(&eenas(dir.path(), &["--config", "run.toml", "search"]));
    let path = dir.path().join("out/history.jsonl");
    let mut history = History::load(&path).unwrap();
    match &mut history.events[0] {
        HistoryEvent::Started { config, .. } => config.theta = 1e-9,
        e => panic!("unexpected first event {e:?}"),
    }
    history.save(&path).unwrap();
    let out = eenas(dir.path(), &["--config", "run.toml", "report"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn default_oracle_search_finishes_within_a_minute() {
    let dir = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    let text = ok(&eenas(dir.path(), &["--out", "out", "--evaluator", "oracle", "search"]));
    assert!(start.elapsed().as_secs() < 60);
    assert!(text.contains("7 iterations"), "{text}");
    assert!(!csv_rows(&read(dir.path().join("out/front.csv"))).is_empty());
}
