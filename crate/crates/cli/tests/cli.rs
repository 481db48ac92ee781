use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use surrogacy::pipeline::{sha256_file, RunManifest};
use tempfile::TempDir;

const SMALL: &str = "\
seed = 21
n_users = 600
n_pretrain_users = 2500
n_listings = 120
truth_mc_users = 5000
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_surrogacy"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn surrogacy")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.toml")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

fn hashes(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.insert(
                p.file_name().unwrap().to_string_lossy().into_owned(),
                sha256_file(&p).unwrap(),
            );
        }
    }
    out
}

/// Header and rows of a small CSV.
fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str, row: usize) -> f64 {
    let i = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows[row][i].parse().unwrap()
}

/// Simulates and trains the small scenario into `root/sim` and `root/train`.
fn simulate_and_train(root: &Path, extra: &[&str]) -> (PathBuf, PathBuf) {
    let cfg = write_config(root, SMALL);
    let sim = root.join("sim");
    let train = root.join("train");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let files = [
        sim.join("train_events.jsonl"),
        sim.join("train_outcomes.jsonl"),
        sim.join("listings.csv"),
    ];
    let mut args = vec![
        "train",
        "--events",
        s(&files[0]),
        "--outcomes",
        s(&files[1]),
        "--listings",
        s(&files[2]),
        "--trees",
        "40",
        "--max-depth",
        "3",
        "--out",
        s(&train),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    (sim, train)
}

fn attribute(sim: &Path, train: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "attribute".to_string(),
        "--events".into(),
        s(&sim.join("events.jsonl")).into(),
        "--listings".into(),
        s(&sim.join("listings.csv")).into(),
        "--model".into(),
        s(&train.join("model.json")).into(),
        "--outcomes".into(),
        s(&sim.join("outcomes.jsonl")).into(),
        "--out".into(),
        s(out).into(),
    ];
    args.extend(extra.iter().map(|a| a.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run(&refs)
}

#[test]
fn simulate_creates_missing_nested_output_dir() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("a").join("b");
    ok(&["simulate", "--config", s(&tiny_config()), "--out", s(&out)]);
    let files = hashes(&out);
    assert!(files.len() >= 4, "{files:?}");
    for f in [
        "events.jsonl",
        "outcomes.jsonl",
        "listings.csv",
        "assignments.csv",
        "truth.json",
        "manifest.json",
    ] {
        assert!(files.contains_key(f), "missing {f}");
    }
    let manifest = RunManifest::load(&out).unwrap();
    assert_eq!(manifest.subcommand, "simulate");
    assert_eq!(manifest.seed, Some(3));
}

#[test]
fn simulate_is_reproducible_per_seed() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    let cfg = tiny_config();
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--seed",
        "5",
        "--out",
        s(&a),
    ]);
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--seed",
        "5",
        "--out",
        s(&b),
    ]);
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--seed",
        "6",
        "--out",
        s(&c),
    ]);
    assert_eq!(hashes(&a), hashes(&b));
    assert_ne!(hashes(&a)["events.jsonl"], hashes(&c)["events.jsonl"]);
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let bad_value = write_config(tmp.path(), "n_users = -4\n");
    assert_eq!(
        code(&["simulate", "--config", s(&bad_value), "--out", s(&out)]),
        2
    );
    let unknown = tmp.path().join("unknown.toml");
    fs::write(&unknown, "n_userz = 10\n").unwrap();
    assert_eq!(
        code(&["simulate", "--config", s(&unknown), "--out", s(&out)]),
        2
    );
    assert_eq!(
        code(&["simulate", "--config", s(&tmp.path().join("nope.toml"))]),
        2
    );
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(
        code(&["interleave", "--ranker-a", "1", "--out", s(&out)]),
        2
    );
}

#[test]
fn single_class_training_data_exits_3() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&tiny_config()), "--out", s(&sim)]);
    let empty = tmp.path().join("no_bookings.jsonl");
    fs::write(&empty, "").unwrap();
    let c = code(&[
        "train",
        "--events",
        s(&sim.join("train_events.jsonl")),
        "--outcomes",
        s(&empty),
        "--listings",
        s(&sim.join("listings.csv")),
        "--out",
        s(&tmp.path().join("train")),
    ]);
    assert_eq!(c, 3);
}

#[test]
fn malformed_event_line_exits_3() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&tiny_config()), "--out", s(&sim)]);
    let events = tmp.path().join("events.jsonl");
    let mut text = fs::read_to_string(sim.join("train_events.jsonl")).unwrap();
    text.push_str("{\"event_id\": 17}\n");
    fs::write(&events, text).unwrap();
    let c = code(&[
        "train",
        "--events",
        s(&events),
        "--outcomes",
        s(&sim.join("train_outcomes.jsonl")),
        "--listings",
        s(&sim.join("listings.csv")),
        "--out",
        s(&tmp.path().join("train")),
    ]);
    assert_eq!(c, 3);
}

#[test]
fn gbdt_and_logistic_reports_beat_constant_on_holdout() {
    let tmp = TempDir::new().unwrap();
    let (sim, train) = simulate_and_train(tmp.path(), &[]);
    let logistic = tmp.path().join("logistic");
    ok(&[
        "train",
        "--learner",
        "logistic",
        "--events",
        s(&sim.join("train_events.jsonl")),
        "--outcomes",
        s(&sim.join("train_outcomes.jsonl")),
        "--listings",
        s(&sim.join("listings.csv")),
        "--out",
        s(&logistic),
    ]);
    for dir in [&train, &logistic] {
        for f in [
            "model.json",
            "model_report.csv",
            "calibration.csv",
            "calibration.svg",
            "manifest.json",
        ] {
            assert!(dir.join(f).is_file(), "{} missing {f}", dir.display());
        }
        let (h, rows) = read_csv(&dir.join("model_report.csv"));
        let holdout = rows.iter().position(|r| r[0] == "holdout").unwrap();
        let ll = column(&h, &rows, "log_loss", holdout);
        let constant = column(&h, &rows, "constant_log_loss", holdout);
        assert!(ll <= constant, "{}: {ll} > {constant}", dir.display());
    }
}

#[test]
fn attribute_writes_one_column_per_cap_and_search_units() {
    let tmp = TempDir::new().unwrap();
    let (sim, train) = simulate_and_train(tmp.path(), &[]);
    let user = tmp.path().join("attr_user");
    let o = attribute(
        &sim,
        &train,
        &user,
        &["--cap", "1", "--cap", "0.1", "--audit-telescoping"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&user.join("metrics.csv"));
    let capped: Vec<&String> = h
        .iter()
        .filter(|c| c.starts_with("utility_capped_"))
        .collect();
    assert_eq!(capped, ["utility_capped_1", "utility_capped_0.1"]);
    for r in 0..rows.len() {
        assert!(column(&h, &rows, "utility_capped_0.1", r) <= 0.1);
    }

    let search = tmp.path().join("attr_search");
    let o = attribute(&sim, &train, &search, &["--unit", "search"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&search.join("metrics.csv"));
    assert_eq!(h[0], "unit_id");
    assert!(h.contains(&"booked_click".to_string()));
    let events = fs::read_to_string(sim.join("events.jsonl")).unwrap();
    assert!(!rows.is_empty());
    for r in &rows {
        assert!(r[0].contains("-s"), "{}", r[0]);
        assert!(
            events.contains(&format!("\"search_id\":\"{}\"", r[0])),
            "{}",
            r[0]
        );
    }
}

#[test]
fn evaluate_ratio_table_and_tamper_detection() {
    let tmp = TempDir::new().unwrap();
    let (sim, train) = simulate_and_train(tmp.path(), &[]);
    let attr = tmp.path().join("attr");
    let o = attribute(
        &sim,
        &train,
        &attr,
        &["--cap", "0.1", "--roster", s(&sim.join("assignments.csv"))],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = attr.join("metrics.csv");
    let assignments = sim.join("assignments.csv");
    let eval = tmp.path().join("eval");
    ok(&[
        "evaluate",
        "--metrics",
        s(&metrics),
        "--assignments",
        s(&assignments),
        "--out",
        s(&eval),
    ]);
    let (_, rows) = read_csv(&eval.join("variance_ratios.csv"));
    let base = rows.iter().find(|r| r[0] == "booking").unwrap();
    assert_eq!(base[1].parse::<f64>().unwrap(), 1.0);
    let util = rows.iter().find(|r| r[0] == "utility").unwrap();
    assert!(util[1].parse::<f64>().unwrap() < 1.0);
    for f in [
        "lifts.csv",
        "lifts.svg",
        "experiment_summary.csv",
        "manifest.json",
    ] {
        assert!(eval.join(f).is_file(), "missing {f}");
    }

    let mut text = fs::read_to_string(&metrics).unwrap();
    text.push('\n');
    fs::write(&metrics, text).unwrap();
    let eval2 = tmp.path().join("eval2");
    let args = [
        "evaluate",
        "--metrics",
        s(&metrics),
        "--assignments",
        s(&assignments),
        "--out",
        s(&eval2),
    ];
    assert_eq!(code(&args), 4);
    let mut forced = args.to_vec();
    forced.push("--force");
    ok(&forced);
}

#[test]
fn interleave_reports_one_section_per_policy() {
    let tmp = TempDir::new().unwrap();
    let (_, train) = simulate_and_train(tmp.path(), &[]);
    let cfg = tmp.path().join("config.toml");
    let out = tmp.path().join("il");
    ok(&[
        "interleave",
        "--config",
        s(&cfg),
        "--model",
        s(&train.join("model.json")),
        "--ranker-b",
        "1,0",
        "--queries",
        "300",
        "--out",
        s(&out),
    ]);
    let report = fs::read_to_string(out.join("winner_report.txt")).unwrap();
    for p in [
        "[utility_delta]",
        "[booked_all_clicks]",
        "[booked_first_click]",
    ] {
        assert_eq!(report.matches(p).count(), 1, "{p}\n{report}");
    }
    assert!(report.contains("legality violations: 0"));
    let (_, rows) = read_csv(&out.join("ledger.csv"));
    assert_eq!(rows.len(), 900);

    let no_model = tmp.path().join("il2");
    assert_eq!(
        code(&[
            "interleave",
            "--config",
            s(&cfg),
            "--queries",
            "10",
            "--out",
            s(&no_model)
        ]),
        2
    );
    ok(&[
        "interleave",
        "--config",
        s(&cfg),
        "--queries",
        "10",
        "--policy",
        "booked_first_click",
        "--out",
        s(&no_model),
    ]);
}

#[test]
fn report_all_fills_every_subdirectory() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("all");
    ok(&[
        "report-all",
        "--config",
        s(&tiny_config()),
        "--trees",
        "10",
        "--queries",
        "50",
        "--out",
        s(&out),
    ]);
    for sub in [
        "sim",
        "train",
        "attribute",
        "evaluate",
        "interleave",
        "behavior",
    ] {
        assert!(
            out.join(sub).join("manifest.json").is_file(),
            "missing {sub}"
        );
    }
    assert!(out.join("manifest.json").is_file());
}
