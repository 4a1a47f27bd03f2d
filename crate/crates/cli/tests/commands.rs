use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;
use std::time::Instant;

use coassembly::intention::io::load_model;
use coassembly::intention::{train, TrainConfig};
use coassembly::sim::{generate_demos, HumanModel, Scenario};

fn coassembly(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coassembly")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = coassembly(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUICK: [&str; 8] = ["--subject", "subject-a", "--trials", "1", "--epochs", "20", "--seed", "4"];

/// A small model shared by the tests that need predictions.
fn quick_model() -> &'static PathBuf {
    static MODEL: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    &MODEL
        .get_or_init(|| {
            let dir = tempfile::tempdir().unwrap();
            let model = dir.path().join("model.txt");
            let mut args = vec!["train", "--iada-rounds", "0", "--model", path(&model)];
            args.extend(QUICK);
            ok(&args);
            (dir, model)
        })
        .1
}

#[test]
fn zero_iada_rounds_equals_plain_training() {
    let model = load_model(quick_model()).unwrap();
    let base = Scenario::default_scenario();
    let demos = generate_demos(&base, &HumanModel::defaults()[..1], 1, 4).unwrap();
    let plain = train(&demos, &TrainConfig { epochs: 20, seed: 4, ..TrainConfig::default() }).unwrap();
    assert_eq!(model, plain);
}

#[test]
fn train_prints_accuracy_table_for_both_models() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("nested/iada.txt");
    let mut args = vec!["train", "--iada-rounds", "1", "--model", path(&model)];
    args.extend(QUICK);
    let stdout = ok(&args);
    assert!(stdout.contains("clean") && stdout.contains("adv eps=0.05"), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("plain")));
    assert!(stdout.lines().any(|l| l.starts_with("iada")));
    assert!(load_model(&model).is_ok());
}

#[test]
fn run_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["run", "--seed", "7", "--mode", "baseline", "--out", path(out)]);
    }
    for file in ["subject-a-baseline-7_telemetry.csv", "subject-a-baseline-7_events.csv"] {
        let x = std::fs::read(a.join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn proactive_run_finishes_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let stdout = ok(&["run", "--mode", "proactive", "--model", path(quick_model()), "--out", path(dir.path())]);
    assert!(start.elapsed().as_secs_f64() < 60.0);
    assert!(stdout.contains("task") && !stdout.contains("task - s"), "{stdout}");
}

#[test]
fn missing_inputs_fail_with_a_message() {
    let out = coassembly(&["run", "--scenario", "/nonexistent/scenario.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario"));
    let out = coassembly(&["run", "--mode", "proactive"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
    let out = coassembly(&["compare", "--model", "m.txt", "--seeds", "9-3"]);
    assert!(!out.status.success());
}

#[test]
fn scenario_file_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.json");
    std::fs::write(&file, ok(&["scenario"])).unwrap();
    assert_eq!(Scenario::load(&file).unwrap(), Scenario::default_scenario());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["run", "--seed", "2", "--mode", "baseline", "--out", path(&a)]);
    ok(&["run", "--seed", "2", "--mode", "baseline", "--scenario", path(&file), "--out", path(&b)]);
    let name = "subject-a-baseline-2_events.csv";
    assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
}

#[test]
fn compare_summary_has_every_statistic_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["compare", "--seeds", "1-2", "--subject", "subject-a", "--model", path(quick_model()), "--out", path(out), "--logs"]);
    }
    let text = std::fs::read_to_string(a.join("summary.json")).unwrap();
    assert_eq!(text, std::fs::read_to_string(b.join("summary.json")).unwrap());
    assert_eq!(std::fs::read(a.join("runs.csv")).unwrap(), std::fs::read(b.join("runs.csv")).unwrap());
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut cells = 0;
    for mode in ["baseline", "proactive"] {
        for scope in ["task", "surface", "block"] {
            for stat in ["avg", "std", "min", "max"] {
                assert!(summary[mode][scope][stat].is_number(), "{mode}.{scope}.{stat}");
                cells += 1;
            }
            assert!(summary[mode][scope]["std"].as_f64().unwrap() >= 0.0);
        }
    }
    assert_eq!(cells, 24);
    let runs = std::fs::read_dir(a.join("runs")).unwrap().count();
    assert_eq!(runs, 2 * 2 * 2);
}

#[test]
fn safety_suite_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["safety-suite", "--seeds", "1", "--subject", "subject-a", "--mode", "baseline", "--out", path(dir.path())]);
    assert!(stdout.contains("left_hand_incursion"));
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("safety_suite.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3 * 2);
    for r in rows.iter().filter(|r| r["safety"] == true) {
        assert!(r["min_distance"].as_f64().unwrap() > 0.0, "{r}");
    }
}
