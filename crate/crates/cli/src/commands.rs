//! Subcommand implementations. Each writes its artifacts under the output
//! directory and prints a short human-readable report.

use std::fmt::Write as _;

use anyhow::{ensure, Context};
use coassembly::intention::io::{load_model, save_model};
use coassembly::intention::{
    adversarial_accuracy, attack_registry, iada_train, train, AttackConfig, GeometricExpert, IadaConfig, LabeledDataset,
    Mlp, TrainConfig,
};
use coassembly::sim::metrics::write_file;
use coassembly::sim::{compare, generate_demos, run_scenario, safety_matrix, Comparison, MetricsLog, Stats, SuiteRun};
use serde::Serialize;

use crate::cli::{CompareArgs, RunArgs, ServeArgs, SuiteArgs, TrainArgs};
use crate::server;
use crate::stream::Session;

/// Accuracy of one trained model on held-out demonstrations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub model: String,
    pub clean: f64,
    pub adversarial: f64,
}

pub fn accuracy_table(rows: &[AccuracyRow], epsilon: f64) -> String {
    let mut t = format!("{:<8} {:>8} {:>14}\n", "model", "clean", format!("adv eps={epsilon}"));
    for r in rows {
        let _ = writeln!(t, "{:<8} {:>8.4} {:>14.4}", r.model, r.clean, r.adversarial);
    }
    t
}

pub fn train_cmd(args: &TrainArgs) -> anyhow::Result<()> {
    let cfg = args.common.config(vec![args.seed], None, true, None);
    let base = cfg.scenario()?;
    let humans = cfg.humans()?;
    ensure!(args.trials > 0, "--trials must be positive");
    attack_registry().create(&args.attack)?;
    let demos = generate_demos(&base, &humans, args.trials, args.seed)?;
    let held_out = generate_demos(&base, &humans, 1, args.seed.wrapping_add(1000))?;
    let train_cfg = TrainConfig { epochs: args.epochs, seed: args.seed, ..TrainConfig::default() };
    let attack = AttackConfig { method: args.attack.clone(), epsilon: args.epsilon, ..AttackConfig::default() };
    println!("{} demonstration windows, {} held out", demos.len(), held_out.len());

    let row = |name: &str, m: &Mlp, data: &LabeledDataset| AccuracyRow {
        model: name.to_string(),
        clean: m.accuracy(data),
        adversarial: adversarial_accuracy(m, data, &attack),
    };
    let plain = train(&demos, &train_cfg)?;
    let mut rows = vec![row("plain", &plain, &held_out)];
    let model = if args.iada_rounds == 0 {
        plain
    } else {
        let iada = IadaConfig { rounds: args.iada_rounds, attack: attack.clone(), train: train_cfg };
        let robust = iada_train(&demos, &iada, &GeometricExpert::default())?.model;
        rows.push(row("iada", &robust, &held_out));
        robust
    };
    print!("{}", accuracy_table(&rows, args.epsilon));
    if let Some(dir) = args.model.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_model(&model, &args.model)?;
    let reloaded = load_model(&args.model)?;
    ensure!(reloaded == model, "model file {} did not reload identically", args.model.display());
    println!("model written to {}", args.model.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
}

pub fn run_cmd(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = args.common.config(vec![args.seed], args.mode.clone(), !args.no_safety, args.model.clone());
    let mut scenario = cfg.scenario()?;
    scenario.seed = args.seed;
    let model = match scenario.mode.as_str() {
        "proactive" => Some(cfg.require_model("proactive mode")?),
        _ => cfg.model()?,
    };
    let log = run_scenario(&scenario, model.as_ref())?;
    let stem = format!("{}-{}-{}", scenario.human.name, log.mode, args.seed);
    log.write(cfg.ensure_out()?, &stem)?;
    let t = &log.totals;
    println!(
        "{stem}: task {} s, surfaces [{}], min distance {:.3} m, {} safety triggers",
        fmt_opt(t.task_time),
        t.surface_times.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join(", "),
        t.min_distance,
        t.safety_triggers,
    );
    println!("logs written to {}", cfg.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunRow<'a> {
    scenario: &'a str,
    mode: &'a str,
    seed: u64,
    completed: bool,
    task_time: Option<f64>,
    min_distance: f64,
    safety_triggers: usize,
    emergency_ticks: usize,
}

fn runs_csv(logs: &[MetricsLog]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for l in logs {
        w.serialize(RunRow {
            scenario: &l.scenario,
            mode: &l.mode,
            seed: l.seed,
            completed: l.totals.completed,
            task_time: l.totals.task_time,
            min_distance: l.totals.min_distance,
            safety_triggers: l.totals.safety_triggers,
            emergency_ticks: l.totals.emergency_ticks,
        })?;
    }
    Ok(w.into_inner()?)
}

fn stats_cell(s: &Stats) -> String {
    format!("{:>7.2} {:>6.2} {:>7.2} {:>7.2}", s.avg, s.std, s.min, s.max)
}

pub fn comparison_table(c: &Comparison) -> String {
    let mut t = format!("{:<10} {:>30} {:>30} {:>30}\n", "", "task avg/std/min/max", "surface", "opening block");
    for (name, tt) in [("baseline", &c.baseline), ("proactive", &c.proactive)] {
        let _ = writeln!(t, "{name:<10} {} {} {}", stats_cell(&tt.task), stats_cell(&tt.surface), stats_cell(&tt.block));
    }
    let [task, surface, block] = c.reduction.map(|r| 100.0 * r);
    let _ = writeln!(t, "reduction  task {task:.1}%  surface {surface:.1}%  block {block:.1}%");
    if let Some(lead) = &c.recognition_lead {
        let _ = writeln!(t, "recognition lead {:.2} s (std {:.2})", lead.avg, lead.std);
    }
    t
}

pub fn compare_cmd(args: &CompareArgs) -> anyhow::Result<()> {
    let cfg = args.common.config(args.seeds.0.clone(), None, true, Some(args.model.clone()));
    let base = cfg.scenario()?;
    let model = cfg.require_model("compare")?;
    let (cmp, logs) = compare(&base, &cfg.humans()?, cfg.seeds()?, &model)?;
    let out = cfg.ensure_out()?;
    let summary = serde_json::to_string_pretty(&cmp)? + "\n";
    write_file(&out.join("summary.json"), summary.as_bytes())?;
    write_file(&out.join("runs.csv"), &runs_csv(&logs)?)?;
    if args.logs {
        for l in &logs {
            l.write(&out.join("runs"), &l.scenario)?;
        }
    }
    print!("{}", comparison_table(&cmp));
    println!("{} runs; summary written to {}", logs.len(), out.join("summary.json").display());
    Ok(())
}

/// One hazard run in the suite report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub hazard: String,
    pub subject: String,
    pub seed: u64,
    pub safety: bool,
    pub min_distance: f64,
    pub longest_unsafe_streak: usize,
    pub safety_triggers: usize,
    pub penetrated: bool,
}

impl From<&SuiteRun> for SuiteRow {
    fn from(r: &SuiteRun) -> Self {
        let d = r.log.min_distance();
        SuiteRow {
            hazard: r.hazard.clone(),
            subject: r.log.scenario.split('-').take(2).collect::<Vec<_>>().join("-"),
            seed: r.log.seed,
            safety: r.safety,
            min_distance: d,
            longest_unsafe_streak: r.log.longest_unsafe_streak(),
            safety_triggers: r.log.totals.safety_triggers,
            penetrated: d <= 0.0,
        }
    }
}

pub fn suite_cmd(args: &SuiteArgs) -> anyhow::Result<()> {
    let cfg = args.common.config(args.seeds.0.clone(), args.mode.clone(), true, args.model.clone());
    let base = cfg.scenario()?;
    let model = match base.mode.as_str() {
        "proactive" => Some(cfg.require_model("the proactive safety suite")?),
        _ => cfg.model()?,
    };
    let runs = safety_matrix(&base, &cfg.humans()?, cfg.seeds()?, model.as_ref())?;
    let rows: Vec<SuiteRow> = runs.iter().map(SuiteRow::from).collect();
    let out = cfg.ensure_out()?;
    write_file(&out.join("safety_suite.json"), (serde_json::to_string_pretty(&rows)? + "\n").as_bytes())?;
    println!("{:<22} {:>6} {:>5} {:>9} {:>7} {:>11}", "hazard", "safety", "runs", "min D (m)", "streak", "penetrated");
    let mut hazards: Vec<&str> = rows.iter().map(|r| r.hazard.as_str()).collect();
    hazards.dedup();
    for hazard in hazards {
        for safety in [true, false] {
            let group: Vec<&SuiteRow> = rows.iter().filter(|r| r.hazard == hazard && r.safety == safety).collect();
            let min_d = group.iter().map(|r| r.min_distance).fold(f64::INFINITY, f64::min);
            let streak = group.iter().map(|r| r.longest_unsafe_streak).max().unwrap_or(0);
            let hits = group.iter().filter(|r| r.penetrated).count();
            let on = if safety { "on" } else { "off" };
            println!("{hazard:<22} {on:>6} {:>5} {min_d:>9.3} {streak:>7} {hits:>11}", group.len());
        }
    }
    println!("report written to {}", out.join("safety_suite.json").display());
    Ok(())
}

pub fn serve_cmd(args: &ServeArgs) -> anyhow::Result<()> {
    let cfg = args.common.config(vec![args.seed], args.mode.clone(), !args.no_safety, args.model.clone());
    let mut scenario = cfg.scenario()?;
    scenario.seed = args.seed;
    let model = match scenario.mode.as_str() {
        "proactive" => Some(cfg.require_model("proactive mode")?),
        _ => cfg.model()?,
    };
    let session = Session::new(scenario, model, cfg.humans()?)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.listen).await.with_context(|| format!("binding {}", args.listen))?;
        println!("streaming on ws://{}/ws", listener.local_addr()?);
        server::serve(listener, session).await
    })
}

pub fn scenario_cmd() -> anyhow::Result<()> {
    println!("{}", coassembly::sim::Scenario::default_scenario().to_json());
    Ok(())
}
