//! Command-line surface.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_seeds, RunConfig};

/// Seed list from `parse_seeds`.
#[derive(Debug, Clone, PartialEq)]
pub struct Seeds(pub Vec<u64>);

impl Seeds {
    fn parse(text: &str) -> Result<Self, String> {
        parse_seeds(text).map(Seeds)
    }
}

#[derive(Debug, Parser)]
#[command(name = "coassembly", version, about = "Proactive human-robot co-assembly simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate demonstrations, train the intention model and write it to disk.
    Train(TrainArgs),
    /// Run one scenario and write its telemetry and event logs.
    Run(RunArgs),
    /// Baseline versus proactive over subjects and seeds.
    Compare(CompareArgs),
    /// Scripted hazards with the safety filter on and off.
    SafetySuite(SuiteArgs),
    /// Stream a live simulation over WebSocket.
    Serve(ServeArgs),
    /// Print the built-in scenario as JSON.
    Scenario,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario JSON (defaults to the built-in scenario).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Subject models as a JSON array (defaults to the built-in subjects).
    #[arg(long)]
    pub humans: Option<PathBuf>,
    /// Restrict to the named subjects; repeatable.
    #[arg(long = "subject")]
    pub subjects: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl Common {
    pub fn config(&self, seeds: Vec<u64>, mode: Option<String>, safety: bool, model: Option<PathBuf>) -> RunConfig {
        RunConfig {
            scenario: self.scenario.clone(),
            out: self.out.clone(),
            seeds,
            mode,
            safety,
            model,
            humans: self.humans.clone(),
            subjects: self.subjects.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Where to write the model.
    #[arg(long, default_value = "model.txt")]
    pub model: PathBuf,
    /// Adversarial augmentation rounds; 0 trains on the demonstrations only.
    #[arg(long, default_value_t = 3)]
    pub iada_rounds: usize,
    /// Attack budget in feature units.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Registered attack name.
    #[arg(long, default_value = "pgd")]
    pub attack: String,
    /// Demonstration episodes per subject.
    #[arg(long, default_value_t = 2)]
    pub trials: usize,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Collaboration mode (`baseline` or `proactive`).
    #[arg(long)]
    pub mode: Option<String>,
    /// Turn the safety filter off.
    #[arg(long)]
    pub no_safety: bool,
    /// Intention model; required in proactive mode.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Seeds as a list or inclusive range, e.g. `1-10` or `1,4,7`.
    #[arg(long, default_value = "1-10", value_parser = Seeds::parse)]
    pub seeds: Seeds,
    #[arg(long)]
    pub model: PathBuf,
    /// Also write per-run telemetry and event CSVs.
    #[arg(long)]
    pub logs: bool,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "1-10", value_parser = Seeds::parse)]
    pub seeds: Seeds,
    /// Intention model; required when the scenario runs in proactive mode.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Collaboration mode for the hazard runs.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub no_safety: bool,
    #[arg(long)]
    pub model: Option<PathBuf>,
}
