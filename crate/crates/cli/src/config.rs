//! Command configuration: where the scenario, model and outputs live.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use coassembly::intention::io::load_model;
use coassembly::intention::Mlp;
use coassembly::sim::{HumanModel, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Scenario JSON; the built-in scenario when absent.
    pub scenario: Option<PathBuf>,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    /// Collaboration mode; the scenario's own when absent.
    pub mode: Option<String>,
    pub safety: bool,
    pub model: Option<PathBuf>,
    /// JSON array of subject models; the built-in subjects when absent.
    pub humans: Option<PathBuf>,
    /// Keep only these subjects (all when empty).
    pub subjects: Vec<String>,
}

impl RunConfig {
    pub fn scenario(&self) -> anyhow::Result<Scenario> {
        let mut s = match &self.scenario {
            Some(path) => Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))?,
            None => Scenario::default_scenario(),
        };
        if let Some(mode) = &self.mode {
            s.mode = mode.clone();
        }
        if !self.safety {
            s.safety_filter = "none".into();
        }
        s.validate()?;
        Ok(s)
    }

    pub fn model(&self) -> anyhow::Result<Option<Mlp>> {
        self.model
            .as_deref()
            .map(|p| load_model(p).with_context(|| format!("loading model {}", p.display())))
            .transpose()
    }

    /// The model, required because `why` needs predictions.
    pub fn require_model(&self, why: &str) -> anyhow::Result<Mlp> {
        match self.model()? {
            Some(m) => Ok(m),
            None => bail!("{why} needs a trained intention model; pass --model (see `coassembly train`)"),
        }
    }

    pub fn humans(&self) -> anyhow::Result<Vec<HumanModel>> {
        let all: Vec<HumanModel> = match &self.humans {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing subject models in {}", path.display()))?
            }
            None => HumanModel::defaults(),
        };
        if self.subjects.is_empty() {
            return Ok(all);
        }
        self.subjects
            .iter()
            .map(|name| {
                all.iter().find(|h| &h.name == name).cloned().with_context(|| format!("unknown subject `{name}`"))
            })
            .collect()
    }

    pub fn seeds(&self) -> anyhow::Result<&[u64]> {
        ensure!(!self.seeds.is_empty(), "at least one seed is required");
        Ok(&self.seeds)
    }

    pub fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn ensure_out(&self) -> anyhow::Result<&Path> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

/// Parse `7`, `1,3,5` or `1-10` (inclusive), or a mix such as `1-3,9`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let number = |s: &str| s.trim().parse::<u64>().map_err(|_| format!("`{s}` is not a seed"));
        match part.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi) = (number(lo)?, number(hi)?);
                if lo > hi {
                    return Err(format!("empty seed range `{part}`"));
                }
                seeds.extend(lo..=hi);
            }
            None => seeds.push(number(part)?),
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}
