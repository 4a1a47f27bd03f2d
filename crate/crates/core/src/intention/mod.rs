//! Intention classification: window features, the MLP classifier, input-space
//! attacks and iterative adversarial data augmentation.

mod attack;
mod iada;
pub mod io;
mod mlp;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{EnvironmentState, Vec3};

pub use attack::{attack_registry, Attack, AttackConfig, Fgsm, Pgd};
pub use iada::{adversarial_accuracy, iada_train, ExpertOracle, GeometricExpert, IadaConfig, IadaOutcome};
pub use mlp::{argmax, cross_entropy, mean_loss, softmax, train, Dense, Mlp, TrainConfig, HIDDEN};

pub const BLOCK_COUNT: usize = 12;
pub const LABEL_COUNT: usize = BLOCK_COUNT + 1;
pub const FEATURE_DIM: usize = BLOCK_COUNT * 4 + 1;
pub const WINDOW: usize = 5;
/// Displacements are divided by this length (m) to bring them near unit scale.
pub const DISPLACEMENT_SCALE: f64 = 0.5;
/// Label used for the right wrist.
pub const WRIST_PART: &str = "right_hand";

#[derive(Debug, thiserror::Error)]
pub enum IntentionError {
    #[error("feature vector has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("training data is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("malformed model file: {0}")]
    ModelFormat(String),
    #[error("malformed dataset: {0}")]
    DatasetFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Reaching block `i` (1-based) or idle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum IntentionLabel {
    Reach(u8),
    Idle,
}

impl IntentionLabel {
    pub fn index(self) -> usize {
        match self {
            Self::Reach(b) => b as usize - 1,
            Self::Idle => BLOCK_COUNT,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i < BLOCK_COUNT {
            Self::Reach(i as u8 + 1)
        } else {
            Self::Idle
        }
    }

    pub fn all() -> impl Iterator<Item = IntentionLabel> {
        (0..LABEL_COUNT).map(Self::from_index)
    }

    pub fn block(self) -> Option<u8> {
        match self {
            Self::Reach(b) => Some(b),
            Self::Idle => None,
        }
    }
}

impl fmt::Display for IntentionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Reach(b) => write!(f, "R{b}"),
            Self::Idle => write!(f, "Idle"),
        }
    }
}

impl FromStr for IntentionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "Idle" {
            return Ok(Self::Idle);
        }
        s.strip_prefix('R')
            .and_then(|n| n.parse::<u8>().ok())
            .filter(|n| (1..=BLOCK_COUNT as u8).contains(n))
            .map(Self::Reach)
            .ok_or_else(|| format!("unknown intention label `{s}`"))
    }
}

impl From<IntentionLabel> for String {
    fn from(l: IntentionLabel) -> String {
        l.to_string()
    }
}

impl TryFrom<String> for IntentionLabel {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Original demonstrations.
    #[serde(rename = "D0")]
    Original,
    /// Adversaries labeled by the expert.
    #[serde(rename = "D0_prime")]
    Verified,
    /// Adversaries labeled by the model itself.
    #[serde(rename = "D_adv")]
    Pseudo,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Original => "D0",
            Self::Verified => "D0_prime",
            Self::Pseudo => "D_adv",
        }
    }
}

impl FromStr for Provenance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "D0" => Ok(Self::Original),
            "D0_prime" => Ok(Self::Verified),
            "D_adv" => Ok(Self::Pseudo),
            _ => Err(format!("unknown provenance `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: IntentionLabel,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, features: Vec<f64>, label: IntentionLabel, provenance: Provenance) {
        self.samples.push(Sample { features, label, provenance });
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.samples.iter().filter(|s| s.provenance == provenance).count()
    }

    pub fn originals(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.provenance == Provenance::Original)
    }

    pub fn class_counts(&self) -> [usize; LABEL_COUNT] {
        let mut c = [0; LABEL_COUNT];
        for s in &self.samples {
            c[s.label.index()] += 1;
        }
        c
    }
}

/// Wrist position of the monitored hand, if present.
pub fn wrist_of(env: &EnvironmentState) -> Option<Vec3> {
    env.human_part(WRIST_PART).map(|c| c.capsule.a)
}

/// Window features: per block the scaled wrist-to-block displacement and the
/// closing speed, then the wrist speed. Missing history is padded with the
/// oldest state; missing blocks contribute zeros.
pub fn featurize(history: &[EnvironmentState], blocks: &[Vec3]) -> Vec<f64> {
    let samples: Vec<(f64, Vec3)> = history
        .iter()
        .rev()
        .take(WINDOW)
        .rev()
        .filter_map(|e| wrist_of(e).map(|w| (e.timestamp, w)))
        .collect();
    featurize_track(&samples, blocks)
}

/// Same as [`featurize`] over raw `(time, wrist)` samples, oldest first.
pub fn featurize_track(track: &[(f64, Vec3)], blocks: &[Vec3]) -> Vec<f64> {
    let mut out = vec![0.0; FEATURE_DIM];
    let (Some(&(t0, first)), Some(&(t1, last))) = (track.first(), track.last()) else {
        return out;
    };
    let span = t1 - t0;
    for (i, block) in blocks.iter().take(BLOCK_COUNT).enumerate() {
        let d = last - block;
        out[4 * i] = d.x / DISPLACEMENT_SCALE;
        out[4 * i + 1] = d.y / DISPLACEMENT_SCALE;
        out[4 * i + 2] = d.z / DISPLACEMENT_SCALE;
        if span > 0.0 {
            out[4 * i + 3] = ((first - block).norm() - d.norm()) / span;
        }
    }
    if span > 0.0 {
        out[FEATURE_DIM - 1] = (last - first).norm() / span;
    }
    out
}

/// Wrist-to-block distances (m) reconstructed from a feature vector.
pub fn block_distances(features: &[f64]) -> Vec<f64> {
    (0..BLOCK_COUNT)
        .map(|i| Vec3::new(features[4 * i], features[4 * i + 1], features[4 * i + 2]).norm() * DISPLACEMENT_SCALE)
        .collect()
}

/// Majority vote over the last three raw predictions; holds the previous
/// output when no label has two votes.
#[derive(Debug, Clone)]
pub struct MajorityFilter {
    recent: VecDeque<IntentionLabel>,
    size: usize,
    current: IntentionLabel,
}

impl Default for MajorityFilter {
    fn default() -> Self {
        Self::new(3)
    }
}

impl MajorityFilter {
    pub fn new(size: usize) -> Self {
        Self { recent: VecDeque::with_capacity(size), size: size.max(1), current: IntentionLabel::Idle }
    }

    pub fn push(&mut self, label: IntentionLabel) -> IntentionLabel {
        if self.recent.len() == self.size {
            self.recent.pop_front();
        }
        self.recent.push_back(label);
        let need = self.size / 2 + 1;
        if let Some(winner) = self
            .recent
            .iter()
            .find(|l| self.recent.iter().filter(|m| m == l).count() >= need)
        {
            self.current = *winner;
        }
        self.current
    }

    pub fn current(&self) -> IntentionLabel {
        self.current
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Capsule, LabeledCapsule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn env_with_wrist(t: f64, w: Vec3) -> EnvironmentState {
        EnvironmentState {
            human: vec![LabeledCapsule::new(WRIST_PART, Capsule::new(w, w + Vec3::new(-0.08, 0.0, 0.0), 0.04))],
            timestamp: t,
            ..Default::default()
        }
    }

    fn layout() -> Vec<Vec3> {
        (0..12).map(|i| Vec3::new(0.9, -0.5 + 0.09 * i as f64, 0.02)).collect()
    }

    /// Straightforward single-pass reference written without the window helpers.
    fn reference(track: &[(f64, Vec3)], blocks: &[Vec3]) -> Vec<f64> {
        let mut padded = track.to_vec();
        while padded.len() < WINDOW {
            padded.insert(0, track[0]);
        }
        let n = padded.len();
        let dt = padded[n - 1].0 - padded[0].0;
        let mut f = Vec::new();
        for b in blocks {
            let now = padded[n - 1].1 - b;
            let then = padded[0].1 - b;
            f.extend([now.x * 2.0, now.y * 2.0, now.z * 2.0]);
            f.push(if dt > 0.0 { (then.norm() - now.norm()) / dt } else { 0.0 });
        }
        f.push(if dt > 0.0 { (padded[n - 1].1 - padded[0].1).norm() / dt } else { 0.0 });
        f
    }

    #[test]
    fn stationary_wrist_has_no_speed() {
        let w = Vec3::new(1.0, 0.1, 0.2);
        let hist: Vec<_> = (0..5).map(|k| env_with_wrist(k as f64 / 30.0, w)).collect();
        let f = featurize(&hist, &layout());
        assert_eq!(f.len(), FEATURE_DIM);
        for i in 0..12 {
            assert_eq!(f[4 * i + 3], 0.0);
        }
        assert_eq!(f[48], 0.0);
    }

    #[test]
    fn approach_speed_projects_onto_target() {
        let blocks = layout();
        let target = blocks[4];
        let start = target + Vec3::new(0.3, 0.1, 0.2);
        let dir = (target - start).normalize();
        let hist: Vec<_> = (0..5)
            .map(|k| {
                let t = k as f64 / 30.0;
                env_with_wrist(t, start + dir * 0.5 * t)
            })
            .collect();
        let f = featurize(&hist, &blocks);
        assert!((f[4 * 4 + 3] - 0.5).abs() < 1e-9);
        for i in 0..12 {
            assert!(f[4 * i + 3] <= 0.5 + 1e-9);
        }
        assert!((f[48] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn matches_single_pass_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let blocks = layout();
        let mut track: Vec<(f64, Vec3)> = Vec::new();
        let mut w = Vec3::new(1.1, 0.0, 0.2);
        for k in 0..40 {
            w += Vec3::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), rng.random_range(-0.01..0.01));
            track.push((k as f64 / 30.0, w));
            let lo = track.len().saturating_sub(WINDOW);
            let hist: Vec<_> = track[lo..].iter().map(|(t, p)| env_with_wrist(*t, *p)).collect();
            let got = featurize(&hist, &blocks);
            let want = reference(&track[lo..], &blocks);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn labels_round_trip_through_text() {
        for l in IntentionLabel::all() {
            assert_eq!(l.to_string().parse::<IntentionLabel>().unwrap(), l);
            assert_eq!(IntentionLabel::from_index(l.index()), l);
        }
        assert!("R13".parse::<IntentionLabel>().is_err());
        assert!("R0".parse::<IntentionLabel>().is_err());
    }

    #[test]
    fn majority_filter_needs_two_votes() {
        let mut f = MajorityFilter::default();
        assert_eq!(f.push(IntentionLabel::Reach(5)), IntentionLabel::Idle);
        assert_eq!(f.push(IntentionLabel::Reach(5)), IntentionLabel::Reach(5));
        assert_eq!(f.push(IntentionLabel::Reach(6)), IntentionLabel::Reach(5));
        assert_eq!(f.push(IntentionLabel::Reach(7)), IntentionLabel::Reach(5));
        assert_eq!(f.push(IntentionLabel::Reach(7)), IntentionLabel::Reach(7));
    }
}
