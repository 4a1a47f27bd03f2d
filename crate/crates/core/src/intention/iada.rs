use serde::{Deserialize, Serialize};

use super::{
    attack_registry, block_distances, train, AttackConfig, IntentionError, IntentionLabel, LabeledDataset, Mlp,
    Provenance, Sample, TrainConfig,
};

/// Labels adversarial points, or rejects them as ambiguous.
pub trait ExpertOracle {
    fn label(&self, adversary: &[f64], source: &Sample) -> Option<IntentionLabel>;
}

impl<F> ExpertOracle for F
where
    F: Fn(&[f64], &Sample) -> Option<IntentionLabel>,
{
    fn label(&self, adversary: &[f64], source: &Sample) -> Option<IntentionLabel> {
        self(adversary, source)
    }
}

/// Ground-truth labeler of the simulated demonstrations: an adversary keeps
/// the intention of the reach it was derived from, unless its two nearest
/// blocks are within `ambiguity` meters of each other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricExpert {
    pub ambiguity: f64,
}

impl Default for GeometricExpert {
    fn default() -> Self {
        Self { ambiguity: 0.03 }
    }
}

impl ExpertOracle for GeometricExpert {
    fn label(&self, adversary: &[f64], source: &Sample) -> Option<IntentionLabel> {
        if source.label == IntentionLabel::Idle {
            return Some(IntentionLabel::Idle);
        }
        let mut d = block_distances(adversary);
        d.sort_by(f64::total_cmp);
        if d[1] - d[0] < self.ambiguity {
            None
        } else {
            Some(source.label)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IadaConfig {
    pub rounds: usize,
    pub attack: AttackConfig,
    pub train: TrainConfig,
}

impl Default for IadaConfig {
    fn default() -> Self {
        Self { rounds: 3, attack: AttackConfig::default(), train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub struct IadaOutcome {
    pub model: Mlp,
    pub dataset: LabeledDataset,
}

/// Iterative adversarial data augmentation.
///
/// Each round attacks every original point with the current model; expert
/// labels go to `D0_prime`, rejected adversaries are pseudo-labeled with the
/// model's prediction into `D_adv`, and the model is retrained from the same
/// seed on the union with the same number of gradient steps. Adversaries
/// equal to their source add nothing.
pub fn iada_train(
    data: &LabeledDataset,
    cfg: &IadaConfig,
    oracle: &dyn ExpertOracle,
) -> Result<IadaOutcome, IntentionError> {
    let attack = attack_registry()
        .create(&cfg.attack.method)
        .map_err(|e| IntentionError::DatasetFormat(e.to_string()))?;
    let mut dataset = data.clone();
    let mut model = train(&dataset, &cfg.train)?;
    for _ in 0..cfg.rounds {
        let mut added = Vec::new();
        for src in data.originals() {
            let adv = attack.perturb(&model, &src.features, src.label.index(), &cfg.attack);
            if adv == src.features {
                continue;
            }
            let (label, provenance) = match oracle.label(&adv, src) {
                Some(l) => (l, Provenance::Verified),
                None => (model.predict(&adv)?.0, Provenance::Pseudo),
            };
            added.push(Sample { features: adv, label, provenance });
        }
        if added.is_empty() {
            break;
        }
        dataset.samples.extend(added);
        model = train(&dataset, &budgeted(&cfg.train, data.len(), dataset.len()))?;
    }
    Ok(IadaOutcome { model, dataset })
}

/// Retraining keeps the number of gradient steps of the original run, so
/// a grown dataset does not simply mean longer training and larger weights.
fn budgeted(cfg: &TrainConfig, original: usize, current: usize) -> TrainConfig {
    let epochs = (cfg.epochs * original).div_ceil(current.max(1)).max(1);
    TrainConfig { epochs, ..*cfg }
}

/// Accuracy on points attacked against `model` itself.
pub fn adversarial_accuracy(model: &Mlp, data: &LabeledDataset, cfg: &AttackConfig) -> f64 {
    let Ok(attack) = attack_registry().create(&cfg.method) else {
        return 0.0;
    };
    if data.is_empty() {
        return 0.0;
    }
    let hits = data
        .samples
        .iter()
        .filter(|s| {
            let adv = attack.perturb(model, &s.features, s.label.index(), cfg);
            model.predict(&adv).map(|(l, _)| l == s.label).unwrap_or(false)
        })
        .count();
    hits as f64 / data.len() as f64
}
