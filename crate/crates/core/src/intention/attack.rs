use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Registered attack name.
    pub method: String,
    /// Infinity-norm budget in feature units.
    pub epsilon: f64,
    pub steps: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { method: "pgd".into(), epsilon: 0.05, steps: 10 }
    }
}

/// Input-space attack maximizing the classifier loss inside an epsilon box.
pub trait Attack: Send + Sync {
    fn name(&self) -> &'static str;

    /// Adversary for `(x, label)`. The result stays inside the box and never
    /// has lower loss than `x`.
    fn perturb(&self, model: &Mlp, x: &[f64], label: usize, cfg: &AttackConfig) -> Vec<f64>;
}

pub fn attack_registry() -> Registry<dyn Attack> {
    let mut r: Registry<dyn Attack> = Registry::new("attack");
    r.register("pgd", || Box::new(Pgd));
    r.register("fgsm", || Box::new(Fgsm));
    r
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sign of the input gradient of the loss.
pub fn ascent_direction(model: &Mlp, x: &[f64], label: usize) -> Vec<f64> {
    model.input_gradient(x, label).into_iter().map(sign).collect()
}

/// Clamp `v` into `[center - radius, center + radius]` such that the
/// computed deviation `|v - center|` never exceeds `radius` after rounding.
fn project(v: f64, center: f64, radius: f64) -> f64 {
    let mut v = v.clamp(center - radius, center + radius);
    while v - center > radius {
        v = v.next_down();
    }
    while center - v > radius {
        v = v.next_up();
    }
    v
}

/// Signed-gradient ascent with projection onto the box, keeping the best iterate.
fn signed_ascent(model: &Mlp, x: &[f64], label: usize, epsilon: f64, step: f64, steps: usize) -> Vec<f64> {
    if epsilon <= 0.0 || steps == 0 {
        return x.to_vec();
    }
    let mut best = x.to_vec();
    let mut best_loss = model.loss(x, label);
    let mut cur = x.to_vec();
    for _ in 0..steps {
        let dir = ascent_direction(model, &cur, label);
        for ((c, d), x0) in cur.iter_mut().zip(&dir).zip(x) {
            *c = project(*c + step * d, *x0, epsilon);
        }
        let loss = model.loss(&cur, label);
        if loss > best_loss {
            best_loss = loss;
            best.clone_from(&cur);
        }
    }
    best
}

/// Projected gradient ascent: K steps of size epsilon / 4.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pgd;

impl Attack for Pgd {
    fn name(&self) -> &'static str {
        "pgd"
    }

    fn perturb(&self, model: &Mlp, x: &[f64], label: usize, cfg: &AttackConfig) -> Vec<f64> {
        signed_ascent(model, x, label, cfg.epsilon, cfg.epsilon / 4.0, cfg.steps)
    }
}

/// Single full-budget signed-gradient step.
#[derive(Debug, Clone, Copy, Default)]
pub struct Fgsm;

impl Attack for Fgsm {
    fn name(&self) -> &'static str {
        "fgsm"
    }

    fn perturb(&self, model: &Mlp, x: &[f64], label: usize, cfg: &AttackConfig) -> Vec<f64> {
        signed_ascent(model, x, label, cfg.epsilon, cfg.epsilon, 1)
    }
}
