use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IntentionError, IntentionLabel, LabeledDataset, FEATURE_DIM, LABEL_COUNT};

pub const HIDDEN: usize = 32;

/// Fully connected layer, weights stored row-major (`outputs x inputs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            inputs: self.inputs,
            outputs: self.outputs,
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

/// 49 -> 32 (ReLU) -> 32 (ReLU) -> 13 classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 60, batch_size: 32, learning_rate: 0.02, momentum: 0.9, seed: 1 }
    }
}

/// Per-layer activations recorded during a forward pass.
struct Trace {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i` after its activation.
    acts: Vec<Vec<f64>>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean-free cross-entropy of one sample from its logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

impl Mlp {
    pub fn new(dims: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims.windows(2).map(|w| Dense::glorot(w[0], w[1], &mut rng)).collect();
        Self { layers, seed }
    }

    /// Freshly initialized intention classifier.
    pub fn intention(seed: u64) -> Self {
        Self::new(&[FEATURE_DIM, HIDDEN, HIDDEN, LABEL_COUNT], seed)
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.apply(acts.last().unwrap(), &mut out);
            if i != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        Trace { acts }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).acts.pop().unwrap()
    }

    pub fn loss(&self, x: &[f64], label: usize) -> f64 {
        cross_entropy(&self.logits(x), label)
    }

    /// Backpropagate the cross-entropy of one sample, accumulating `scale`
    /// times the parameter gradient into `grads`. Returns the loss and the
    /// gradient with respect to the input.
    fn backprop(&self, x: &[f64], label: usize, scale: f64, grads: Option<&mut [Dense]>) -> (f64, Vec<f64>) {
        let trace = self.trace(x);
        let logits = trace.acts.last().unwrap();
        let loss = cross_entropy(logits, label);
        let mut delta = softmax(logits);
        delta[label] -= 1.0;
        let mut grads = grads;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[i];
            if let Some(g) = grads.as_deref_mut() {
                let g = &mut g[i];
                for o in 0..layer.outputs {
                    g.bias[o] += scale * delta[o];
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, v) in row.iter_mut().zip(input) {
                        *w += scale * delta[o] * v;
                    }
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * delta[o];
                }
            }
            if i > 0 {
                // ReLU derivative of the previous layer's output
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        (loss, delta)
    }

    /// Gradient of the single-sample loss with respect to the input features.
    pub fn input_gradient(&self, x: &[f64], label: usize) -> Vec<f64> {
        self.backprop(x, label, 0.0, None).1
    }

    /// Mean loss and parameter gradient over `batch`.
    pub fn batch_gradient<'a>(&self, batch: impl IntoIterator<Item = (&'a [f64], usize)>) -> (f64, Vec<Dense>) {
        let items: Vec<_> = batch.into_iter().collect();
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let scale = 1.0 / items.len().max(1) as f64;
        let mut total = 0.0;
        for (x, y) in items {
            total += self.backprop(x, y, scale, Some(&mut grads)).0;
        }
        (total * scale, grads)
    }

    /// Flat parameter view in layer order: weights then bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        for l in &mut self.layers {
            if i < l.weights.len() {
                l.weights[i] = value;
                return;
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                l.bias[i] = value;
                return;
            }
            i -= l.bias.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn predict(&self, x: &[f64]) -> Result<(IntentionLabel, f64), IntentionError> {
        if x.len() != self.input_dim() {
            return Err(IntentionError::Dimension { expected: self.input_dim(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IntentionError::NonFinite);
        }
        let probs = softmax(&self.logits(x));
        let (idx, conf) = argmax(&probs);
        Ok((IntentionLabel::from_index(idx), conf))
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data
            .samples
            .iter()
            .filter(|s| self.predict(&s.features).map(|(l, _)| l == s.label).unwrap_or(false))
            .count();
        hits as f64 / data.len() as f64
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Mini-batch gradient descent with momentum on mean cross-entropy.
pub fn train(data: &LabeledDataset, cfg: &TrainConfig) -> Result<Mlp, IntentionError> {
    if data.is_empty() {
        return Err(IntentionError::EmptyDataset);
    }
    if let Some(s) = data.samples.iter().find(|s| s.features.len() != FEATURE_DIM) {
        return Err(IntentionError::Dimension { expected: FEATURE_DIM, got: s.features.len() });
    }
    let mut model = Mlp::intention(cfg.seed);
    let mut velocity: Vec<Dense> = model.layers.iter().map(Dense::zeros_like).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = cfg.batch_size.max(1);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let (loss, grads) = model.batch_gradient(
                chunk.iter().map(|&i| (data.samples[i].features.as_slice(), data.samples[i].label.index())),
            );
            if !loss.is_finite() {
                return Err(IntentionError::Diverged { epoch, loss });
            }
            for ((layer, g), v) in model.layers.iter_mut().zip(&grads).zip(&mut velocity) {
                let update = |p: &mut [f64], g: &[f64], v: &mut [f64]| {
                    for ((p, g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                        *v = cfg.momentum * *v - cfg.learning_rate * g;
                        *p += *v;
                    }
                };
                update(&mut layer.weights, &g.weights, &mut v.weights);
                update(&mut layer.bias, &g.bias, &mut v.bias);
            }
        }
        if !model.is_finite() {
            return Err(IntentionError::Diverged { epoch, loss: f64::NAN });
        }
    }
    Ok(model)
}

pub fn mean_loss(model: &Mlp, data: &LabeledDataset) -> f64 {
    data.samples.iter().map(|s| model.loss(&s.features, s.label.index())).sum::<f64>() / data.len().max(1) as f64
}
