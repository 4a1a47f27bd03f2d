//! Oracles shared by the integration tests. Each is a deliberately naive
//! re-derivation of a quantity the library computes efficiently.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use coassembly::geometry::{Capsule, EnvironmentState, SafetySpec, Vec3};
use coassembly::task_graph::{Insertion, TaskGraph};
use rand::Rng;

pub fn random_point(rng: &mut impl Rng, half: f64) -> Vec3 {
    Vec3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
}

pub fn random_capsule(rng: &mut impl Rng) -> Capsule {
    let a = random_point(rng, 1.0);
    // a quarter of the pairs get short or degenerate axes
    let b = if rng.random_bool(0.25) { a + random_point(rng, 0.01) } else { random_point(rng, 1.0) };
    Capsule::new(a, b, rng.random_range(0.0..0.2))
}

/// Dense sampling of both axes: `n` samples on `x`, and for each a window of
/// samples of `y` around the unclamped projection plus both endpoints.
pub fn sampled_capsule_distance(x: &Capsule, y: &Capsule, n: usize) -> f64 {
    let at = |c: &Capsule, t: f64| c.a + (c.b - c.a) * t;
    let steps = (n - 1) as f64;
    let dy = y.b - y.a;
    let len2 = dy.norm_squared();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let p = at(x, i as f64 / steps);
        let center = if len2 > 0.0 { ((p - y.a).dot(&dy) / len2 * steps).round() } else { 0.0 };
        for k in (center as i64 - 3)..=(center as i64 + 3) {
            let k = k.clamp(0, n as i64 - 1);
            best = best.min((p - at(y, k as f64 / steps)).norm());
        }
    }
    best - x.radius - y.radius
}

/// Minimum over every robot capsule and every avoid-flagged environment capsule.
pub fn exhaustive_env_distance(robot: &[Capsule], env: &EnvironmentState, spec: &SafetySpec) -> Option<f64> {
    let mut best: Option<f64> = None;
    for r in robot {
        for e in env.capsules().filter(|e| spec.is_avoid(&e.label)) {
            let d = r.distance(&e.capsule);
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    }
    best
}

/// Classifier trained on the default demonstrations, shared within a test binary.
pub fn default_model() -> &'static coassembly::intention::Mlp {
    use coassembly::intention::{train, TrainConfig};
    use coassembly::sim::{generate_demos, HumanModel, Scenario};
    static MODEL: std::sync::OnceLock<coassembly::intention::Mlp> = std::sync::OnceLock::new();
    MODEL.get_or_init(|| {
        let humans = HumanModel::defaults();
        let demos = generate_demos(&Scenario::default_scenario(), &humans[..2], 2, 1).unwrap();
        train(&demos, &TrainConfig::default()).unwrap()
    })
}

pub fn obs(blocks: &[u8]) -> Vec<Insertion> {
    blocks.iter().enumerate().map(|(i, &b)| Insertion { block: b, time: i as f64 }).collect()
}

/// Every root-started path as (block sequence, end node), by depth-first search over edges.
pub fn enumerate_paths(g: &TaskGraph) -> BTreeMap<Vec<u8>, BTreeSet<usize>> {
    let mut out: BTreeMap<Vec<u8>, BTreeSet<usize>> = BTreeMap::new();
    let mut stack = vec![(g.root, Vec::new())];
    while let Some((node, seq)) = stack.pop() {
        out.entry(seq.clone()).or_default().insert(node);
        for e in g.edges.iter().filter(|e| e.from == node) {
            let mut next = seq.clone();
            next.push(e.block);
            stack.push((e.to, next));
        }
    }
    out
}

pub fn permutations(items: &[u8]) -> Vec<Vec<u8>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// All complete admissible sequences: surface orders x within-surface orders.
pub fn admissible_sequences(surfaces: u8, per: u8) -> Vec<Vec<u8>> {
    let blocks_of = |s: u8| -> Vec<u8> { ((s - 1) * per + 1..=s * per).collect() };
    let mut out = Vec::new();
    for order in permutations(&(1..=surfaces).collect::<Vec<_>>()) {
        let mut partial: Vec<Vec<u8>> = vec![Vec::new()];
        for s in order {
            let orders = permutations(&blocks_of(s));
            partial = partial
                .iter()
                .flat_map(|p| orders.iter().map(move |o| p.iter().chain(o).copied().collect()))
                .collect();
        }
        out.extend(partial);
    }
    out
}

/// Expected node contents after `seq`, read straight off the sequence.
pub fn expected_state(seq: &[u8], per: u8) -> (BTreeSet<u8>, Option<u8>, u8) {
    let completed: BTreeSet<u8> = seq.iter().copied().collect();
    let Some(&last) = seq.last() else {
        return (completed, None, 0);
    };
    let surface = (last - 1) / per + 1;
    let done = completed.iter().filter(|&&b| (b - 1) / per + 1 == surface).count() as u8;
    if done == per {
        (completed, None, per)
    } else {
        (completed, Some(surface), done)
    }
}
