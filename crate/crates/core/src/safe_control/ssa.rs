//! Safe set algorithm: one-step linearized safety constraint on joint
//! accelerations and its minimal-deviation projection.

use super::{robot_distance, RobotState, SafetyEval, SafetyParams};
use crate::geometry::{distance_rate, ArmModel, EnvironmentState, GeometryError, SafetySpec};

/// Halfspace `a . u <= b` over joint accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Halfspace {
    pub fn value(&self, u: &[f64]) -> f64 {
        self.a.iter().zip(u).map(|(a, u)| a * u).sum()
    }

    pub fn holds(&self, u: &[f64]) -> bool {
        self.value(u) <= self.b
    }
}

/// Second derivative of the distance as an affine map of the commanded
/// acceleration: `ddd(u) = gradient . u + drift`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceAcceleration {
    pub gradient: Vec<f64>,
    pub drift: f64,
}

impl DistanceAcceleration {
    pub fn at(&self, u: &[f64]) -> f64 {
        self.drift + self.gradient.iter().zip(u).map(|(g, u)| g * u).sum::<f64>()
    }
}

/// Numerical linearization of the distance acceleration around the current state.
///
/// The gradient comes from central differences of the distance over joint
/// angles; the drift is the central difference of the distance rate along
/// the zero-acceleration motion of robot and environment.
pub fn distance_acceleration(
    model: &ArmModel,
    state: &RobotState,
    env: &EnvironmentState,
    spec: &SafetySpec,
) -> Result<DistanceAcceleration, GeometryError> {
    const H: f64 = 1e-5;
    let n = state.q.len();
    let mut gradient = Vec::with_capacity(n);
    let mut q = state.q.clone();
    for j in 0..n {
        q[j] = state.q[j] + H;
        let up = robot_distance(model, &q, env, spec)?.distance;
        q[j] = state.q[j] - H;
        let down = robot_distance(model, &q, env, spec)?.distance;
        q[j] = state.q[j];
        gradient.push((up - down) / (2.0 * H));
    }
    let rate_at = |sign: f64| -> Result<f64, GeometryError> {
        let qs: Vec<f64> = state.q.iter().zip(&state.qdot).map(|(q, v)| q + sign * H * v).collect();
        let es = env.advanced(sign * H);
        let d = robot_distance(model, &qs, &es, spec)?;
        distance_rate(d.pair.as_ref(), model, &qs, &state.qdot, &es)
    };
    let drift = (rate_at(1.0)? - rate_at(-1.0)?) / (2.0 * H);
    Ok(DistanceAcceleration { gradient, drift })
}

/// Time derivative of the safety index under acceleration `u`.
pub fn phi_rate(eval: &SafetyEval, accel: &DistanceAcceleration, u: &[f64], lambda: f64) -> f64 {
    -2.0 * eval.distance * eval.distance_rate - lambda * accel.at(u)
}

/// Target for the predicted index: zero while safe, `-eta * dt` once unsafe.
pub fn phi_target(phi: f64, params: &SafetyParams) -> f64 {
    if phi > 0.0 {
        -params.eta * params.dt
    } else {
        0.0
    }
}

/// `phi[k+1] ~ phi[k] + dt * phi_rate(u) <= target` as a halfspace in `u`.
pub fn linearize(eval: &SafetyEval, accel: &DistanceAcceleration, params: &SafetyParams) -> Halfspace {
    let base = eval.phi + params.dt * (-2.0 * eval.distance * eval.distance_rate - params.lambda * accel.drift);
    Halfspace {
        a: accel.gradient.iter().map(|g| -params.lambda * params.dt * g).collect(),
        b: phi_target(eval.phi, params) - base,
    }
}

/// Euclidean projection of `u` onto `{a . v <= b} ∩ [lo, hi]`.
///
/// Returns `None` when the intersection is empty. Uses the closed-form
/// halfspace projection when it lands inside the box and otherwise a
/// bisection on the multiplier of the clamped solution `clamp(u - mu a)`,
/// whose constraint value is nonincreasing in `mu`.
pub fn project_halfspace_box(u: &[f64], h: &Halfspace, lo: &[f64], hi: &[f64]) -> Option<Vec<f64>> {
    let clamp = |v: Vec<f64>| -> Vec<f64> { v.iter().zip(lo).zip(hi).map(|((x, l), h)| x.clamp(*l, *h)).collect() };
    let start = clamp(u.to_vec());
    if h.holds(&start) {
        return Some(start);
    }
    let best_case: f64 = h.a.iter().zip(lo).zip(hi).map(|((a, l), u)| if *a > 0.0 { a * l } else { a * u }).sum();
    if best_case > h.b {
        return None;
    }
    let norm2: f64 = h.a.iter().map(|a| a * a).sum();
    if norm2 == 0.0 {
        return None;
    }
    let at = |mu: f64| clamp(u.iter().zip(&h.a).map(|(u, a)| u - mu * a).collect());
    let closed = (h.value(u) - h.b) / norm2;
    let candidate: Vec<f64> = u.iter().zip(&h.a).map(|(u, a)| u - closed * a).collect();
    if candidate.iter().zip(lo).zip(hi).all(|((x, l), h)| x >= l && x <= h) && h.holds(&candidate) {
        return Some(candidate);
    }
    let mut low = 0.0;
    let mut high = closed.max(1e-12);
    while !h.holds(&at(high)) {
        high *= 2.0;
        if !high.is_finite() {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (low + high);
        if h.holds(&at(mid)) {
            high = mid;
        } else {
            low = mid;
        }
        if high - low <= 1e-15 * high.max(1.0) {
            break;
        }
    }
    Some(at(high))
}

/// Full SSA step for the arm: evaluate, linearize, project.
pub(super) fn project_safe(
    u: &[f64],
    model: &ArmModel,
    state: &RobotState,
    env: &EnvironmentState,
    spec: &SafetySpec,
    params: &SafetyParams,
    eval: &SafetyEval,
) -> Result<super::ControlOutput, GeometryError> {
    let mut out = super::ControlOutput::passthrough(u, eval);
    if eval.pair.is_none() {
        return Ok(out);
    }
    let accel = distance_acceleration(model, state, env, spec)?;
    let h = linearize(eval, &accel, params);
    out.predicted_phi = eval.phi + params.dt * phi_rate(eval, &accel, u, params.lambda);
    if h.holds(u) {
        return Ok(out);
    }
    out.safety_triggered = true;
    let (lo, hi) = params.box_limits(model);
    match project_halfspace_box(u, &h, &lo, &hi) {
        Some(v) => {
            out.predicted_phi = eval.phi + params.dt * phi_rate(eval, &accel, &v, params.lambda);
            out.u_safe = v;
        }
        None => {
            out.emergency = true;
            out.u_safe = state
                .qdot
                .iter()
                .zip(lo.iter().zip(&hi))
                .map(|(v, (l, h))| (-v / params.dt).clamp(*l, *h))
                .collect();
            out.predicted_phi = eval.phi + params.dt * phi_rate(eval, &accel, &out.u_safe, params.lambda);
        }
    }
    Ok(out)
}
