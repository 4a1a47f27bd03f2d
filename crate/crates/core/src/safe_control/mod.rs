//! Hierarchical controller: PD tracking of planned waypoints with a safety
//! filter on the commanded joint accelerations.

pub mod ssa;

use serde::{Deserialize, Serialize};

use crate::geometry::{distance_rate, min_env_distance, ArmModel, ClosestPair, DistanceQuery, EnvironmentState, GeometryError, SafetySpec};
use crate::planner::Trajectory;
use crate::registry::Registry;

pub use ssa::{distance_acceleration, linearize, phi_rate, phi_target, project_halfspace_box, DistanceAcceleration, Halfspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    /// Index of the waypoint currently tracked.
    pub waypoint: usize,
}

impl RobotState {
    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        Self { q, qdot: vec![0.0; n], waypoint: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    pub d_min: f64,
    pub lambda: f64,
    /// Decay demanded of the index (per second) while it is positive.
    pub eta: f64,
    /// Symmetric acceleration bound; `None` uses each joint's model limit.
    pub u_limit: Option<f64>,
    pub dt: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self { d_min: 0.35, lambda: 0.5, eta: 2.0, u_limit: None, dt: 1.0 / 30.0 }
    }
}

impl SafetyParams {
    pub fn box_limits(&self, model: &ArmModel) -> (Vec<f64>, Vec<f64>) {
        let hi: Vec<f64> = model.joints.iter().map(|j| self.u_limit.unwrap_or(j.max_acceleration)).collect();
        (hi.iter().map(|h| -h).collect(), hi)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_min > 0.0 && self.lambda > 0.0 && self.dt > 0.0 && self.eta >= 0.0) {
            return Err("safety params need d_min, lambda, dt > 0 and eta >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingGains {
    pub kp: f64,
    pub kd: f64,
    /// Waypoint switch distance (rad).
    pub advance_tolerance: f64,
}

impl Default for TrackingGains {
    fn default() -> Self {
        Self { kp: 100.0, kd: 20.0, advance_tolerance: 0.02 }
    }
}

fn joint_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// PD acceleration toward `reference`, clamped to `[lo, hi]`.
pub fn track(reference: &[f64], state: &RobotState, gains: &TrackingGains, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    reference
        .iter()
        .zip(&state.q)
        .zip(&state.qdot)
        .zip(lo.iter().zip(hi))
        .map(|(((r, q), v), (l, h))| (gains.kp * (r - q) - gains.kd * v).clamp(*l, *h))
        .collect()
}

/// Move the tracked waypoint forward past every waypoint already within tolerance.
pub fn advance_waypoint(state: &mut RobotState, trajectory: &Trajectory, tolerance: f64) {
    while state.waypoint + 1 < trajectory.len() && joint_distance(&trajectory.waypoints[state.waypoint], &state.q) < tolerance {
        state.waypoint += 1;
    }
}

pub fn trajectory_complete(state: &RobotState, trajectory: &Trajectory, tolerance: f64) -> bool {
    state.waypoint + 1 >= trajectory.len() && joint_distance(trajectory.last(), &state.q) < tolerance
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyEval {
    pub phi: f64,
    pub distance: f64,
    pub distance_rate: f64,
    pub pair: Option<ClosestPair>,
}

pub fn robot_distance(model: &ArmModel, q: &[f64], env: &EnvironmentState, spec: &SafetySpec) -> Result<DistanceQuery, GeometryError> {
    Ok(min_env_distance(&model.forward_kinematics(q)?, env, spec))
}

/// `phi = d_min^2 - D^2 - lambda * D'`; negative infinity when nothing is to be avoided.
pub fn safety_index(
    model: &ArmModel,
    state: &RobotState,
    env: &EnvironmentState,
    spec: &SafetySpec,
    params: &SafetyParams,
) -> Result<SafetyEval, GeometryError> {
    let d = robot_distance(model, &state.q, env, spec)?;
    let Some(pair) = d.pair else {
        return Ok(SafetyEval { phi: f64::NEG_INFINITY, distance: d.distance, distance_rate: 0.0, pair: None });
    };
    let rate = distance_rate(Some(&pair), model, &state.q, &state.qdot, env)?;
    Ok(SafetyEval {
        phi: index_value(params.d_min, d.distance, rate, params.lambda),
        distance: d.distance,
        distance_rate: rate,
        pair: Some(pair),
    })
}

pub fn index_value(d_min: f64, distance: f64, rate: f64, lambda: f64) -> f64 {
    d_min * d_min - distance * distance - lambda * rate
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u_nominal: Vec<f64>,
    pub u_safe: Vec<f64>,
    pub safety_triggered: bool,
    pub emergency: bool,
    pub phi: f64,
    pub predicted_phi: f64,
    pub distance: f64,
    pub distance_rate: f64,
}

impl ControlOutput {
    fn passthrough(u: &[f64], eval: &SafetyEval) -> Self {
        Self {
            u_nominal: u.to_vec(),
            u_safe: u.to_vec(),
            safety_triggered: false,
            emergency: false,
            phi: eval.phi,
            predicted_phi: eval.phi,
            distance: eval.distance,
            distance_rate: eval.distance_rate,
        }
    }
}

/// Safety layer between the tracking controller and the plant.
pub trait SafetyFilter: Send + Sync {
    fn name(&self) -> &'static str;

    fn filter(
        &self,
        u: &[f64],
        model: &ArmModel,
        state: &RobotState,
        env: &EnvironmentState,
        spec: &SafetySpec,
        params: &SafetyParams,
    ) -> Result<ControlOutput, GeometryError>;
}

/// Safe set algorithm projection.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ssa;

impl SafetyFilter for Ssa {
    fn name(&self) -> &'static str {
        "ssa"
    }

    fn filter(
        &self,
        u: &[f64],
        model: &ArmModel,
        state: &RobotState,
        env: &EnvironmentState,
        spec: &SafetySpec,
        params: &SafetyParams,
    ) -> Result<ControlOutput, GeometryError> {
        let eval = safety_index(model, state, env, spec, params)?;
        ssa::project_safe(u, model, state, env, spec, params, &eval)
    }
}

/// Monitoring only: reports the index, never modifies the command.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unfiltered;

impl SafetyFilter for Unfiltered {
    fn name(&self) -> &'static str {
        "none"
    }

    fn filter(
        &self,
        u: &[f64],
        model: &ArmModel,
        state: &RobotState,
        env: &EnvironmentState,
        spec: &SafetySpec,
        params: &SafetyParams,
    ) -> Result<ControlOutput, GeometryError> {
        let eval = safety_index(model, state, env, spec, params)?;
        Ok(ControlOutput::passthrough(u, &eval))
    }
}

pub fn safety_filters() -> Registry<dyn SafetyFilter> {
    let mut r: Registry<dyn SafetyFilter> = Registry::new("safety filter");
    r.register("ssa", || Box::new(Ssa));
    r.register("none", || Box::new(Unfiltered));
    r
}

/// Semi-implicit Euler step with velocity and position limits.
pub fn integrate(model: &ArmModel, state: &RobotState, u: &[f64], dt: f64) -> RobotState {
    let mut next = state.clone();
    for (j, joint) in model.joints.iter().enumerate() {
        let mut v = (state.qdot[j] + u[j] * dt).clamp(-joint.max_velocity, joint.max_velocity);
        let mut q = state.q[j] + v * dt;
        if q < joint.lower || q > joint.upper {
            q = q.clamp(joint.lower, joint.upper);
            v = 0.0;
        }
        next.q[j] = q;
        next.qdot[j] = v;
    }
    next
}

/// One control tick: track, filter, integrate.
#[allow(clippy::too_many_arguments)]
pub fn control_step(
    model: &ArmModel,
    state: &RobotState,
    trajectory: &Trajectory,
    env: &EnvironmentState,
    spec: &SafetySpec,
    gains: &TrackingGains,
    params: &SafetyParams,
    filter: &dyn SafetyFilter,
) -> Result<(ControlOutput, RobotState), GeometryError> {
    model.check_dimension(&state.q)?;
    let mut state = state.clone();
    advance_waypoint(&mut state, trajectory, gains.advance_tolerance);
    let (lo, hi) = params.box_limits(model);
    let reference = &trajectory.waypoints[state.waypoint.min(trajectory.len() - 1)];
    let u = track(reference, &state, gains, &lo, &hi);
    let out = filter.filter(&u, model, &state, env, spec, params)?;
    let next = integrate(model, &state, &out.u_safe, params.dt);
    Ok((out, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Capsule, Contact, LabeledCapsule, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pd_is_zero_at_rest_on_reference() {
        let s = RobotState::at_rest(vec![0.3, -0.2]);
        let u = track(&[0.3, -0.2], &s, &TrackingGains::default(), &[-10.0; 2], &[10.0; 2]);
        assert_eq!(u, vec![0.0, 0.0]);
    }

    #[test]
    fn proportional_only() {
        let s = RobotState { q: vec![0.0], qdot: vec![3.0], waypoint: 0 };
        let g = TrackingGains { kp: 7.0, kd: 0.0, advance_tolerance: 0.02 };
        assert_eq!(track(&[0.2], &s, &g, &[-10.0], &[10.0]), vec![7.0 * 0.2]);
        assert_eq!(track(&[5.0], &s, &g, &[-10.0], &[10.0]), vec![10.0]);
    }

    #[test]
    fn critically_damped_step_has_no_overshoot() {
        let g = TrackingGains { kp: 25.0, kd: 10.0, advance_tolerance: 0.02 };
        let dt = 1.0 / 1000.0;
        let mut q = 0.0;
        let mut v = 0.0;
        let mut peak: f64 = 0.0;
        for _ in 0..5000 {
            let s = RobotState { q: vec![q], qdot: vec![v], waypoint: 0 };
            let u = track(&[1.0], &s, &g, &[-1e9], &[1e9])[0];
            v += u * dt;
            q += v * dt;
            peak = peak.max(q);
        }
        assert!(peak < 1.01, "overshoot {peak}");
        assert!((q - 1.0).abs() < 1e-3);
    }

    #[test]
    fn index_boundary_and_substitution() {
        assert_eq!(index_value(0.35, 0.35, 0.0, 0.5), 0.0);
        assert!((index_value(0.35, 0.5, 0.0, 0.5) + 0.1275).abs() < 1e-12);
    }

    fn moving_env(rng: &mut impl Rng) -> (EnvironmentState, SafetySpec) {
        let c = Vec3::new(rng.random_range(0.3..0.8), rng.random_range(-0.4..0.4), rng.random_range(0.3..0.9));
        let mut lc = LabeledCapsule::new("head", Capsule::new(c, c + Vec3::new(0.0, 0.0, 0.15), 0.1));
        let v = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        lc.velocity = [v, v];
        (EnvironmentState { human: vec![lc], ..Default::default() }, SafetySpec::new([("head", Contact::Avoid)]))
    }

    #[test]
    fn index_rate_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = ArmModel::default_six_dof();
        let p = SafetyParams::default();
        let h = 1e-4;
        let mut checked = 0;
        for _ in 0..60 {
            let (env, spec) = moving_env(&mut rng);
            let q: Vec<f64> = (0..6).map(|_| rng.random_range(-1.2..1.2)).collect();
            let qd: Vec<f64> = (0..6).map(|_| rng.random_range(-0.8..0.8)).collect();
            let u: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let at = |t: f64| {
                let s = RobotState {
                    q: q.iter().zip(&qd).zip(&u).map(|((a, v), u)| a + v * t + 0.5 * u * t * t).collect(),
                    qdot: qd.iter().zip(&u).map(|(v, u)| v + u * t).collect(),
                    waypoint: 0,
                };
                safety_index(&m, &s, &env.advanced(t), &spec, &p).unwrap()
            };
            let (e0, ep, em) = (at(0.0), at(h), at(-h));
            let pairs = [e0, ep, em].map(|e| e.pair.map(|p| p.robot));
            if pairs[0] != pairs[1] || pairs[0] != pairs[2] || e0.distance < 0.0 {
                continue;
            }
            let fd = (ep.phi - em.phi) / (2.0 * h);
            let s0 = RobotState { q: q.clone(), qdot: qd.clone(), waypoint: 0 };
            let acc = distance_acceleration(&m, &s0, &env, &spec).unwrap();
            let analytic = phi_rate(&e0, &acc, &u, p.lambda);
            assert!((fd - analytic).abs() < 1e-3, "fd {fd} analytic {analytic}");
            checked += 1;
        }
        assert!(checked > 40);
    }

    #[test]
    fn empty_scene_matches_pure_tracking() {
        let m = ArmModel::default_six_dof();
        let traj = Trajectory { waypoints: vec![vec![0.0; 6], vec![0.3, 0.5, 0.0, 0.4, 0.0, 0.2]], dt: 0.5 };
        let env = EnvironmentState::default();
        let spec = SafetySpec::default();
        let g = TrackingGains::default();
        let p = SafetyParams::default();
        let mut a = RobotState::at_rest(vec![0.0; 6]);
        let mut b = a.clone();
        for _ in 0..60 {
            let (out, next) = control_step(&m, &a, &traj, &env, &spec, &g, &p, &Ssa).unwrap();
            assert!(!out.safety_triggered);
            assert_eq!(out.phi, f64::NEG_INFINITY);
            a = next;
            advance_waypoint(&mut b, &traj, g.advance_tolerance);
            let (lo, hi) = p.box_limits(&m);
            let u = track(&traj.waypoints[b.waypoint], &b, &g, &lo, &hi);
            b = integrate(&m, &b, &u, p.dt);
            assert_eq!(a, b);
        }
        assert!(trajectory_complete(&a, &traj, 0.02));
    }

    #[test]
    fn active_constraint_is_satisfied_after_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let m = ArmModel::default_six_dof();
        let p = SafetyParams::default();
        let mut triggered = 0;
        for _ in 0..80 {
            let (env, spec) = moving_env(&mut rng);
            let s = RobotState {
                q: (0..6).map(|_| rng.random_range(-1.2..1.2)).collect(),
                qdot: (0..6).map(|_| rng.random_range(-0.5..0.5)).collect(),
                waypoint: 0,
            };
            let u: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
            let out = Ssa.filter(&u, &m, &s, &env, &spec, &p).unwrap();
            if out.predicted_phi <= -p.eta * p.dt && !out.safety_triggered {
                assert_eq!(out.u_safe, u);
            }
            if out.safety_triggered {
                triggered += 1;
                if !out.emergency {
                    assert!(out.predicted_phi <= 1e-9, "{}", out.predicted_phi);
                }
            }
        }
        assert!(triggered > 0);
    }
}
