//! Joint-space trajectory planning toward an end-effector goal under an
//! inflated minimum-distance constraint.

use nalgebra::{DMatrix, DVector, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::geometry::{min_env_distance, ArmModel, EnvironmentState, GeometryError, Pose, SafetySpec, Vec3};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PlanError {
    #[error("goal unreachable: {0}")]
    Unreachable(String),
    #[error("no collision-free correction found for waypoint {waypoint}")]
    Infeasible { waypoint: usize },
    #[error("invalid planner input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    pub horizon: usize,
    pub dt: f64,
    pub goal_weight: f64,
    pub d_min: f64,
    /// Inflation added to `d_min` for human position uncertainty (kappa * sigma).
    pub uncertainty_margin: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.1,
            goal_weight: 1000.0,
            d_min: 0.35,
            uncertainty_margin: 0.04,
            max_iterations: 200,
            tolerance: 1e-10,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.horizon < 2 || !(self.d_min > 0.0) || !(self.tolerance > 0.0) || !(self.dt > 0.0) {
            return Err(PlanError::InvalidInput("need horizon >= 2 and positive d_min, dt, tolerance".into()));
        }
        Ok(())
    }

    pub fn clearance(&self) -> f64 {
        self.d_min + self.uncertainty_margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Vec<f64>>,
    pub dt: f64,
}

impl Trajectory {
    pub fn stationary(q: &[f64], n: usize, dt: f64) -> Self {
        Self { waypoints: vec![q.to_vec(); n.max(1)], dt }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.waypoints.last().expect("trajectory has waypoints")
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.len().saturating_sub(1)) as f64
    }

    /// Smoothness term of the planning cost.
    pub fn smoothness(&self) -> f64 {
        self.waypoints.windows(2).map(|w| sq_dist(&w[0], &w[1])).sum()
    }

    /// Linear interpolation at time `t` from the first waypoint.
    pub fn sample(&self, t: f64) -> Vec<f64> {
        if self.len() == 1 || t <= 0.0 {
            return self.waypoints[0].clone();
        }
        let x = t / self.dt;
        let i = x.floor() as usize;
        if i + 1 >= self.len() {
            return self.last().to_vec();
        }
        let f = x - i as f64;
        self.waypoints[i].iter().zip(&self.waypoints[i + 1]).map(|(a, b)| a + (b - a) * f).collect()
    }

    /// Same path sampled every `dt` seconds, ending exactly at the last waypoint.
    pub fn resampled(&self, dt: f64) -> Trajectory {
        let steps = (self.duration() / dt).ceil().max(1.0) as usize;
        let mut waypoints: Vec<Vec<f64>> = (0..steps).map(|k| self.sample(k as f64 * dt)).collect();
        waypoints.push(self.last().to_vec());
        Trajectory { waypoints, dt }
    }

    /// Check joint limits, per-step rate limits and clearance of every
    /// waypoint after the first.
    pub fn audit(
        &self,
        model: &ArmModel,
        env: &EnvironmentState,
        spec: &SafetySpec,
        clearance: f64,
    ) -> Result<(), PlanError> {
        for (k, q) in self.waypoints.iter().enumerate() {
            if !model.within_limits(q) {
                return Err(PlanError::InvalidInput(format!("waypoint {k} outside joint limits")));
            }
        }
        for (k, w) in self.waypoints.windows(2).enumerate() {
            for ((a, b), j) in w[0].iter().zip(&w[1]).zip(&model.joints) {
                if (b - a).abs() > j.max_velocity * self.dt + 1e-12 {
                    return Err(PlanError::InvalidInput(format!("step {k} exceeds velocity limit")));
                }
            }
        }
        for (k, q) in self.waypoints.iter().enumerate().skip(1) {
            if distance(model, q, env, spec)? < clearance - 1e-6 {
                return Err(PlanError::Infeasible { waypoint: k });
            }
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distance(model: &ArmModel, q: &[f64], env: &EnvironmentState, spec: &SafetySpec) -> Result<f64, GeometryError> {
    Ok(min_env_distance(&model.forward_kinematics(q)?, env, spec).distance)
}

fn distance_gradient(model: &ArmModel, q: &[f64], env: &EnvironmentState, spec: &SafetySpec) -> Result<Vec<f64>, GeometryError> {
    const H: f64 = 1e-6;
    let mut g = Vec::with_capacity(q.len());
    let mut qp = q.to_vec();
    for j in 0..q.len() {
        qp[j] = q[j] + H;
        let up = distance(model, &qp, env, spec)?;
        qp[j] = q[j] - H;
        let down = distance(model, &qp, env, spec)?;
        qp[j] = q[j];
        g.push((up - down) / (2.0 * H));
    }
    Ok(g)
}

/// Position error and rotation-vector error from `current` to `target`.
fn pose_error(target: &Pose, current: &Pose) -> [f64; 6] {
    let p = target.position - current.position;
    let r: Vec3 = (target.orientation * current.orientation.inverse()).scaled_axis();
    [p.x, p.y, p.z, r.x, r.y, r.z]
}

pub const IK_POSITION_TOL: f64 = 1e-3;
pub const IK_ORIENTATION_TOL: f64 = 1e-2;
pub const IK_MAX_ITERATIONS: usize = 200;

/// Damped least squares with a central-difference Jacobian.
///
/// Starts from `seed`; if that does not converge, restarts from the seed with
/// every link-spinning joint zeroed and then from half the seed.
pub fn inverse_kinematics(target: &Pose, model: &ArmModel, seed: &[f64]) -> Result<Vec<f64>, PlanError> {
    model.check_dimension(seed)?;
    if (target.position - model.shoulder()).norm() > model.reach() {
        return Err(PlanError::Unreachable("target beyond arm reach".into()));
    }
    let unrolled: Vec<f64> = seed
        .iter()
        .zip(&model.joints)
        .map(|(q, j)| {
            let link = j.capsule.b - j.capsule.a;
            if link.cross(&j.axis).norm() < 1e-9 * link.norm().max(1e-12) { 0.0 } else { *q }
        })
        .collect();
    let halved: Vec<f64> = seed.iter().map(|q| 0.5 * q).collect();
    for start in [seed.to_vec(), unrolled, halved] {
        if let Some(q) = damped_least_squares(target, model, start)? {
            return Ok(q);
        }
    }
    Err(PlanError::Unreachable(format!("no IK solution within {IK_MAX_ITERATIONS} iterations")))
}

fn damped_least_squares(target: &Pose, model: &ArmModel, mut q: Vec<f64>) -> Result<Option<Vec<f64>>, PlanError> {
    const DAMPING: f64 = 0.05;
    const H: f64 = 1e-6;
    let n = q.len();
    model.clamp_to_limits(&mut q);
    for _ in 0..=IK_MAX_ITERATIONS {
        let current = model.tool_pose(&q)?;
        let (pe, oe) = current.error_to(target);
        if pe < IK_POSITION_TOL && oe < IK_ORIENTATION_TOL {
            return Ok(Some(q));
        }
        let e = DVector::from_row_slice(&pose_error(target, &current));
        let mut jac = DMatrix::zeros(6, n);
        for j in 0..n {
            let mut qp = q.clone();
            qp[j] += H;
            let mut qm = q.clone();
            qm[j] -= H;
            let (tp, tm) = (model.tool_pose(&qp)?, model.tool_pose(&qm)?);
            let dp = (tp.position - tm.position) / (2.0 * H);
            let dr: Vec3 = (tp.orientation * tm.orientation.inverse()).scaled_axis() / (2.0 * H);
            for (r, v) in [dp.x, dp.y, dp.z, dr.x, dr.y, dr.z].into_iter().enumerate() {
                jac[(r, j)] = v;
            }
        }
        let jjt = &jac * jac.transpose() + DMatrix::identity(6, 6) * DAMPING * DAMPING;
        let Some(solved) = jjt.lu().solve(&e) else {
            break;
        };
        let mut dq = jac.transpose() * solved;
        let norm = dq.norm();
        if norm > 0.4 {
            dq *= 0.4 / norm;
        }
        for (qi, d) in q.iter_mut().zip(dq.iter()) {
            *qi += d;
        }
        model.clamp_to_limits(&mut q);
    }
    Ok(None)
}

/// Output of [`plan`] with its optimization record.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanReport {
    pub trajectory: Trajectory,
    pub goal_joints: Vec<f64>,
    pub cost: f64,
    /// Cost after each accepted iteration.
    pub cost_history: Vec<f64>,
}

struct Problem<'a> {
    model: &'a ArmModel,
    env: &'a EnvironmentState,
    spec: &'a SafetySpec,
    params: &'a PlannerParams,
    goal: Vec<f64>,
}

impl Problem<'_> {
    fn cost(&self, w: &[Vec<f64>]) -> f64 {
        let smooth: f64 = w.windows(2).map(|p| sq_dist(&p[0], &p[1])).sum();
        smooth + self.params.goal_weight * sq_dist(w.last().unwrap(), &self.goal)
    }

    /// Preconditioned gradient step on waypoints 1.., scaled by `alpha`.
    fn descend(&self, w: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
        let n = w.len();
        let mut out = w.to_vec();
        for k in 1..n {
            let last = k == n - 1;
            let curvature = if last { 2.0 + 2.0 * self.params.goal_weight } else { 4.0 };
            for j in 0..w[k].len() {
                let mut g = 2.0 * (w[k][j] - w[k - 1][j]);
                if last {
                    g += 2.0 * self.params.goal_weight * (w[k][j] - self.goal[j]);
                } else {
                    g += 2.0 * (w[k][j] - w[k + 1][j]);
                }
                out[k][j] -= alpha * g / curvature;
            }
            self.model.clamp_to_limits(&mut out[k]);
        }
        out
    }

    /// Push violating waypoints along the distance gradient until clear.
    fn project(&self, w: &mut [Vec<f64>]) -> Result<(), PlanError> {
        let target = self.params.clearance();
        for k in 1..w.len() {
            let mut ok = false;
            for _ in 0..100 {
                let d = distance(self.model, &w[k], self.env, self.spec)?;
                if d >= target {
                    ok = true;
                    break;
                }
                let g = distance_gradient(self.model, &w[k], self.env, self.spec)?;
                let g2: f64 = g.iter().map(|v| v * v).sum();
                if g2 < 1e-12 {
                    break;
                }
                let step = ((target - d) + 1e-4) / g2;
                for (q, gj) in w[k].iter_mut().zip(&g) {
                    *q += step.min(0.3 / g2.sqrt()) * gj;
                }
                self.model.clamp_to_limits(&mut w[k]);
            }
            if !ok {
                return Err(PlanError::Infeasible { waypoint: k });
            }
        }
        Ok(())
    }
}

/// Plan from `start` to the joint solution of `goal` over a frozen
/// environment forecast.
///
/// Minimizes `sum |q[k+1] - q[k]|^2 + w_g |q[n] - q_goal|^2` from a straight
/// joint-space interpolation, projecting every waypoint after the first onto
/// `d >= d_min + margin` after each step. Steps that raise the cost are
/// rejected with a halved step size. The first waypoint is the current
/// state and is not constrained.
pub fn plan(
    start: &[f64],
    goal: &Pose,
    env: &EnvironmentState,
    spec: &SafetySpec,
    model: &ArmModel,
    params: &PlannerParams,
) -> Result<PlanReport, PlanError> {
    params.validate()?;
    if !model.within_limits(start) {
        return Err(PlanError::InvalidInput("start outside joint limits".into()));
    }
    let goal_joints = inverse_kinematics(goal, model, start)?;
    let problem = Problem { model, env, spec, params, goal: goal_joints.clone() };
    let n = params.horizon;
    let mut w: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let f = k as f64 / (n - 1) as f64;
            start.iter().zip(&goal_joints).map(|(a, b)| a + (b - a) * f).collect()
        })
        .collect();
    problem.project(&mut w)?;
    let mut cost = problem.cost(&w);
    let mut history = vec![cost];
    let mut alpha = 0.5;
    for _ in 0..params.max_iterations {
        let mut candidate = problem.descend(&w, alpha);
        let accepted = problem.project(&mut candidate).is_ok() && {
            let c = problem.cost(&candidate);
            if c <= cost {
                let delta = cost - c;
                w = candidate;
                cost = c;
                history.push(c);
                if delta < params.tolerance {
                    break;
                }
                true
            } else {
                false
            }
        };
        if !accepted {
            alpha *= 0.5;
            if alpha < 1e-6 {
                break;
            }
        }
    }
    // Stretch the timing when a step would exceed the joint rate limits.
    let mut dt = params.dt;
    for pair in w.windows(2) {
        for ((a, b), j) in pair[0].iter().zip(&pair[1]).zip(&model.joints) {
            dt = dt.max((b - a).abs() / j.max_velocity);
        }
    }
    let trajectory = Trajectory { waypoints: w, dt };
    trajectory.audit(model, env, spec, params.clearance())?;
    Ok(PlanReport { trajectory, goal_joints, cost, cost_history: history })
}

/// Orientation helper for building pose targets.
pub fn orientation_from_euler(roll: f64, pitch: f64, yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(roll, pitch, yaw)
}
