//! The discrete-time world and its tick function.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{EnvironmentState, LabeledCapsule, Vec3};
use crate::intention::{featurize_track, IntentionLabel, MajorityFilter, Mlp, WINDOW};
use crate::planner::{plan, PlannerParams, Trajectory};
use crate::policy::{collaborate, goal_pose, GoalKind, PolicyTable};
use crate::registry::Registry;
use crate::safe_control::{control_step, safety_filters, ControlOutput, RobotState, SafetyFilter};
use crate::task_graph::{BlockId, Insertion, NodeId};

use super::human::{BodyPose, Phase, Posture, Segment};
use super::metrics::{Event, EventKind, MetricsLog, TelemetryRecord, Totals};
use super::scenario::{Hazard, Scenario};
use super::SimError;

/// Fastest the wrist follows an externally supplied target (m/s).
const OVERRIDE_SPEED: f64 = 1.5;
/// Rate at which the torso lean changes (m/s).
const LEAN_RATE: f64 = 0.4;
/// Wait before retrying a failed plan (s).
const PLAN_RETRY: f64 = 0.5;
/// Links near the tool that a left-hand incursion aims at.
const DISTAL_LINKS: usize = 2;
/// Correlation time of the wrist position noise (s).
const NOISE_CORRELATION: f64 = 0.5;
/// Lean added while the left hand reaches for the robot (m).
const INCURSION_LEAN: f64 = 0.25;

/// How the robot learns which surface to present.
pub trait CollaborationMode: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether the subject asks for every new surface and waits for the
    /// robot before reaching.
    fn commands_surfaces(&self) -> bool;

    /// Whether perception needs the intention model.
    fn needs_model(&self) -> bool {
        false
    }

    /// Goal requested from perception on this tick.
    fn perceive(&self, world: &mut WorldState, ctx: &Context) -> Result<Option<GoalKind>, SimError>;
}

/// Manual protocol: the robot only acts on spoken commands.
#[derive(Debug, Clone, Copy, Default)]
pub struct Baseline;

impl CollaborationMode for Baseline {
    fn name(&self) -> &'static str {
        "baseline"
    }

    fn commands_surfaces(&self) -> bool {
        true
    }

    fn perceive(&self, _: &mut WorldState, _: &Context) -> Result<Option<GoalKind>, SimError> {
        Ok(None)
    }
}

/// Goals chosen from the predicted intention and inferred task progress.
#[derive(Debug, Clone, Copy, Default)]
pub struct Proactive;

impl CollaborationMode for Proactive {
    fn name(&self) -> &'static str {
        "proactive"
    }

    fn commands_surfaces(&self) -> bool {
        false
    }

    fn needs_model(&self) -> bool {
        true
    }

    fn perceive(&self, world: &mut WorldState, ctx: &Context) -> Result<Option<GoalKind>, SimError> {
        let model = ctx.model.as_ref().ok_or_else(|| SimError::Config("proactive mode needs a trained model".into()))?;
        let track: Vec<(f64, Vec3)> = world.wrist_track.iter().copied().collect();
        let features = featurize_track(&track, &ctx.scenario.blocks);
        let (raw, confidence) = model.predict(&features)?;
        world.predictions += 1;
        world.confidence = confidence;
        let label = world.smoother.push(raw);
        if label != world.prediction {
            world.prediction = label;
            world.event(EventKind::Intention, label.block(), None, label.to_string());
        }
        let key = (label, world.task);
        if world.last_decision == Some(key) {
            return Ok(None);
        }
        world.last_decision = Some(key);
        let goal = collaborate(label, world.task, &ctx.scenario.graph, &ctx.table)?;
        world.alert = goal == GoalKind::Alert;
        match goal {
            GoalKind::DisplaySurface(_) => Ok(Some(goal)),
            GoalKind::Alert => {
                world.event(EventKind::Alert, label.block(), None, label.to_string());
                Ok(None)
            }
            GoalKind::HoldCurrent => Ok(None),
        }
    }
}

pub fn collaboration_modes() -> Registry<dyn CollaborationMode> {
    let mut r: Registry<dyn CollaborationMode> = Registry::new("collaboration mode");
    r.register("baseline", || Box::new(Baseline));
    r.register("proactive", || Box::new(Proactive));
    r
}

#[derive(Debug, Clone, PartialEq)]
enum HazardState {
    Armed,
    Out { path: Segment, hold_until: f64 },
    Back { path: Segment },
    Spent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanState {
    pub phase: Phase,
    /// Index of the current block in `sequence`.
    pub next: usize,
    pub sequence: Vec<BlockId>,
    pub right_wrist: Vec3,
    pub left_wrist: Vec3,
    pub lean: f64,
    /// Right wrist as observed, with sensing noise.
    pub observed_wrist: Vec3,
    commanded: BTreeSet<u8>,
    hazard: HazardState,
    /// Early-reach hazard: lean in from the first robot motion until the first insertion.
    early_lean: bool,
}

/// Everything that changes during a run.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub tick: u64,
    pub clock: f64,
    pub robot: RobotState,
    pub env: EnvironmentState,
    pub task: NodeId,
    pub insertions: Vec<Insertion>,
    pub prediction: IntentionLabel,
    pub confidence: f64,
    pub goal: Option<GoalKind>,
    /// Requested goal whose plan failed, with the retry time.
    pub pending: Option<(GoalKind, f64)>,
    pub trajectory: Trajectory,
    pub trajectory_start: f64,
    pub human: HumanState,
    /// Externally supplied wrist target that overrides the script.
    pub wrist_override: Option<Vec3>,
    pub last_control: Option<ControlOutput>,
    pub alert: bool,
    pub events: Vec<Event>,
    pub telemetry: Vec<TelemetryRecord>,
    pub predictions: usize,
    pub planner_calls: usize,
    smoother: MajorityFilter,
    wrist_track: VecDeque<(f64, Vec3)>,
    commands: Vec<(u8, f64)>,
    last_decision: Option<(IntentionLabel, NodeId)>,
    previous_body: Option<Vec<LabeledCapsule>>,
    noise: Option<Vec3>,
    noise_rng: ChaCha8Rng,
    motion_rng: ChaCha8Rng,
}

impl WorldState {
    fn event(&mut self, kind: EventKind, block: Option<BlockId>, surface: Option<u8>, detail: impl Into<String>) {
        self.events.push(Event { time: self.clock, kind, block, surface, detail: detail.into() });
    }

    /// Recent `(time, observed wrist)` samples, oldest first.
    pub fn wrist_track_snapshot(&self) -> Vec<(f64, Vec3)> {
        self.wrist_track.iter().copied().collect()
    }

    pub fn done(&self) -> bool {
        self.human.phase == Phase::Done
    }
}

/// Immutable inputs shared by every tick.
pub struct Context {
    pub scenario: Scenario,
    pub model: Option<Mlp>,
    pub table: PolicyTable,
}

pub struct Simulation {
    pub ctx: Context,
    mode: Box<dyn CollaborationMode>,
    filter: Box<dyn SafetyFilter>,
}

impl Simulation {
    pub fn new(scenario: Scenario, model: Option<Mlp>) -> Result<Self, SimError> {
        scenario.validate()?;
        let mode = collaboration_modes().create(&scenario.mode).map_err(|e| SimError::Config(e.to_string()))?;
        if mode.needs_model() && model.is_none() {
            return Err(SimError::Config(format!("{} mode needs a trained intention model", mode.name())));
        }
        let filter = safety_filters().create(&scenario.safety_filter).map_err(|e| SimError::Config(e.to_string()))?;
        let table = PolicyTable::for_graph(&scenario.graph);
        Ok(Self { ctx: Context { scenario, model, table }, mode, filter })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.ctx.scenario
    }

    pub fn mode_name(&self) -> &'static str {
        self.mode.name()
    }

    pub fn initial_world(&self) -> WorldState {
        let s = &self.ctx.scenario;
        let right = s.body.rest_wrist(true);
        let left = s.body.rest_wrist(false);
        let mut world = WorldState {
            tick: 0,
            clock: 0.0,
            robot: RobotState::at_rest(s.initial_joints.clone()),
            env: EnvironmentState { blocks: s.blocks.clone(), ..Default::default() },
            task: s.graph.root,
            insertions: Vec::new(),
            prediction: IntentionLabel::Idle,
            confidence: 0.0,
            goal: None,
            pending: None,
            trajectory: Trajectory::stationary(&s.initial_joints, 1, s.dt),
            trajectory_start: 0.0,
            human: HumanState {
                phase: Phase::Done,
                next: 0,
                sequence: s.human.sequence(),
                right_wrist: right,
                left_wrist: left,
                lean: 0.0,
                observed_wrist: right,
                commanded: BTreeSet::new(),
                hazard: HazardState::Armed,
                early_lean: false,
            },
            wrist_override: None,
            last_control: None,
            alert: false,
            events: Vec::new(),
            telemetry: Vec::new(),
            predictions: 0,
            planner_calls: 0,
            smoother: MajorityFilter::default(),
            wrist_track: VecDeque::with_capacity(WINDOW),
            commands: Vec::new(),
            last_decision: None,
            previous_body: None,
            noise: None,
            noise_rng: ChaCha8Rng::seed_from_u64(s.seed),
            motion_rng: ChaCha8Rng::seed_from_u64(s.seed ^ 0x9e37_79b9_7f4a_7c15),
        };
        self.begin_block(&mut world, 0);
        self.refresh_environment(&mut world);
        world
    }

    fn surface_of(&self, block: BlockId) -> u8 {
        self.ctx.scenario.graph.surface_of(block).expect("sequence blocks belong to the graph")
    }

    /// Robot has settled on the presentation of `surface`.
    pub fn robot_ready(&self, world: &WorldState, surface: u8) -> bool {
        world.goal == Some(GoalKind::DisplaySurface(surface))
            && world.robot.waypoint + 1 >= world.trajectory.len()
            && dist(&world.robot.q, world.trajectory.last()) < self.ctx.scenario.settle_tolerance
    }

    fn command(&self, world: &mut WorldState, surface: u8) {
        if world.human.commanded.insert(surface) {
            let at = world.clock + self.ctx.scenario.human.command_latency;
            world.commands.push((surface, at));
            world.event(EventKind::Command, None, Some(surface), format!("S{surface}"));
        }
    }

    fn start_reach(&self, world: &mut WorldState, block: BlockId) {
        let h = &self.ctx.scenario.human;
        let path = Segment::new(
            world.human.right_wrist,
            self.ctx.scenario.block_position(block),
            world.clock,
            h.reach_speed,
            h.reach_acceleration,
        );
        world.human.phase = Phase::Reach { block, path };
        world.event(EventKind::ReachStart, Some(block), Some(self.surface_of(block)), "");
    }

    fn begin_block(&self, world: &mut WorldState, index: usize) {
        world.human.next = index;
        let Some(&block) = world.human.sequence.get(index) else {
            world.human.phase = Phase::Done;
            return;
        };
        let surface = self.surface_of(block);
        let opens_surface = index == 0 || self.surface_of(world.human.sequence[index - 1]) != surface;
        let early = matches!(self.ctx.scenario.hazard, Some(Hazard::EarlyReach { .. }));
        if opens_surface && self.mode.commands_surfaces() && !self.robot_ready(world, surface) {
            self.command(world, surface);
            if !early {
                world.human.phase = Phase::AwaitRobot { block };
                return;
            }
        }
        self.start_reach(world, block);
    }

    /// Advance the scripted subject to the current clock.
    fn update_human(&self, world: &mut WorldState) -> Result<(), SimError> {
        let s = &self.ctx.scenario;
        let t = world.clock;
        if let Some(target) = world.wrist_override {
            let step = target - world.human.right_wrist;
            let max = OVERRIDE_SPEED * s.dt;
            world.human.right_wrist += if step.norm() > max { step.normalize() * max } else { step };
            self.update_posture(world);
            return Ok(());
        }
        // Phases may chain within one tick, e.g. an insertion ending and the next reach starting.
        for _ in 0..4 {
            let phase = world.human.phase.clone();
            match phase {
                Phase::AwaitRobot { block } => {
                    if self.robot_ready(world, self.surface_of(block)) {
                        self.start_reach(world, block);
                    }
                    break;
                }
                Phase::Reach { block, path } => {
                    world.human.right_wrist = path.position(t);
                    if !path.done(t) {
                        break;
                    }
                    world.human.phase = Phase::Grab { block, until: t + s.human.grab_duration };
                }
                Phase::Grab { block, until } => {
                    if t < until {
                        break;
                    }
                    let surface = self.surface_of(block);
                    world.event(EventKind::Grab, Some(block), Some(surface), "");
                    let path = Segment::new(
                        world.human.right_wrist,
                        s.insertion_point(surface),
                        t,
                        s.human.reach_speed,
                        s.human.reach_acceleration,
                    );
                    world.human.phase = Phase::Carry { block, path };
                }
                Phase::Carry { block, path } => {
                    world.human.right_wrist = path.position(t);
                    if !path.done(t) {
                        break;
                    }
                    world.human.phase = Phase::AwaitDisplay { block, since: t };
                }
                Phase::AwaitDisplay { block, since } => {
                    let surface = self.surface_of(block);
                    if self.robot_ready(world, surface) {
                        world.human.phase = Phase::Insert { block, until: t + s.human.insertion_duration };
                        if matches!(s.hazard, Some(Hazard::LeftHandIncursion { .. })) && world.human.hazard == HazardState::Armed {
                            self.start_incursion(world)?;
                        }
                    } else if t - since >= s.human.command_latency {
                        // Nothing happened: fall back to asking.
                        self.command(world, surface);
                    }
                    break;
                }
                Phase::Insert { block, until } => {
                    if t < until {
                        break;
                    }
                    let surface = self.surface_of(block);
                    world.task = s.graph.advance(world.task, block)?;
                    world.insertions.push(Insertion { block, time: t });
                    world.event(EventKind::Insertion, Some(block), Some(surface), "");
                    world.human.early_lean = false;
                    let next = world.human.next + 1;
                    self.begin_block(world, next);
                }
                Phase::Done => break,
            }
        }
        self.update_hazard(world);
        self.update_posture(world);
        Ok(())
    }

    fn start_incursion(&self, world: &mut WorldState) -> Result<(), SimError> {
        let Some(Hazard::LeftHandIncursion { speed, acceleration, hold }) = self.ctx.scenario.hazard else {
            return Ok(());
        };
        let s = &self.ctx.scenario;
        let shoulder = s.body.shoulder(INCURSION_LEAN, false);
        let caps = s.arm.forward_kinematics(&world.robot.q)?;
        // the hand goes for the distal links, which the arm can pull back
        let target = caps
            .iter()
            .skip(caps.len().saturating_sub(DISTAL_LINKS).max(s.arm.first_link_index()))
            .map(|c| {
                let ab = c.b - c.a;
                let f = ((shoulder - c.a).dot(&ab) / ab.norm_squared().max(1e-12)).clamp(0.0, 1.0);
                c.a + ab * f
            })
            .min_by(|a, b| (a - shoulder).norm().total_cmp(&(b - shoulder).norm()))
            .expect("arm has links");
        let path = Segment::new(world.human.left_wrist, target, world.clock, speed, acceleration);
        let hold_until = world.clock + path.duration + hold;
        world.human.hazard = HazardState::Out { path, hold_until };
        world.event(EventKind::Hazard, None, None, "left_hand_incursion");
        Ok(())
    }

    fn update_hazard(&self, world: &mut WorldState) {
        let t = world.clock;
        let s = &self.ctx.scenario;
        match world.human.hazard.clone() {
            HazardState::Out { path, hold_until } => {
                world.human.left_wrist = path.position(t);
                if t >= hold_until {
                    let back = Segment::new(
                        world.human.left_wrist,
                        s.body.rest_wrist(false),
                        t,
                        s.human.reach_speed,
                        s.human.reach_acceleration,
                    );
                    world.human.hazard = HazardState::Back { path: back };
                }
            }
            HazardState::Back { path } => {
                world.human.left_wrist = path.position(t);
                if path.done(t) {
                    world.human.hazard = HazardState::Spent;
                }
            }
            HazardState::Armed | HazardState::Spent => {}
        }
    }

    fn update_posture(&self, world: &mut WorldState) {
        let s = &self.ctx.scenario;
        let mut target = 0.0;
        if s.human.posture == Posture::Proactive && matches!(world.human.phase, Phase::Insert { .. }) {
            target = s.human.lean;
        }
        if let (true, Some(Hazard::EarlyReach { lean })) = (world.human.early_lean, s.hazard) {
            target = f64::max(target, lean);
        }
        if matches!(world.human.hazard, HazardState::Out { .. }) {
            target = f64::max(target, INCURSION_LEAN);
        }
        let max = LEAN_RATE * s.dt;
        world.human.lean += (target - world.human.lean).clamp(-max, max);
    }

    /// Rebuild the human capsules and the observed wrist for the current clock.
    fn refresh_environment(&self, world: &mut WorldState) {
        let s = &self.ctx.scenario;
        let pose = BodyPose { right_wrist: world.human.right_wrist, left_wrist: world.human.left_wrist, lean: world.human.lean };
        // Stationary Gauss-Markov noise: RMS `position_noise` over the three axes.
        let sigma = s.human.position_noise / 3f64.sqrt();
        let noise = if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).expect("finite sigma");
            let rng = &mut world.noise_rng;
            let fresh = Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
            let rho = (-s.dt / NOISE_CORRELATION).exp();
            match world.noise {
                Some(prev) => prev * rho + fresh * (1.0 - rho * rho).sqrt(),
                None => fresh,
            }
        } else {
            Vec3::zeros()
        };
        world.noise = Some(noise);
        world.human.observed_wrist = pose.right_wrist + noise;
        let nominal = s.body.capsules(&pose, pose.right_wrist);
        let mut human = s.body.capsules(&pose, world.human.observed_wrist);
        if let Some(prev) = &world.previous_body {
            for ((c, now), before) in human.iter_mut().zip(&nominal).zip(prev) {
                c.velocity = [
                    (now.capsule.a - before.capsule.a) / s.dt,
                    (now.capsule.b - before.capsule.b) / s.dt,
                ];
            }
        }
        world.previous_body = Some(nominal);
        world.env = EnvironmentState { human, obstacles: Vec::new(), blocks: s.blocks.clone(), timestamp: world.clock };
        // a refresh at an already observed time replaces that sample
        if world.wrist_track.back().is_some_and(|(t, _)| *t == world.clock) {
            world.wrist_track.pop_back();
        }
        if world.wrist_track.len() == WINDOW {
            world.wrist_track.pop_front();
        }
        world.wrist_track.push_back((world.clock, world.human.observed_wrist));
    }

    fn try_plan(&self, world: &mut WorldState, goal: GoalKind) -> Result<(), SimError> {
        let s = &self.ctx.scenario;
        let current = s.arm.tool_pose(&world.robot.q)?;
        let target = goal_pose(goal, &current, &s.displays)?;
        let motion = world.motion_rng.random_range(s.motion_time[0]..=s.motion_time[1]);
        let params = PlannerParams { dt: motion / (s.planner.horizon - 1) as f64, ..s.planner.clone() };
        world.planner_calls += 1;
        let surface = match goal {
            GoalKind::DisplaySurface(x) => Some(x),
            _ => None,
        };
        match plan(&world.robot.q, &target.pose, &world.env, &s.safety_spec, &s.arm, &params) {
            Ok(report) => {
                world.trajectory = report.trajectory.resampled(s.dt);
                world.trajectory_start = world.clock;
                world.robot.waypoint = 0;
                world.goal = Some(goal);
                world.pending = None;
                world.event(EventKind::Goal, None, surface, format!("{:.3}", report.trajectory.duration()));
                if let Some(Hazard::EarlyReach { .. }) = s.hazard {
                    if world.insertions.is_empty() {
                        world.human.early_lean = true;
                    }
                }
            }
            Err(e) => {
                world.pending = Some((goal, world.clock + PLAN_RETRY));
                world.event(EventKind::PlanFailed, None, surface, e.to_string());
            }
        }
        Ok(())
    }

    /// Install or clear an external wrist target. Clearing it resumes the
    /// script from wherever the wrist was left.
    pub fn set_wrist_override(&self, world: &mut WorldState, target: Option<Vec3>) {
        let was = world.wrist_override.take();
        world.wrist_override = target;
        if was.is_none() || target.is_some() {
            return;
        }
        let h = &self.ctx.scenario.human;
        let restart = |path: Segment| Segment::new(world.human.right_wrist, path.to, world.clock, h.reach_speed, h.reach_acceleration);
        world.human.phase = match world.human.phase.clone() {
            Phase::Reach { block, path } => Phase::Reach { block, path: restart(path) },
            Phase::Carry { block, path } => Phase::Carry { block, path: restart(path) },
            other => other,
        };
    }

    /// Advance the world by one tick.
    pub fn step(&self, world: &mut WorldState) -> Result<(), SimError> {
        let s = &self.ctx.scenario;
        if world.clock >= s.duration_cap {
            return Err(SimError::Timeout(Box::new(self.finish(world.clone(), true))));
        }
        self.update_human(world)?;
        self.refresh_environment(world);

        let mut request = self.mode.perceive(world, &self.ctx)?;
        let t = world.clock;
        if let Some(i) = world.commands.iter().position(|(_, at)| *at <= t) {
            let (surface, _) = world.commands.remove(i);
            request = Some(GoalKind::DisplaySurface(surface));
        }
        match (request, world.pending) {
            (Some(goal), _) if Some(goal) != world.goal && world.pending.map(|p| p.0) != Some(goal) => {
                self.try_plan(world, goal)?
            }
            (_, Some((goal, at))) if at <= t => self.try_plan(world, goal)?,
            _ => {}
        }

        let traj = &world.trajectory;
        let scheduled = ((t - world.trajectory_start) / traj.dt).floor().max(0.0) as usize;
        world.robot.waypoint = world.robot.waypoint.max(scheduled.min(traj.len() - 1));
        let (out, next) = control_step(
            &s.arm,
            &world.robot,
            &world.trajectory,
            &world.env,
            &s.safety_spec,
            &s.gains,
            &s.safety,
            self.filter.as_ref(),
        )?;
        world.telemetry.push(TelemetryRecord::new(t, &world.robot.q, &world.robot.qdot, &out));
        world.robot = next;
        world.last_control = Some(out);
        world.tick += 1;
        world.clock = world.tick as f64 * s.dt;
        Ok(())
    }

    pub fn finish(&self, world: WorldState, timed_out: bool) -> MetricsLog {
        let s = &self.ctx.scenario;
        let totals = Totals::compute(&world.events, &world.telemetry, &s.graph);
        MetricsLog {
            scenario: s.name.clone(),
            mode: self.mode.name().to_string(),
            seed: s.seed,
            telemetry: world.telemetry,
            events: world.events,
            totals,
            timed_out,
            predictions: world.predictions,
            planner_calls: world.planner_calls,
        }
    }

    /// Run until every block is inserted; a timeout carries the partial log.
    pub fn run(&self) -> Result<MetricsLog, SimError> {
        let mut world = self.initial_world();
        while !world.done() {
            self.step(&mut world)?;
        }
        Ok(self.finish(world, false))
    }

    /// Run for a fixed span of simulated time, or until the task is done.
    pub fn run_for(&self, duration: f64) -> Result<MetricsLog, SimError> {
        let mut world = self.initial_world();
        let end = duration.min(self.ctx.scenario.duration_cap);
        while !world.done() && world.clock < end - 1e-9 {
            self.step(&mut world)?;
        }
        Ok(self.finish(world, false))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn run_scenario(scenario: &Scenario, model: Option<&Mlp>) -> Result<MetricsLog, SimError> {
    Simulation::new(scenario.clone(), model.cloned())?.run()
}
