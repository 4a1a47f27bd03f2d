mod common;

use coassembly::intention::IntentionLabel;
use coassembly::sim::{
    disturbance_suite, generate_demos, run_scenario, EventKind, HumanModel, Posture, Scenario, Simulation, Totals,
};
use coassembly::task_graph::TaskGraph;
use common::default_model;

fn subject(i: usize) -> HumanModel {
    HumanModel::defaults()[i].clone()
}

#[test]
fn seeded_runs_are_bit_identical() {
    let base = Scenario::default_scenario();
    for mode in ["baseline", "proactive"] {
        let s = base.variant(&subject(1), mode, 31);
        let a = run_scenario(&s, Some(default_model())).unwrap();
        let b = run_scenario(&s, Some(default_model())).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.telemetry_csv().unwrap(), b.telemetry_csv().unwrap());
        assert_eq!(a.events_csv().unwrap(), b.events_csv().unwrap());
    }
}

#[test]
fn task_state_is_the_fold_of_insertions() {
    let s = Scenario::default_scenario();
    let sim = Simulation::new(s.clone(), Some(default_model().clone())).unwrap();
    let mut world = sim.initial_world();
    while !world.done() {
        sim.step(&mut world).unwrap();
        let mut node = s.graph.root;
        for e in world.events.iter().filter(|e| e.kind == EventKind::Insertion) {
            node = s.graph.advance(node, e.block.unwrap()).unwrap();
        }
        assert_eq!(node, world.task);
        assert_eq!(world.insertions.len(), s.graph.nodes[node].depth());
    }
    assert!(s.graph.is_terminal(world.task));
}

#[test]
fn baseline_never_predicts() {
    let base = Scenario::default_scenario();
    for i in 0..5 {
        let log = run_scenario(&base.variant(&subject(i), "baseline", 3), Some(default_model())).unwrap();
        assert_eq!(log.predictions, 0);
        assert!(log.events.iter().all(|e| e.kind != EventKind::Intention));
        assert_eq!(log.events.iter().filter(|e| e.kind == EventKind::Insertion).count(), 12);
    }
}

#[test]
fn idle_world_is_a_fixed_point() {
    let mut human = subject(0);
    human.position_noise = 0.0;
    let s = Scenario::default_scenario().variant(&human, "baseline", 5);
    let sim = Simulation::new(s, None).unwrap();
    let mut world = sim.initial_world();
    while !world.done() {
        sim.step(&mut world).unwrap();
    }
    // let the hand settle, then park the robot exactly on its final waypoint
    for _ in 0..60 {
        sim.step(&mut world).unwrap();
    }
    world.robot.q = world.trajectory.last().to_vec();
    world.robot.qdot = vec![0.0; world.robot.q.len()];
    world.robot.waypoint = world.trajectory.len() - 1;
    let before = world.clone();
    sim.step(&mut world).unwrap();
    assert_eq!(world.robot, before.robot);
    assert_eq!(world.env.human.iter().map(|c| c.capsule).collect::<Vec<_>>(), before.env.human.iter().map(|c| c.capsule).collect::<Vec<_>>());
    assert_eq!((world.task, world.goal, world.prediction), (before.task, before.goal, before.prediction));
    assert_eq!(world.events, before.events);
    assert_eq!(world.tick, before.tick + 1);
}

#[test]
fn planner_is_called_once_per_goal_change() {
    let base = Scenario::default_scenario();
    for mode in ["baseline", "proactive"] {
        let log = run_scenario(&base.variant(&subject(2), mode, 8), Some(default_model())).unwrap();
        let goals = log.events.iter().filter(|e| matches!(e.kind, EventKind::Goal | EventKind::PlanFailed)).count();
        assert_eq!(log.planner_calls, goals, "{mode}");
        if mode == "baseline" {
            assert_eq!(log.planner_calls, 4);
        }
    }
}

#[test]
fn totals_follow_from_the_event_stream() {
    let s = Scenario::default_scenario();
    let log = run_scenario(&s, Some(default_model())).unwrap();
    assert_eq!(Totals::compute(&log.events, &log.telemetry, &s.graph), log.totals);
    let t = &log.totals;
    let task = t.task_time.unwrap();
    assert!(t.completed);
    assert!(t.block_times.iter().sum::<f64>() <= task + 1e-9);
    assert!((t.surface_times.iter().sum::<f64>() - task).abs() < 1e-9);
    assert_eq!(t.opening_block_times.len(), 4);
    assert!(t.min_distance > 0.0);
}

#[test]
fn demos_are_labeled_by_the_reach_in_progress() {
    let base = Scenario::default_scenario();
    let h = subject(3);
    let demos = generate_demos(&base, std::slice::from_ref(&h), 1, 4).unwrap();
    // sequence of reach segments, in order
    let mut reached = Vec::new();
    for s in &demos.samples {
        if let IntentionLabel::Reach(b) = s.label {
            if reached.last() != Some(&b) {
                reached.push(b);
            }
        }
    }
    assert_eq!(reached, h.sequence());
    assert_eq!(demos, generate_demos(&base, std::slice::from_ref(&h), 1, 4).unwrap());
}

#[test]
fn default_demos_cover_every_class() {
    let base = Scenario::default_scenario();
    let humans = HumanModel::defaults();
    let demos = generate_demos(&base, &humans[..2], 2, 1).unwrap();
    let counts = demos.class_counts();
    assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
    // one sample per simulated tick of the four baseline episodes
    let mut ticks = 0;
    for (m, h) in humans[..2].iter().enumerate() {
        for k in 0..2u64 {
            let seed = 1_000_003 + m as u64 * 1000 + k;
            ticks += run_scenario(&base.variant(h, "baseline", seed), None).unwrap().telemetry.len();
        }
    }
    assert_eq!(demos.len(), ticks);
}

#[test]
fn proactive_posture_triggers_more_than_conservative() {
    let runs = disturbance_suite(&Scenario::default_scenario(), Some(default_model())).unwrap();
    let triggers = |hazard: &str| {
        runs.iter().find(|r| r.hazard == hazard && r.safety).unwrap().log.totals.safety_triggers
    };
    assert!(triggers("proactive_posture") > triggers("conservative_posture"));
    assert!(runs.iter().filter(|r| r.safety).all(|r| r.log.min_distance() > 0.0));
    assert!(runs.iter().filter(|r| !r.safety).any(|r| r.log.min_distance() <= 0.0));
}

#[test]
fn task_completes_after_an_incursion() {
    let base = Scenario::default_scenario();
    let s = coassembly::sim::hazard_scenario(&base, "left_hand_incursion", Posture::Conservative).unwrap();
    let log = run_scenario(&s, Some(default_model())).unwrap();
    assert!(log.events.iter().any(|e| e.kind == EventKind::Hazard));
    assert!(log.totals.safety_triggers > 0);
    assert!(log.totals.completed);
    assert!(log.min_distance() > 0.0);
}

#[test]
fn no_penetration_across_subjects_postures_and_seeds() {
    let base = Scenario::default_scenario();
    for h in HumanModel::defaults() {
        for posture in [Posture::Conservative, Posture::Proactive] {
            for seed in 1..=10 {
                let mut human = h.clone();
                human.posture = posture;
                let log = run_scenario(&base.variant(&human, "proactive", seed), Some(default_model())).unwrap();
                assert!(log.min_distance() > 0.0, "{} {posture:?} {seed}", h.name);
            }
        }
    }
}

#[test]
fn default_subject_is_recognized_ahead_of_the_grab() {
    let base = Scenario::default_scenario();
    let mut leads = Vec::new();
    for seed in 1..=10 {
        let log = run_scenario(&base.variant(&subject(0), "proactive", seed), Some(default_model())).unwrap();
        leads.extend(log.totals.recognition_leads);
    }
    let mean = leads.iter().sum::<f64>() / leads.len() as f64;
    // reported as "0.5 to 1 s on average"; the mean sits at the upper end
    assert!((0.4..=1.2).contains(&mean), "{mean}");
    assert!(leads.iter().filter(|&&l| l > 0.0).count() * 10 >= leads.len() * 9);
}

#[test]
fn reduced_graph_scenarios_are_rejected_with_a_clear_error() {
    let mut s = Scenario::default_scenario();
    s.graph = TaskGraph::surfaces_in_sequence(4, 2);
    assert!(s.validate().is_err());
}
