mod common;

use common::mission::*;
use nalgebra::Vector3;
use remanip::command::{Goal, Target, TuneValue, XrfParam};
use remanip::executive::*;
use remanip::kinematics::Pose;
use remanip::planner::{validate_trajectory, CollisionWorld};
use remanip::scene::{SceneObject, Shape};
use remanip::sim::Disturbance;

/// Legal (phase, trigger) pairs and their targets, written out by hand.
const LEGAL: &[(Phase, Trigger, Phase)] = &[
    (Phase::Idle, Trigger::Propose, Phase::GoalProposed),
    (Phase::Done, Trigger::Propose, Phase::GoalProposed),
    (Phase::Aborted, Trigger::Propose, Phase::GoalProposed),
    (Phase::GoalProposed, Trigger::PreviewReady, Phase::Previewed),
    (Phase::GoalProposed, Trigger::PreviewFailed, Phase::Idle),
    (Phase::GoalProposed, Trigger::Reject, Phase::Idle),
    (Phase::Previewed, Trigger::Reject, Phase::Idle),
    (Phase::Previewed, Trigger::Confirm, Phase::Executing),
    (Phase::Previewed, Trigger::StaleConfirm, Phase::GoalProposed),
    (Phase::Executing, Trigger::SegmentDone, Phase::Executing),
    (Phase::Executing, Trigger::LastSegmentDone, Phase::Done),
    (Phase::Executing, Trigger::ContactMade, Phase::Holding),
    (Phase::Executing, Trigger::MotionFault, Phase::Aborted),
    (Phase::Holding, Trigger::HoldComplete, Phase::Executing),
    (Phase::Holding, Trigger::HoldFailed, Phase::Aborted),
];

#[test]
fn transition_table_is_exhaustive() {
    let mut legal = 0;
    for phase in Phase::ALL {
        for trigger in Trigger::ALL {
            let expected = if trigger == Trigger::Abort {
                Some(Phase::Aborted)
            } else {
                LEGAL.iter().find(|(p, t, _)| *p == phase && *t == trigger).map(|e| e.2)
            };
            assert_eq!(next_phase(phase, trigger), expected, "{phase:?} x {trigger:?}");
            legal += expected.is_some() as usize;
        }
    }
    assert_eq!(legal, LEGAL.len() + Phase::ALL.len());
}

#[test]
fn token_arbitration() {
    let mut r = rig(1);
    r.exec.acquire_token("a", 0.0).unwrap();
    assert_eq!(r.exec.acquire_token("b", 10.0), Err(ExecError::Denied { holder: "a".into() }));
    // lease 120 s; expired one second ago
    r.exec.acquire_token("b", 121.0).unwrap();
    assert!(r.exec.state().token.is_holder("b", 121.0));
    assert!(!r.exec.release_token("a", 122.0));
    assert!(r.exec.release_token("b", 122.0));
    assert_eq!(r.exec.state().token.holder, None);
}

#[test]
fn propose_guards() {
    let mut r = rig(1);
    r.exec.acquire_token("op1", 0.0).unwrap();
    assert!(matches!(r.exec.propose("op2", 0.0, xrf_at(MAT_XY, 5.0)), Err(ExecError::NotTokenHolder { holder: Some(h) }) if h == "op1"));
    assert_eq!(r.exec.phase(), Phase::Idle);
    let unresolved = task(Goal::MoveTo { target: Target::Deictic });
    assert_eq!(r.exec.propose("op1", 0.0, unresolved), Err(ExecError::UnresolvedGoal));
    r.start(xrf_at(MAT_XY, 5.0));
    assert_eq!(r.exec.phase(), Phase::Executing);
    assert_eq!(
        r.exec.propose("op1", 0.0, xrf_at(MAT_XY, 5.0)),
        Err(ExecError::IllegalPhase { phase: Phase::Executing, trigger: Trigger::Propose })
    );
}

#[test]
fn preview_segments_pass_validation() {
    let mut r = rig(2);
    r.exec.acquire_token("op1", 0.0).unwrap();
    r.exec.propose("op1", 0.0, task(Goal::MoveTo { target: Target::Point(Vector3::new(0.8, -0.3, -0.3)) })).unwrap();
    let preview = r.exec.build_preview(0.0, &r.scene, &r.sim).unwrap().clone();
    assert_eq!(r.exec.phase(), Phase::Previewed);
    let world = CollisionWorld::new(&r.scene);
    for seg in &preview.segments {
        assert!(validate_trajectory(r.sim.chain(), &world, seg).unwrap().passed());
    }

    // contact task: approach unguarded, descent and return checked with the tool exempt from terrain
    r.exec.reject("op1", 0.0).unwrap();
    r.exec.propose("op1", 0.0, core_at(MAT_XY)).unwrap();
    let preview = r.exec.build_preview(0.0, &r.scene, &r.sim).unwrap().clone();
    assert_eq!(preview.segments.len(), 3);
    assert!(preview.segments[1].guarded);
    for (i, seg) in preview.segments.iter().enumerate() {
        let mut s = seg.clone();
        s.guarded |= i > 0;
        assert!(validate_trajectory(r.sim.chain(), &world, &s).unwrap().passed(), "segment {i}");
    }
}

#[test]
fn unreachable_goal_returns_to_idle() {
    let mut r = rig(1);
    r.exec.acquire_token("op1", 0.0).unwrap();
    r.exec.propose("op1", 0.0, task(Goal::MoveTo { target: Target::Point(Vector3::new(3.0, 0.0, 0.0)) })).unwrap();
    assert!(matches!(r.exec.build_preview(0.0, &r.scene, &r.sim), Err(ExecError::Planning(_))));
    assert_eq!(r.exec.phase(), Phase::Idle);
    assert!(r.exec.state().active_goal.is_none());
    assert!(r.exec.history().records().iter().any(|rec| rec.event == "preview_failed"));
}

#[test]
fn confirm_guards() {
    let mut r = rig(1);
    r.exec.acquire_token("op1", 0.0).unwrap();
    r.exec.propose("op1", 0.0, xrf_at(MAT_XY, 5.0)).unwrap();
    assert_eq!(
        r.exec.confirm("op1", 0.0, 1, &r.scene, &mut r.sim),
        Err(ExecError::IllegalPhase { phase: Phase::GoalProposed, trigger: Trigger::Confirm })
    );
    let id = r.exec.build_preview(0.0, &r.scene, &r.sim).unwrap().id;
    assert!(matches!(r.exec.confirm("op2", 0.0, id, &r.scene, &mut r.sim), Err(ExecError::NotTokenHolder { .. })));
    assert_eq!(r.exec.confirm("op1", 0.0, id + 1, &r.scene, &mut r.sim), Err(ExecError::UnknownPreview { requested: id + 1 }));

    let changed = r
        .scene
        .upsert_object(SceneObject::new(99, "new rock", Pose::from_position(-0.5, 0.8, -0.4), Shape::Sphere { radius: 0.05 }))
        .unwrap();
    assert!(matches!(r.exec.confirm("op1", 0.0, id, &changed, &mut r.sim), Err(ExecError::StalePreview { .. })));
    assert_eq!(r.exec.phase(), Phase::GoalProposed);
    assert!(!r.sim.is_tracking());

    let id = r.exec.build_preview(0.0, &changed, &r.sim).unwrap().id;
    r.exec.confirm("op1", 0.0, id, &changed, &mut r.sim).unwrap();
    assert_eq!(r.exec.phase(), Phase::Executing);
    assert!(r.sim.is_tracking());
}

#[test]
fn no_motion_without_confirmed_preview() {
    let mut r = rig(3);
    let q0 = r.sim.q().clone();
    r.exec.acquire_token("op1", 0.0).unwrap();
    r.exec.propose("op1", 0.0, core_at(MAT_XY)).unwrap();
    let _ = r.exec.confirm("op1", 0.0, 1, &r.scene, &mut r.sim);
    for _ in 0..100 {
        r.exec.tick(TICK_S, &mut r.sim);
    }
    assert_eq!(r.sim.q(), &q0, "arm moved in GoalProposed");
    let id = r.exec.build_preview(r.sim.clock(), &r.scene, &r.sim).unwrap().id;
    for _ in 0..100 {
        r.exec.tick(TICK_S, &mut r.sim);
    }
    assert_eq!(r.sim.q(), &q0, "arm moved in Previewed");
    let now = r.sim.clock();
    r.exec.confirm("op1", now, id, &r.scene, &mut r.sim).unwrap();
    assert_eq!(r.run_to_end(120.0).0, Phase::Done);

    // every streamed segment follows a confirm of its preview; planned segments match the preview bit for bit
    let recs = r.exec.history().records();
    for (i, rec) in recs.iter().enumerate().filter(|(_, r)| r.event == "segment_started") {
        let pid = rec.payload["preview_id"].as_u64().unwrap();
        let confirmed = recs[..i].iter().rposition(|r| r.event == "confirmed").expect("confirm precedes execution");
        assert_eq!(recs[confirmed].payload["preview_id"].as_u64(), Some(pid));
        let preview = recs[..confirmed].iter().rev().find(|r| r.event == "preview").unwrap();
        let preview: Preview = serde_json::from_value(preview.payload.clone()).unwrap();
        assert_eq!(preview.id, pid);
        let index = rec.payload["index"].as_u64().unwrap() as usize;
        if index < 2 {
            assert_eq!(rec.payload["digest"].as_str().unwrap(), preview.segments[index].digest());
        }
    }
}

#[test]
fn hold_without_disturbance_is_exact() {
    let mut r = rig(4);
    r.start(xrf_at(MAT_XY, 20.0));
    let (phase, dev) = r.run_to_end(120.0);
    assert_eq!(phase, Phase::Done);
    assert!(dev < 1e-9, "deviation {dev}");
}

fn run_until_holding(r: &mut Rig) {
    for _ in 0..4000 {
        r.exec.tick(TICK_S, &mut r.sim);
        if r.exec.phase() == Phase::Holding {
            return;
        }
    }
    panic!("never reached contact");
}

fn outcome_of(r: &Rig) -> TaskOutcome {
    let rec = r.exec.history().records().iter().rev().find(|r| r.event == "task_complete").expect("task completed");
    serde_json::from_value(rec.payload.clone()).unwrap()
}

#[test]
fn small_disturbance_is_held_within_a_centimetre() {
    let mut r = rig(5);
    r.start(xrf_at(MAT_XY, 60.0));
    run_until_holding(&mut r);
    let t = r.sim.clock() + 10.0;
    r.sim.inject_disturbance(Disturbance { time: t, offset: Vector3::new(0.004, -0.003, 0.0) });
    let (phase, dev) = r.run_to_end(200.0);
    assert_eq!(phase, Phase::Done);
    assert!(dev > 4e-3 && dev <= 0.01, "max deviation {dev}");
    match outcome_of(&r) {
        TaskOutcome::Measurement { spectrum, max_deviation, .. } => {
            assert!((spectrum.live_time - 60.0).abs() < 1e-9);
            assert!((max_deviation - dev).abs() < 1e-12);
        }
        o => panic!("unexpected outcome {o:?}"),
    }
    assert!(!r.exec.history().records().iter().any(|r| r.event == "contact_lost" || r.event == "partial_spectrum"));
}

#[test]
fn large_disturbance_aborts_with_partial_spectrum() {
    let mut r = rig(6);
    r.start(xrf_at(MAT_XY, 60.0));
    run_until_holding(&mut r);
    let t = r.sim.clock() + 10.0;
    r.sim.inject_disturbance(Disturbance { time: t, offset: Vector3::new(0.0, 0.0, -0.05) });
    let (phase, _) = r.run_to_end(200.0);
    assert_eq!(phase, Phase::Aborted);
    assert!(r.sim.is_halted());
    let recs = r.exec.history().records();
    assert!(recs.iter().any(|r| r.event == "contact_lost"));
    let partial = recs.iter().find(|r| r.event == "partial_spectrum").expect("partial data emitted");
    let live = partial.payload["live_time"].as_f64().unwrap();
    assert!(live > 9.0 && live < 60.0, "live time {live}");
}

#[test]
fn upward_disturbance_loses_contact() {
    let mut r = rig(6);
    r.start(xrf_at(MAT_XY, 30.0));
    run_until_holding(&mut r);
    let t = r.sim.clock() + 1.0;
    r.sim.inject_disturbance(Disturbance { time: t, offset: Vector3::new(0.0, 0.0, 0.05) });
    assert_eq!(r.run_to_end(100.0).0, Phase::Aborted);
}

#[test]
fn abort_from_any_operator_halts() {
    let mut r = rig(7);
    r.exec.abort(Some("observer"), 0.0, &mut r.sim);
    assert_eq!(r.exec.phase(), Phase::Aborted);

    let mut r = rig(7);
    r.start(xrf_at(MAT_XY, 5.0));
    for _ in 0..5 {
        r.exec.tick(TICK_S, &mut r.sim);
    }
    let q = r.sim.q().clone();
    r.exec.abort(Some("someone-else"), r.sim.clock(), &mut r.sim);
    assert_eq!(r.exec.phase(), Phase::Aborted);
    r.exec.tick(TICK_S, &mut r.sim);
    assert_eq!(r.sim.q(), &q);
    assert!(r.sim.is_halted());
}

#[test]
fn push_core_in_mat() {
    let mut r = rig(8);
    r.start(core_at(MAT_XY));
    assert_eq!(r.run_to_end(120.0).0, Phase::Done);
    match outcome_of(&r) {
        TaskOutcome::Core { result, placement_error, .. } => {
            assert!(result.success);
            assert_eq!(result.region, "microbial mat");
            assert!(placement_error <= 0.01);
            assert!(result.tilt_deg < 10.0);
        }
        o => panic!("unexpected outcome {o:?}"),
    }
}

#[test]
fn consecutive_tasks_and_stow() {
    let mut r = rig(9);
    r.start(xrf_at(AMBIENT_XY, 5.0));
    assert_eq!(r.run_to_end(120.0).0, Phase::Done);
    r.start(core_at(MAT_XY));
    assert_eq!(r.run_to_end(120.0).0, Phase::Done);
    r.start(task(Goal::Stow));
    assert_eq!(r.run_to_end(120.0).0, Phase::Done);
    assert!(r.sim.q().max_abs_diff(&r.worksite.home) < 1e-9);
}

#[test]
fn tuning_is_validated_and_gated() {
    let mut r = rig(1);
    r.exec.acquire_token("op1", 0.0).unwrap();
    let p = r.exec.tune("op1", 0.0, XrfParam::TubeVoltage, TuneValue::To(30.0)).unwrap();
    assert_eq!(p.tube_voltage_kv, 30.0);
    let p = r.exec.tune("op1", 0.0, XrfParam::TubeCurrent, TuneValue::By(-50.0)).unwrap();
    assert_eq!(p.tube_current_ua, 50.0);
    assert!(matches!(r.exec.tune("op1", 0.0, XrfParam::TubeVoltage, TuneValue::To(60.0)), Err(ExecError::Xrf(_))));
    assert_eq!(r.exec.state().xrf.tube_voltage_kv, 30.0);
    assert!(matches!(r.exec.tune("op2", 0.0, XrfParam::TubeVoltage, TuneValue::To(20.0)), Err(ExecError::NotTokenHolder { .. })));
}

#[test]
fn identical_inputs_give_identical_history() {
    let run = || {
        let mut r = rig(11);
        r.start(xrf_at(MAT_XY, 10.0));
        run_until_holding(&mut r);
        let t = r.sim.clock() + 2.0;
        r.sim.inject_disturbance(Disturbance { time: t, offset: Vector3::new(0.003, 0.0, -0.002) });
        r.run_to_end(100.0);
        r.exec.history().hash()
    };
    assert_eq!(run(), run());
}
