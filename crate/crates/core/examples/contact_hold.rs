//! One XRF task through the executive: preview, confirm, guarded descent,
//! a 5 mm base disturbance during the 60 s hold, and the result.

use nalgebra::Vector3;
use remanip::command::{Goal, Provenance, Target, TargetSource, TaskGoal};
use remanip::executive::{Executive, ExecutiveConfig, Phase, TICK_S};
use remanip::kinematics::KinematicChain;
use remanip::sim::{Disturbance, VehicleSim, Worksite};

fn main() {
    let ws = Worksite::shipped();
    let arm = KinematicChain::reference_arm();
    let scene = ws.scene().unwrap();
    let mut sim = VehicleSim::for_worksite(arm.clone(), &ws);
    let mut exec = Executive::new(arm, ExecutiveConfig { home: Some(ws.home.clone()), ..ExecutiveConfig::default() });

    let goal = TaskGoal {
        goal: Goal::XrfMeasure { target: Target::Point(Vector3::new(0.95, 0.32, 0.0)), integration_s: 60.0 },
        provenance: Provenance { operator_id: "pilot".into(), utterance: "take an xrf measurement at (0.95, 0.32, 0)".into(), utterance_time: 0.0, gesture_id: None, source: TargetSource::Utterance },
    };
    exec.acquire_token("pilot", 0.0).unwrap();
    exec.propose("pilot", 0.0, goal).unwrap();
    let id = exec.build_preview(0.0, &scene, &sim).unwrap().id;
    exec.confirm("pilot", 0.0, id, &scene, &mut sim).unwrap();

    let mut disturbed = false;
    let mut worst: f64 = 0.0;
    while !matches!(exec.phase(), Phase::Done | Phase::Aborted) {
        if let Some(h) = exec.tick(TICK_S, &mut sim) {
            worst = worst.max(h.deviation);
            if !disturbed && h.elapsed >= 10.0 {
                sim.inject_disturbance(Disturbance { time: sim.clock(), offset: Vector3::new(0.005, 0.0, 0.0) });
                disturbed = true;
            }
        }
    }
    println!("phase {:?} at t = {:.2} s, max hold deviation {:.2} mm", exec.phase(), sim.clock(), worst * 1e3);
    for r in exec.history().records() {
        println!("{:>7.2}  {}", r.timestamp, r.event);
    }
}
