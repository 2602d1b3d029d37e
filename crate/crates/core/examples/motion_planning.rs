//! Plans around a box obstacle, validates the path densely and plans a
//! guarded vertical descent to the seafloor.

use nalgebra::Vector3;
use remanip::kinematics::{JointVector, KinematicChain, Pose};
use remanip::planner::{plan_guarded_descent, plan_to_pose, validate_trajectory, CollisionWorld, DescentConfig, PlannerConfig};
use remanip::scene::{Heightfield, SceneGraph, SceneObject, Shape};

fn main() {
    let arm = KinematicChain::reference_arm();
    let scene = SceneGraph::new(Heightfield::flat([-3.0, -3.0], 0.25, 25, 25, -0.5))
        .upsert_object(SceneObject::new(1, "crate", Pose::from_position(0.75, 0.0, -0.35), Shape::Box { size: [0.2, 0.5, 0.3] }))
        .unwrap();
    let world = CollisionWorld::new(&scene);
    let start = JointVector(vec![0.0, 0.6, 1.4, 0.0, 1.1, 0.0]);
    let hover = Pose::tool_down(Vector3::new(0.8, -0.35, -0.35));

    let traj = plan_to_pose(&arm, &world, &start, &hover, 1, &PlannerConfig::default()).expect("feasible");
    let report = validate_trajectory(&arm, &world, &traj).unwrap();
    println!(
        "{} waypoints, {:.2} s, min clearance {:.3} m, passed {}, digest {}",
        traj.waypoints.len(),
        traj.duration(),
        report.min_clearance,
        report.passed(),
        &traj.digest()[..16]
    );

    let above = traj.end().unwrap();
    let descent = plan_guarded_descent(&arm, &world, above, &Vector3::new(0.8, -0.35, -0.5), &-Vector3::z(), &DescentConfig::default()).unwrap();
    println!("guarded descent: {} waypoints over {:.2} s", descent.waypoints.len(), descent.duration());
}
