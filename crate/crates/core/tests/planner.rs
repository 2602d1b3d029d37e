mod common;

use common::{random_scenario, READY};
use nalgebra::{UnitQuaternion, Vector3};
use remanip::kinematics::{forward_kinematics, JointVector, KinematicChain, Pose};
use remanip::planner::*;
use remanip::scene::{Heightfield, SceneGraph, SceneObject, Shape};

fn tool_down(x: f64, y: f64, z: f64) -> Pose {
    Pose::tool_down(Vector3::new(x, y, z))
}

fn floor() -> SceneGraph {
    SceneGraph::new(Heightfield::flat([-3.0, -3.0], 0.25, 25, 25, -0.6))
}

/// Brute-force clearance: densify until the tool tip moves at most 1 mm,
/// then measure every proxy against every object independently.
fn dense_min_clearance(chain: &KinematicChain, scene: &SceneGraph, traj: &Trajectory) -> f64 {
    let mut worst = f64::INFINITY;
    for pair in traj.waypoints.windows(2) {
        let a = forward_kinematics(chain, &pair[0].q).unwrap().position;
        let b = forward_kinematics(chain, &pair[1].q).unwrap().position;
        let n = (((a - b).norm() / 1e-3).ceil() as usize).max(1) * 4;
        for k in 0..=n {
            let q = pair[0].q.lerp(&pair[1].q, k as f64 / n as f64);
            for (c, r) in chain.proxy_spheres(&q).unwrap() {
                for o in scene.objects() {
                    let d = match o.shape {
                        Shape::Box { size } => {
                            let local = o.pose.orientation.inverse() * (c - o.pose.position);
                            let mut sq = 0.0;
                            for i in 0..3 {
                                let excess = (local[i].abs() - size[i] / 2.0).max(0.0);
                                sq += excess * excess;
                            }
                            sq.sqrt()
                        }
                        Shape::Sphere { radius } => (c - o.pose.position).norm() - radius,
                        _ => unreachable!(),
                    };
                    worst = worst.min(d - r);
                }
            }
        }
    }
    worst
}

#[test]
fn empty_world_nearby_target() {
    let chain = KinematicChain::reference_arm();
    let world = CollisionWorld::empty();
    let start = JointVector(READY.to_vec());
    let target = tool_down(0.9, 0.2, 0.3);
    let traj = plan_to_pose(&chain, &world, &start, &target, 1, &PlannerConfig::default()).unwrap();
    assert!(validate_trajectory(&chain, &world, &traj).unwrap().passed());
    let end = forward_kinematics(&chain, traj.end().unwrap()).unwrap();
    assert!((end.position - target.position).norm() <= 1e-3);
}

#[test]
fn detours_around_box_between_start_and_goal() {
    let chain = KinematicChain::reference_arm();
    let start = JointVector(READY.to_vec());
    let a = forward_kinematics(&chain, &start).unwrap().position;
    let target = tool_down(a.x * 0.8f64.cos(), -a.x * 0.8f64.sin(), a.z);
    let wall = SceneObject::new(
        9,
        "wall",
        Pose::new(Vector3::new(0.9 * 0.4f64.cos(), -0.9 * 0.4f64.sin(), 0.05), UnitQuaternion::from_euler_angles(0.0, 0.0, -0.4)),
        Shape::Box { size: [0.15, 0.15, 1.3] },
    );
    let scene = floor().upsert_object(wall).unwrap();
    let world = CollisionWorld::new(&scene);
    // the straight joint-space line is blocked
    let direct = time_parameterize(&chain, &[start.clone(), remanip::kinematics::solve_ik(&chain, &target, &start, &Default::default()).unwrap().joints]).unwrap();
    assert!(!validate_trajectory(&chain, &world, &direct).unwrap().collision_free);

    let traj = plan_to_pose(&chain, &world, &start, &target, 3, &PlannerConfig::default()).unwrap();
    let report = validate_trajectory(&chain, &world, &traj).unwrap();
    assert!(report.passed());
    let dense = dense_min_clearance(&chain, &scene, &traj);
    assert!(dense >= DEFAULT_SAFETY_MARGIN - 1e-3, "dense oracle clearance {dense}");
}

#[test]
fn min_clearance_matches_brute_force() {
    let chain = KinematicChain::reference_arm();
    let ball = SceneObject::new(1, "ball", Pose::from_position(0.6, -0.5, 0.4), Shape::Sphere { radius: 0.15 });
    let scene = floor().upsert_object(ball.clone()).unwrap();
    let world = CollisionWorld::new(&scene);
    let path = [JointVector(READY.to_vec()), JointVector(vec![-0.6, 0.5, 1.2, 0.0, 1.2, 0.0])];
    let traj = time_parameterize(&chain, &path).unwrap();
    let report = validate_trajectory(&chain, &world, &traj).unwrap();
    // oracle over the same 0.5 degree samples: pairwise sphere distances plus the floor gap
    let n = ((path[0].max_abs_diff(&path[1]) / CHECK_STEP_RAD).ceil()) as usize;
    let mut oracle = f64::INFINITY;
    for k in 0..=n {
        let q = path[0].lerp(&path[1], k as f64 / n as f64);
        for (c, r) in chain.proxy_spheres(&q).unwrap() {
            oracle = oracle.min((c - ball.pose.position).norm() - 0.15 - r);
            oracle = oracle.min(c.z + 0.6 - r);
        }
    }
    assert!((report.min_clearance - oracle).abs() < 1e-6, "{} vs {}", report.min_clearance, oracle);
}

#[test]
fn start_inside_obstacle_is_rejected() {
    let chain = KinematicChain::reference_arm();
    let start = JointVector(READY.to_vec());
    let tip = forward_kinematics(&chain, &start).unwrap().position;
    let scene = floor().upsert_object(SceneObject::new(1, "rock", Pose::new(tip, Default::default()), Shape::Sphere { radius: 0.2 })).unwrap();
    let world = CollisionWorld::new(&scene);
    assert_eq!(
        plan_to_pose(&chain, &world, &start, &tool_down(0.5, 0.5, 0.2), 0, &PlannerConfig::default()).unwrap_err(),
        PlannerError::StartInCollision
    );
}

#[test]
fn unreachable_goal_is_reported() {
    let chain = KinematicChain::reference_arm();
    let world = CollisionWorld::empty();
    let err = plan_to_pose(&chain, &world, &JointVector(READY.to_vec()), &tool_down(4.0, 0.0, 0.0), 0, &PlannerConfig::default()).unwrap_err();
    assert!(matches!(err, PlannerError::GoalUnreachable(_)));
}

#[test]
fn guarded_descent_is_vertical_on_flat_terrain() {
    let chain = KinematicChain::reference_arm();
    let scene = floor();
    let world = CollisionWorld::new(&scene);
    let surface = Vector3::new(0.9, 0.1, -0.6);
    let hover = tool_down(surface.x, surface.y, surface.z + 0.10);
    let q_hover = remanip::kinematics::solve_ik(&chain, &hover, &JointVector(READY.to_vec()), &Default::default()).unwrap().joints;
    let down = -Vector3::z();
    let traj = plan_guarded_descent(&chain, &world, &q_hover, &surface, &down, &DescentConfig::default()).unwrap();
    assert!(traj.guarded);
    let lateral = lateral_deviation(&chain, &traj, &surface, &down).unwrap();
    assert!(lateral < 1e-3, "lateral deviation {lateral}");
    let end = forward_kinematics(&chain, traj.end().unwrap()).unwrap().position;
    assert!((end - surface).norm() <= 0.01);
    assert!(validate_trajectory(&chain, &world, &traj).unwrap().passed());

    let bad = Vector3::new(0.0, 0.0, -2.0);
    assert_eq!(plan_guarded_descent(&chain, &world, &q_hover, &surface, &bad, &DescentConfig::default()).unwrap_err(), PlannerError::InvalidApproach);
}

#[test]
fn planner_is_deterministic_per_seed() {
    let chain = KinematicChain::reference_arm();
    let s = random_scenario(&chain, 42);
    let world = CollisionWorld::new(&s.scene);
    let a = plan_to_pose(&chain, &world, &s.start, &s.target, 5, &PlannerConfig::default()).unwrap();
    let b = plan_to_pose(&chain, &world, &s.start, &s.target, 5, &PlannerConfig::default()).unwrap();
    assert_eq!(a.digest(), b.digest());
}

#[test]
fn random_scenes_success_rate() {
    let chain = KinematicChain::reference_arm();
    let mut ok = 0;
    for seed in 0..40 {
        let s = random_scenario(&chain, 1000 + seed);
        let world = CollisionWorld::new(&s.scene);
        if let Ok(traj) = plan_to_pose(&chain, &world, &s.start, &s.target, seed, &PlannerConfig::default()) {
            assert!(validate_trajectory(&chain, &world, &traj).unwrap().passed());
            ok += 1;
        }
    }
    assert!(ok >= 38, "{ok}/40");
}
