//! Forward kinematics, damped least-squares IK and the Jacobian on the
//! reference arm.

use nalgebra::Vector3;
use remanip::kinematics::{forward_kinematics, jacobian, solve_ik, IkOptions, JointVector, KinematicChain, Pose};

fn main() {
    let arm = KinematicChain::reference_arm();
    let home = JointVector(vec![0.0, 0.6, 1.4, 0.0, 1.1, 0.0]);
    let tool = forward_kinematics(&arm, &home).unwrap();
    println!("home tool position {:.3?}", tool.position.as_slice());

    let target = Pose::tool_down(Vector3::new(0.9, 0.25, -0.30));
    let sol = solve_ik(&arm, &target, &home, &IkOptions::default()).expect("target is reachable");
    println!(
        "IK: {} iterations, position error {:.2e} m, orientation error {:.2e} rad",
        sol.iterations, sol.position_error, sol.orientation_error
    );
    println!("joints {:.4?}", sol.joints.as_slice());

    let j = jacobian(&arm, &sol.joints).unwrap();
    println!("Jacobian at solution:\n{j:.3}");
}
