use nalgebra::Vector3;

use super::{subdivisions, validate_trajectory, CollisionWorld, PlannerError, Trajectory, Waypoint};
use crate::kinematics::{forward_kinematics, solve_ik, IkOptions, JointVector, KinematicChain, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    /// Cartesian spacing of IK waypoints along the line (m).
    pub step: f64,
    /// Distance planned past the surface point so contact is always sensed (m).
    pub overshoot: f64,
    /// End-effector speed along the line (m/s).
    pub speed: f64,
    /// Largest tolerated distance of the planned tool track from the line (m).
    pub max_lateral: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self { step: 0.005, overshoot: 0.005, speed: 0.02, max_lateral: 0.01 }
    }
}

/// Maximum distance of the end-effector track (densified like validation)
/// from the line through `origin` along unit `direction`.
pub fn lateral_deviation(chain: &KinematicChain, traj: &Trajectory, origin: &Vector3<f64>, direction: &Vector3<f64>) -> Result<f64, PlannerError> {
    let off_line = |q: &JointVector| -> Result<f64, PlannerError> {
        let v = forward_kinematics(chain, q)?.position - origin;
        Ok((v - direction * v.dot(direction)).norm())
    };
    let mut worst = match traj.waypoints.first() {
        Some(w) => off_line(&w.q)?,
        None => return Ok(0.0),
    };
    for pair in traj.waypoints.windows(2) {
        let n = subdivisions(&pair[0].q, &pair[1].q);
        for k in 1..=n {
            worst = worst.max(off_line(&pair[0].q.lerp(&pair[1].q, k as f64 / n as f64))?);
        }
    }
    Ok(worst)
}

/// Straight-line Cartesian descent from the current tool position toward
/// `surface_point` along `approach`, keeping the start orientation. The plan
/// ends `overshoot` past the surface and is flagged guarded so execution stops
/// at first contact.
pub fn plan_guarded_descent(
    chain: &KinematicChain,
    world: &CollisionWorld<'_>,
    q_start: &JointVector,
    surface_point: &Vector3<f64>,
    approach: &Vector3<f64>,
    cfg: &DescentConfig,
) -> Result<Trajectory, PlannerError> {
    if !((approach.norm() - 1.0).abs() <= 1e-6) {
        return Err(PlannerError::InvalidApproach);
    }
    let start = forward_kinematics(chain, q_start)?;
    let to_surface = surface_point - start.position;
    let along = to_surface.dot(approach);
    if along <= 0.0 {
        return Err(PlannerError::GoalUnreachable("end effector is not above the surface point".into()));
    }
    if (to_surface - approach * along).norm() > cfg.max_lateral {
        return Err(PlannerError::GoalUnreachable("end effector is not on the approach line".into()));
    }
    // the track follows the approach line through the surface point
    let line_origin = surface_point - approach * along;
    let total = along + cfg.overshoot;
    let steps = (total / cfg.step).ceil().max(1.0) as usize;
    let ik = IkOptions { tol_pos: 1e-4, tol_rot: 1e-3, ..IkOptions::default() };

    let mut waypoints = vec![Waypoint { t: 0.0, q: q_start.clone() }];
    let mut q = q_start.clone();
    let mut last_point = start.position;
    for k in 1..=steps {
        let point = line_origin + approach * (total * k as f64 / steps as f64);
        let target = Pose::new(point, start.orientation);
        let sol = solve_ik(chain, &target, &q, &ik)
            .map_err(|e| PlannerError::GoalUnreachable(format!("descent step {k}: {e}")))?;
        let joint_time = q
            .iter()
            .zip(sol.joints.iter())
            .zip(chain.max_rates())
            .map(|((a, b), rate)| (b - a).abs() / rate)
            .fold(0.0, f64::max);
        let dt = joint_time.max((point - last_point).norm() / cfg.speed);
        let t = waypoints.last().expect("non-empty").t + dt;
        q = sol.joints;
        last_point = point;
        waypoints.push(Waypoint { t, q: q.clone() });
    }
    let traj = Trajectory { waypoints, guarded: true };
    let deviation = lateral_deviation(chain, &traj, surface_point, approach)?;
    if deviation > cfg.max_lateral {
        return Err(PlannerError::GoalUnreachable(format!("descent deviates {deviation:.4} m from the approach line")));
    }
    let report = validate_trajectory(chain, world, &traj)?;
    if !report.passed() {
        return Err(PlannerError::GoalUnreachable("descent path is obstructed".into()));
    }
    Ok(traj)
}
