//! Joint-space motion planning over the scene, dense trajectory validation
//! and the guarded Cartesian descent used to place contact instruments.

mod collision;
mod descent;
mod rrt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{JointVector, KinematicChain, KinematicsError};

pub use collision::{Clearance, CollisionWorld, DEFAULT_SAFETY_MARGIN};
pub use descent::{lateral_deviation, plan_guarded_descent, DescentConfig};
pub use rrt::{plan_to_config, plan_to_pose, PlannerConfig};

/// Densification step for collision checks along joint-space segments (0.5°).
pub const CHECK_STEP_RAD: f64 = 0.5 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlannerError {
    #[error("start configuration is in collision or outside joint limits")]
    StartInCollision,
    #[error("goal unreachable: {0}")]
    GoalUnreachable(String),
    #[error("no path found within {0} samples")]
    PlanningTimeout(usize),
    #[error("approach direction must be unit length")]
    InvalidApproach,
    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),
    #[error("empty path")]
    EmptyPath,
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub q: JointVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    /// Execution stops at the first sensed contact.
    pub guarded: bool,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    pub fn start(&self) -> Option<&JointVector> {
        self.waypoints.first().map(|w| &w.q)
    }

    pub fn end(&self) -> Option<&JointVector> {
        self.waypoints.last().map(|w| &w.q)
    }

    /// Linear interpolation in joint space at time `t` (clamped to the ends).
    pub fn sample(&self, t: f64) -> Option<JointVector> {
        let first = self.waypoints.first()?;
        if t <= first.t {
            return Some(first.q.clone());
        }
        for pair in self.waypoints.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if t <= b.t {
                return Some(a.q.lerp(&b.q, (t - a.t) / (b.t - a.t)));
            }
        }
        self.end().cloned()
    }

    /// Stable digest of the exact waypoint bits.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update([self.guarded as u8]);
        for w in &self.waypoints {
            h.update(w.t.to_bits().to_be_bytes());
            for v in w.q.iter() {
                h.update(v.to_bits().to_be_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn check_well_formed(&self, chain: &KinematicChain) -> Result<(), PlannerError> {
        let bad = |m: String| Err(PlannerError::MalformedTrajectory(m));
        let Some(first) = self.waypoints.first() else {
            return bad("no waypoints".into());
        };
        if first.t != 0.0 {
            return bad(format!("first waypoint at t = {}", first.t));
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if w.q.len() != chain.dof() || w.q.iter().any(|v| !v.is_finite()) || !w.t.is_finite() {
                return bad(format!("waypoint {i} has an invalid configuration"));
            }
        }
        for (i, pair) in self.waypoints.windows(2).enumerate() {
            if !(pair[1].t > pair[0].t) {
                return bad(format!("time not strictly increasing at waypoint {}", i + 1));
            }
        }
        Ok(())
    }
}

/// Number of equal sub-steps keeping every joint move at or below `CHECK_STEP_RAD`.
pub(crate) fn subdivisions(a: &JointVector, b: &JointVector) -> usize {
    ((a.max_abs_diff(b) / CHECK_STEP_RAD).ceil() as usize).max(1)
}

/// Checks the open-closed segment `(a, b]` at the validation resolution.
pub(crate) fn segment_free(chain: &KinematicChain, world: &CollisionWorld<'_>, a: &JointVector, b: &JointVector, guarded: bool) -> bool {
    let n = subdivisions(a, b);
    (1..=n).all(|k| world.is_free(chain, &a.lerp(b, k as f64 / n as f64), guarded))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub collision_free: bool,
    pub first_violation: Option<f64>,
    /// `INFINITY` when there is no environment geometry.
    pub min_clearance: f64,
    pub within_limits: bool,
    pub within_rate_limits: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.collision_free && self.within_limits && self.within_rate_limits
    }
}

/// Densifies every segment to joint steps of at most 0.5° and evaluates the
/// exact proxy clearance at each sample.
pub fn validate_trajectory(chain: &KinematicChain, world: &CollisionWorld<'_>, traj: &Trajectory) -> Result<ValidationReport, PlannerError> {
    traj.check_well_formed(chain)?;
    let mut report = ValidationReport {
        collision_free: true,
        first_violation: None,
        min_clearance: f64::INFINITY,
        within_limits: true,
        within_rate_limits: true,
    };
    let mut visit = |t: f64, q: &JointVector| -> Result<(), PlannerError> {
        let c = world.clearance(chain, q, traj.guarded)?;
        report.min_clearance = report.min_clearance.min(c.environment);
        if (c.self_collision || c.environment < world.safety_margin) && report.collision_free {
            report.collision_free = false;
            report.first_violation = Some(t);
        }
        if !chain.within_limits(q) {
            report.within_limits = false;
        }
        Ok(())
    };
    let first = &traj.waypoints[0];
    visit(first.t, &first.q)?;
    for pair in traj.waypoints.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let n = subdivisions(&a.q, &b.q);
        for k in 1..=n {
            let s = k as f64 / n as f64;
            visit(a.t + (b.t - a.t) * s, &a.q.lerp(&b.q, s))?;
        }
        let dt = b.t - a.t;
        for ((qa, qb), rate) in a.q.iter().zip(b.q.iter()).zip(chain.max_rates()) {
            if (qb - qa).abs() > rate * dt * (1.0 + 1e-9) + 1e-12 {
                report.within_rate_limits = false;
            }
        }
    }
    Ok(report)
}

fn segment_duration(chain: &KinematicChain, a: &JointVector, b: &JointVector, speed_scale: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .zip(chain.max_rates())
        .map(|((x, y), rate)| (y - x).abs() / (rate * speed_scale))
        .fold(0.0, f64::max)
}

/// Each segment lasts as long as its slowest joint needs at full rate.
/// Consecutive duplicate configurations are merged.
pub fn time_parameterize(chain: &KinematicChain, path: &[JointVector]) -> Result<Trajectory, PlannerError> {
    time_parameterize_scaled(chain, path, 1.0)
}

/// As [`time_parameterize`], with every joint rate multiplied by `speed_scale` (in `(0, 1]`).
pub fn time_parameterize_scaled(chain: &KinematicChain, path: &[JointVector], speed_scale: f64) -> Result<Trajectory, PlannerError> {
    let Some(first) = path.first() else {
        return Err(PlannerError::EmptyPath);
    };
    assert!(speed_scale > 0.0 && speed_scale <= 1.0, "speed scale must lie in (0, 1]");
    for q in path {
        if q.len() != chain.dof() {
            return Err(KinematicsError::DimensionMismatch { expected: chain.dof(), got: q.len() }.into());
        }
    }
    let mut waypoints = vec![Waypoint { t: 0.0, q: first.clone() }];
    for q in &path[1..] {
        let last = waypoints.last().expect("non-empty");
        let dt = segment_duration(chain, &last.q, q, speed_scale);
        if dt > 0.0 {
            let t = last.t + dt;
            waypoints.push(Waypoint { t, q: q.clone() });
        }
    }
    Ok(Trajectory { waypoints, guarded: false })
}
