//! Bidirectional sampling-based planner (RRT-Connect) in joint space with
//! randomized shortcutting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{segment_free, time_parameterize, validate_trajectory, CollisionWorld, PlannerError, Trajectory};
use crate::kinematics::{solve_ik, IkOptions, JointVector, KinematicChain, KinematicsError, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    /// Cap on random samples drawn before giving up.
    pub max_samples: usize,
    /// Euclidean joint-space extension step (rad).
    pub extend_step: f64,
    pub shortcut_attempts: usize,
    /// IK seeds tried for the goal pose: the start plus random configurations.
    pub goal_seeds: usize,
    pub ik: IkOptions,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { max_samples: 20_000, extend_step: 0.2, shortcut_attempts: 200, goal_seeds: 8, ik: IkOptions::default() }
    }
}

struct Tree {
    nodes: Vec<(JointVector, Option<usize>)>,
}

enum Extend {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

impl Tree {
    fn new(roots: impl IntoIterator<Item = JointVector>) -> Self {
        Self { nodes: roots.into_iter().map(|q| (q, None)).collect() }
    }

    fn nearest(&self, q: &JointVector) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, (n, _)) in self.nodes.iter().enumerate() {
            let d = n.distance(q);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn extend(&mut self, chain: &KinematicChain, world: &CollisionWorld<'_>, target: &JointVector, step: f64) -> Extend {
        let near = self.nearest(target);
        let from = &self.nodes[near].0;
        let d = from.distance(target);
        let (next, reached) = if d <= step { (target.clone(), true) } else { (from.lerp(target, step / d), false) };
        if !segment_free(chain, world, from, &next, false) {
            return Extend::Trapped;
        }
        self.nodes.push((next, Some(near)));
        let id = self.nodes.len() - 1;
        if reached {
            Extend::Reached(id)
        } else {
            Extend::Advanced(id)
        }
    }

    fn connect(&mut self, chain: &KinematicChain, world: &CollisionWorld<'_>, target: &JointVector, step: f64) -> Option<usize> {
        loop {
            match self.extend(chain, world, target, step) {
                Extend::Trapped => return None,
                Extend::Reached(id) => return Some(id),
                Extend::Advanced(_) => {}
            }
        }
    }

    /// Root-to-node path.
    fn path_to(&self, mut id: usize) -> Vec<JointVector> {
        let mut out = vec![self.nodes[id].0.clone()];
        while let Some(parent) = self.nodes[id].1 {
            id = parent;
            out.push(self.nodes[id].0.clone());
        }
        out.reverse();
        out
    }
}

fn random_config(chain: &KinematicChain, rng: &mut ChaCha8Rng) -> JointVector {
    JointVector(chain.links().iter().map(|l| rng.random_range(l.limits[0]..=l.limits[1])).collect())
}

fn shortcut(chain: &KinematicChain, world: &CollisionWorld<'_>, mut path: Vec<JointVector>, attempts: usize, rng: &mut ChaCha8Rng) -> Vec<JointVector> {
    for _ in 0..attempts {
        if path.len() < 3 {
            break;
        }
        let i = rng.random_range(0..path.len() - 2);
        let j = rng.random_range(i + 2..path.len());
        if segment_free(chain, world, &path[i], &path[j], false) {
            path.drain(i + 1..j);
        }
    }
    path
}

fn check_start(chain: &KinematicChain, world: &CollisionWorld<'_>, q_start: &JointVector) -> Result<(), PlannerError> {
    if q_start.len() != chain.dof() {
        return Err(KinematicsError::DimensionMismatch { expected: chain.dof(), got: q_start.len() }.into());
    }
    if !chain.within_limits(q_start) || !world.is_free(chain, q_start, false) {
        return Err(PlannerError::StartInCollision);
    }
    Ok(())
}

fn connect_trees(
    chain: &KinematicChain,
    world: &CollisionWorld<'_>,
    q_start: &JointVector,
    goals: Vec<JointVector>,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<JointVector>, PlannerError> {
    for g in &goals {
        if segment_free(chain, world, q_start, g, false) {
            return Ok(vec![q_start.clone(), g.clone()]);
        }
    }
    let mut start_tree = Tree::new([q_start.clone()]);
    let mut goal_tree = Tree::new(goals);
    let mut start_side = true;
    for _ in 0..cfg.max_samples {
        let sample = random_config(chain, rng);
        let (grow, other) = if start_side { (&mut start_tree, &mut goal_tree) } else { (&mut goal_tree, &mut start_tree) };
        let new_id = match grow.extend(chain, world, &sample, cfg.extend_step) {
            Extend::Trapped => None,
            Extend::Advanced(id) | Extend::Reached(id) => Some(id),
        };
        if let Some(id) = new_id {
            let q_new = grow.nodes[id].0.clone();
            if let Some(joined) = other.connect(chain, world, &q_new, cfg.extend_step) {
                let (a, b) = if start_side { (grow.path_to(id), other.path_to(joined)) } else { (other.path_to(joined), grow.path_to(id)) };
                let mut path = a;
                path.extend(b.into_iter().rev().skip(1));
                return Ok(path);
            }
        }
        start_side = !start_side;
    }
    Err(PlannerError::PlanningTimeout(cfg.max_samples))
}

fn finish(chain: &KinematicChain, world: &CollisionWorld<'_>, path: Vec<JointVector>, cfg: &PlannerConfig, rng: &mut ChaCha8Rng) -> Result<Trajectory, PlannerError> {
    let path = shortcut(chain, world, path, cfg.shortcut_attempts, rng);
    let traj = time_parameterize(chain, &path)?;
    if !validate_trajectory(chain, world, &traj)?.passed() {
        return Err(PlannerError::MalformedTrajectory("planned path failed dense validation".into()));
    }
    Ok(traj)
}

/// Plans a collision-free joint path from `q_start` to an IK solution of
/// `target`. Deterministic for a given `rng_seed`.
pub fn plan_to_pose(
    chain: &KinematicChain,
    world: &CollisionWorld<'_>,
    q_start: &JointVector,
    target: &Pose,
    rng_seed: u64,
    cfg: &PlannerConfig,
) -> Result<Trajectory, PlannerError> {
    check_start(chain, world, q_start)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seeds = vec![q_start.clone()];
    while seeds.len() < cfg.goal_seeds.max(1) {
        seeds.push(random_config(chain, &mut rng));
    }
    let mut goals: Vec<JointVector> = Vec::new();
    let mut best_error = f64::INFINITY;
    for seed in &seeds {
        match solve_ik(chain, target, seed, &cfg.ik) {
            Ok(sol) => {
                if world.is_free(chain, &sol.joints, false) && goals.iter().all(|g| g.max_abs_diff(&sol.joints) > 1e-3) {
                    goals.push(sol.joints);
                }
            }
            Err(KinematicsError::Unreachable { best }) => best_error = best_error.min(best.position_error),
            Err(e) => return Err(e.into()),
        }
    }
    if goals.is_empty() {
        return Err(PlannerError::GoalUnreachable(if best_error.is_finite() {
            format!("no collision-free IK solution (best position error {best_error:.4} m)")
        } else {
            "every IK solution is in collision".into()
        }));
    }
    goals.sort_by(|a, b| a.distance(q_start).total_cmp(&b.distance(q_start)));
    let path = connect_trees(chain, world, q_start, goals, cfg, &mut rng)?;
    finish(chain, world, path, cfg, &mut rng)
}

/// Plans a collision-free joint path between two configurations.
pub fn plan_to_config(
    chain: &KinematicChain,
    world: &CollisionWorld<'_>,
    q_start: &JointVector,
    q_goal: &JointVector,
    rng_seed: u64,
    cfg: &PlannerConfig,
) -> Result<Trajectory, PlannerError> {
    check_start(chain, world, q_start)?;
    if q_goal.len() != chain.dof() || !chain.within_limits(q_goal) || !world.is_free(chain, q_goal, false) {
        return Err(PlannerError::GoalUnreachable("goal configuration is in collision or outside limits".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let path = connect_trees(chain, world, q_start, vec![q_goal.clone()], cfg, &mut rng)?;
    finish(chain, world, path, cfg, &mut rng)
}
