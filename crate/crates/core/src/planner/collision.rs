use crate::kinematics::{JointVector, KinematicChain, KinematicsError};
use crate::scene::SceneGraph;

/// Default clearance every proxy sphere must keep from the environment.
pub const DEFAULT_SAFETY_MARGIN: f64 = 0.02;

/// Proxies on frames this close in the chain never self-collide.
const SELF_COLLISION_FRAME_GAP: usize = 2;

/// Robot collision model (spheres on link frames) against a scene snapshot.
///
/// Proxies default to the chain's own; a world without a scene only checks
/// self-collision.
#[derive(Debug, Clone)]
pub struct CollisionWorld<'a> {
    pub scene: Option<&'a SceneGraph>,
    pub safety_margin: f64,
    pub self_collision: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clearance {
    /// Minimum proxy-to-environment distance; `INFINITY` with nothing to hit.
    pub environment: f64,
    pub self_collision: bool,
}

impl<'a> CollisionWorld<'a> {
    pub fn new(scene: &'a SceneGraph) -> Self {
        Self { scene: Some(scene), safety_margin: DEFAULT_SAFETY_MARGIN, self_collision: true }
    }

    pub fn empty() -> Self {
        Self { scene: None, safety_margin: DEFAULT_SAFETY_MARGIN, self_collision: true }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        assert!(margin >= 0.0, "safety margin must be non-negative");
        self.safety_margin = margin;
        self
    }

    /// Clearance at one configuration. With `guarded`, tool proxies are not
    /// checked against terrain: contact with the seafloor is the point of the move.
    pub fn clearance(&self, chain: &KinematicChain, q: &JointVector, guarded: bool) -> Result<Clearance, KinematicsError> {
        let spheres = chain.proxy_spheres(q)?;
        let mut environment = f64::INFINITY;
        if let Some(scene) = self.scene {
            for ((center, radius), proxy) in spheres.iter().zip(chain.proxies()) {
                if let Some((_, d)) = scene.object_distance(center) {
                    environment = environment.min(d - radius);
                }
                if !(guarded && proxy.tool) {
                    if let Some(d) = scene.terrain().clearance(center) {
                        environment = environment.min(d - radius);
                    }
                }
            }
        }
        let mut self_collision = false;
        if self.self_collision {
            let proxies = chain.proxies();
            'outer: for i in 0..spheres.len() {
                for j in (i + 1)..spheres.len() {
                    if proxies[i].frame.abs_diff(proxies[j].frame) <= SELF_COLLISION_FRAME_GAP {
                        continue;
                    }
                    let (ci, ri) = spheres[i];
                    let (cj, rj) = spheres[j];
                    if (ci - cj).norm() < ri + rj {
                        self_collision = true;
                        break 'outer;
                    }
                }
            }
        }
        Ok(Clearance { environment, self_collision })
    }

    pub fn is_free(&self, chain: &KinematicChain, q: &JointVector, guarded: bool) -> bool {
        match self.clearance(chain, q, guarded) {
            Ok(c) => !c.self_collision && c.environment >= self.safety_margin,
            Err(_) => false,
        }
    }
}
