//! Kinematic simulation of the vehicle-mounted arm, seafloor contact sensing,
//! push-core sampling and the XRF instrument.

mod worksite;
pub mod xrf;

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{forward_kinematics, JointVector, KinematicChain, Pose};
use crate::planner::Trajectory;
use crate::scene::Heightfield;

pub use worksite::{Worksite, WorksiteError};
pub use xrf::{SiteComposition, XrfError, XrfInstrument, XrfSourceParams, XrfSpectrum};

/// Tool height above the seafloor at which contact is declared (m).
pub const CONTACT_THRESHOLD: f64 = 1e-3;
/// Height the tool must exceed before contact is released (m).
pub const CONTACT_RELEASE: f64 = 2e-3;
pub const CORE_TOLERANCE: f64 = 0.01;
pub const CORE_MAX_TILT_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub in_contact: bool,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

/// Step change of the vehicle base position at a given sim time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub time: f64,
    pub offset: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Motion {
    Idle,
    Track { trajectory: Trajectory, started_at: f64 },
    Hold { target: JointVector },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub contact_changed: bool,
    /// A guarded trajectory stopped on contact this tick.
    pub froze: bool,
    /// The active trajectory reached its end this tick.
    pub finished: bool,
    pub disturbed: bool,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum SimError {
    #[error("tool is not in contact with the seafloor")]
    NotInContact,
    #[error("simulation is halted")]
    Halted,
    #[error("trajectory does not start at the current configuration")]
    TrajectoryMismatch,
    #[error("simulation has no worksite composition")]
    NoSite,
}

/// Core acceptance; both limits are inclusive.
pub fn core_accepted(horizontal_error: f64, tilt_deg: f64) -> bool {
    horizontal_error <= CORE_TOLERANCE && tilt_deg <= CORE_MAX_TILT_DEG
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreResult {
    pub success: bool,
    pub achieved: Vector3<f64>,
    pub target: Vector3<f64>,
    pub horizontal_error: f64,
    pub tilt_deg: f64,
    pub region: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleSim {
    chain: KinematicChain,
    terrain: Heightfield,
    q: JointVector,
    clock: f64,
    motion: Motion,
    contact: Contact,
    halted: bool,
    base_offset: Vector3<f64>,
    pending: Vec<Disturbance>,
    ticks: u64,
    site: Option<SiteTruth>,
}

/// Ground truth the instrument samples; hidden from the planning side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTruth {
    pub composition: SiteComposition,
    pub instrument: XrfInstrument,
}

impl VehicleSim {
    pub fn new(chain: KinematicChain, terrain: Heightfield, q: JointVector) -> Self {
        let mut sim = Self {
            chain,
            terrain,
            q,
            clock: 0.0,
            motion: Motion::Idle,
            contact: Contact { in_contact: false, point: Vector3::zeros(), normal: Vector3::z() },
            halted: false,
            base_offset: Vector3::zeros(),
            pending: Vec::new(),
            ticks: 0,
            site: None,
        };
        sim.update_contact();
        sim
    }

    /// Simulation of a worksite fixture with the arm at its home configuration.
    pub fn for_worksite(chain: KinematicChain, worksite: &Worksite) -> Self {
        let mut sim = Self::new(chain, worksite.terrain.clone(), worksite.home.clone());
        sim.site = Some(SiteTruth { composition: worksite.composition.clone(), instrument: worksite.instrument.clone() });
        sim
    }

    pub fn with_site(mut self, site: SiteTruth) -> Self {
        self.site = Some(site);
        self
    }

    pub fn site(&self) -> Option<&SiteTruth> {
        self.site.as_ref()
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn q(&self) -> &JointVector {
        &self.q
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn contact(&self) -> Contact {
        self.contact
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn is_tracking(&self) -> bool {
        matches!(self.motion, Motion::Track { .. })
    }

    pub fn base_offset(&self) -> Vector3<f64> {
        self.base_offset
    }

    pub fn terrain(&self) -> &Heightfield {
        &self.terrain
    }

    pub fn set_terrain(&mut self, terrain: Heightfield) {
        self.terrain = terrain;
        self.update_contact();
    }

    /// World pose of the tool: arm forward kinematics shifted by the base offset.
    pub fn tool_pose(&self) -> Pose {
        let mut p = forward_kinematics(&self.chain, &self.q).expect("sim configuration matches chain");
        p.position += self.base_offset;
        p
    }

    /// Applies `offset` to the vehicle base once the clock reaches `time`.
    pub fn inject_disturbance(&mut self, d: Disturbance) {
        if d.offset != Vector3::zeros() {
            self.pending.push(d);
            self.pending.sort_by(|a, b| a.time.total_cmp(&b.time));
        }
    }

    /// Starts streaming a trajectory from the current configuration.
    pub fn execute(&mut self, trajectory: Trajectory) -> Result<(), SimError> {
        if self.halted {
            return Err(SimError::Halted);
        }
        match trajectory.start() {
            Some(q0) if q0.max_abs_diff(&self.q) <= 1e-6 => {}
            _ => return Err(SimError::TrajectoryMismatch),
        }
        self.motion = Motion::Track { trajectory, started_at: self.clock };
        Ok(())
    }

    /// Servo setpoint for hold control.
    pub fn set_target(&mut self, target: JointVector) -> Result<(), SimError> {
        if self.halted {
            return Err(SimError::Halted);
        }
        self.motion = Motion::Hold { target: self.chain.clamp(&target) };
        Ok(())
    }

    pub fn stop_motion(&mut self) {
        self.motion = Motion::Idle;
    }

    pub fn halt(&mut self) {
        self.halted = true;
        self.motion = Motion::Idle;
    }

    pub fn resume(&mut self) {
        self.halted = false;
    }

    fn update_contact(&mut self) -> bool {
        let tip = self.tool_pose().position;
        let was = self.contact.in_contact;
        let height = self.terrain.height_at(tip.x, tip.y).ok().map(|h| tip.z - h);
        let now = match height {
            Some(h) if was => h <= CONTACT_RELEASE,
            Some(h) => h <= CONTACT_THRESHOLD,
            None => false,
        };
        if now && !was {
            let normal = self.terrain.surface_normal(tip.x, tip.y).unwrap_or(Vector3::z());
            self.contact = Contact { in_contact: true, point: tip, normal };
        } else if !now {
            self.contact.in_contact = false;
        }
        now != was
    }

    /// Advances one tick: rate-limited motion toward the setpoint, then
    /// disturbances and contact sensing.
    pub fn step(&mut self, dt: f64) -> StepReport {
        assert!(dt > 0.0, "tick must be positive");
        let mut report = StepReport::default();
        self.clock += dt;
        self.ticks += 1;
        if !self.halted {
            let setpoint = match &self.motion {
                Motion::Idle => None,
                Motion::Track { trajectory, started_at } => {
                    let t = self.clock - started_at;
                    if t >= trajectory.duration() {
                        report.finished = true;
                    }
                    trajectory.sample(t)
                }
                Motion::Hold { target } => Some(target.clone()),
            };
            if let Some(sp) = setpoint {
                let next: Vec<f64> = self
                    .q
                    .iter()
                    .zip(sp.iter())
                    .zip(self.chain.max_rates())
                    .map(|((q, s), rate)| q + (s - q).clamp(-rate * dt, rate * dt))
                    .collect();
                self.q = JointVector(next);
                if report.finished && self.q.max_abs_diff(&sp) > 1e-9 {
                    // still catching up with the final setpoint
                    report.finished = false;
                }
            }
        }
        while self.pending.first().is_some_and(|d| d.time <= self.clock) {
            let d = self.pending.remove(0);
            self.base_offset += d.offset;
            report.disturbed = true;
        }
        report.contact_changed = self.update_contact();
        if let Motion::Track { trajectory, .. } = &self.motion {
            if trajectory.guarded && self.contact.in_contact {
                self.motion = Motion::Idle;
                report.froze = true;
                report.finished = false;
            } else if report.finished {
                self.motion = Motion::Idle;
            }
        }
        report
    }

    /// Evaluates a push core taken at the current tool pose.
    pub fn push_core(&self, target: &Vector3<f64>) -> Result<CoreResult, SimError> {
        let site = &self.site.as_ref().ok_or(SimError::NoSite)?.composition;
        if !self.contact.in_contact {
            return Err(SimError::NotInContact);
        }
        let pose = self.tool_pose();
        let achieved = pose.position;
        let horizontal_error = (achieved.xy() - target.xy()).norm();
        let insertion = pose.orientation * Vector3::z();
        let tilt_deg = (-insertion).angle(&self.contact.normal).to_degrees();
        let (region, _) = site.at(achieved.x, achieved.y);
        Ok(CoreResult {
            success: core_accepted(horizontal_error, tilt_deg),
            achieved,
            target: *target,
            horizontal_error,
            tilt_deg,
            region: region.to_string(),
        })
    }

    /// Starts an XRF integration at the current contact point.
    pub fn begin_acquisition(&self, params: XrfSourceParams, seed: u64) -> Result<Acquisition, XrfError> {
        params.validate()?;
        let truth = self.site.as_ref().ok_or(XrfError::Composition("simulation has no worksite".into()))?;
        let (site, instrument) = (&truth.composition, &truth.instrument);
        if !self.contact.in_contact {
            return Err(XrfError::NotInContact);
        }
        let p = self.contact.point;
        let (region, composition) = site.at(p.x, p.y);
        Ok(Acquisition {
            rate: instrument.expected_spectrum(composition, &params, 1.0),
            params,
            live_time: 0.0,
            region: region.to_string(),
            seed,
        })
    }
}

/// An XRF integration in progress. Counts depend only on the accumulated
/// live time, so a partial acquisition is a valid shorter spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    rate: Vec<f64>,
    pub params: XrfSourceParams,
    pub live_time: f64,
    pub region: String,
    seed: u64,
}

impl Acquisition {
    /// Integrates for up to `dt` more seconds; true once complete.
    pub fn advance(&mut self, dt: f64) -> bool {
        self.live_time = (self.live_time + dt).min(self.params.integration_s);
        self.is_complete()
    }

    pub fn is_complete(&self) -> bool {
        self.live_time >= self.params.integration_s - 1e-9
    }

    pub fn finish(&self) -> XrfSpectrum {
        let expected: Vec<f64> = self.rate.iter().map(|r| r * self.live_time).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        xrf::realize_spectrum(&expected, self.params, self.live_time, &mut rng)
    }
}

/// Rotation that points the tool axis along `-normal`, keeping the given yaw.
pub fn insertion_orientation(normal: &Vector3<f64>, yaw: f64) -> UnitQuaternion<f64> {
    let down = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::PI);
    let tilt = UnitQuaternion::rotation_between(&Vector3::z(), normal).unwrap_or_else(UnitQuaternion::identity);
    tilt * down
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::Waypoint;

    fn planar() -> VehicleSim {
        VehicleSim::new(KinematicChain::planar_2r(), Heightfield::flat([-5.0, -5.0], 0.5, 21, 21, -5.0), JointVector(vec![0.0, 0.0]))
    }

    #[test]
    fn idle_sim_does_not_move() {
        let mut sim = planar();
        sim.step(0.1);
        assert_eq!(sim.q().0, vec![0.0, 0.0]);
    }

    #[test]
    fn rate_clamp_is_exact() {
        let mut sim = planar();
        sim.set_target(JointVector(vec![1.0, 0.0])).unwrap();
        sim.step(0.1);
        assert!((sim.q()[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn halted_sim_ignores_commands() {
        let mut sim = planar();
        sim.halt();
        assert_eq!(sim.set_target(JointVector(vec![1.0, 0.0])), Err(SimError::Halted));
        sim.step(0.1);
        assert_eq!(sim.q().0, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_trajectory_from_elsewhere() {
        let mut sim = planar();
        let t = Trajectory { waypoints: vec![Waypoint { t: 0.0, q: JointVector(vec![0.5, 0.0]) }], guarded: false };
        assert_eq!(sim.execute(t), Err(SimError::TrajectoryMismatch));
    }
}
