//! Task-level mission executive.
//!
//! Goals move through the phase machine in [`fsm`]: a goal is proposed by
//! the token holder, planned into a preview, confirmed, streamed to the
//! simulation and, for contact tasks, held against the seafloor while the
//! sample is taken. Every input and every state change is appended to the
//! mission history.
//!
//! Contact tasks preview three segments: a free-space approach to a hover
//! pose above the surface, a guarded vertical descent, and the return path.
//! The executed return path is the reversed prefix of the descent actually
//! driven before contact, started from wherever hold control left the arm.

mod fsm;
mod log;
mod token;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::command::{Goal, TaskGoal, Target, TuneValue, XrfParam};
use crate::kinematics::{solve_ik, IkOptions, JointVector, KinematicChain, KinematicsError, Pose};
use crate::planner::{
    plan_guarded_descent, plan_to_config, plan_to_pose, validate_trajectory, CollisionWorld, DescentConfig, PlannerConfig,
    PlannerError, Trajectory, Waypoint, DEFAULT_SAFETY_MARGIN,
};
use crate::scene::SceneGraph;
use crate::sim::{Acquisition, CoreResult, SimError, StepReport, VehicleSim, XrfError, XrfSourceParams, XrfSpectrum};

pub use fsm::{next_phase, Phase, Trigger};
pub use log::{EventLog, LogError, LogRecord};
pub use token::{ControlToken, DEFAULT_LEASE_S};

pub const TICK_S: f64 = 0.05;
pub const HOLD_GAIN: f64 = 2.0;
pub const HOLD_TOLERANCE: f64 = 0.01;
pub const CONTACT_GRACE_TICKS: u32 = 1;

#[derive(Debug, Clone)]
pub struct ExecutiveConfig {
    pub lease_s: f64,
    /// Proportional hold gain (1/s).
    pub hold_gain: f64,
    pub hold_tolerance: f64,
    pub contact_grace_ticks: u32,
    /// Height of the pre-contact hover pose above the target (m).
    pub hover_height: f64,
    /// Time the core tube is held in the sediment before evaluation (s).
    pub core_dwell_s: f64,
    pub safety_margin: f64,
    pub home: Option<JointVector>,
    pub seed: u64,
    pub planner: PlannerConfig,
    pub descent: DescentConfig,
}

impl Default for ExecutiveConfig {
    fn default() -> Self {
        Self {
            lease_s: DEFAULT_LEASE_S,
            hold_gain: HOLD_GAIN,
            hold_tolerance: HOLD_TOLERANCE,
            contact_grace_ticks: CONTACT_GRACE_TICKS,
            hover_height: 0.10,
            core_dwell_s: 1.0,
            safety_margin: DEFAULT_SAFETY_MARGIN,
            home: None,
            seed: 0,
            planner: PlannerConfig::default(),
            descent: DescentConfig::default(),
        }
    }
}

/// A validated plan awaiting confirmation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub id: u64,
    pub scene_revision: u64,
    pub segments: Vec<Trajectory>,
    /// World-frame surface point of a contact task.
    pub contact_target: Option<Vector3<f64>>,
    pub min_clearance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactHoldStatus {
    pub in_contact: bool,
    pub deviation: f64,
    pub elapsed: f64,
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskOutcome {
    Moved {
        tool_position: Vector3<f64>,
    },
    Measurement {
        spectrum: XrfSpectrum,
        region: String,
        target: Vector3<f64>,
        achieved: Vector3<f64>,
        placement_error: f64,
        max_deviation: f64,
    },
    Core {
        result: CoreResult,
        placement_error: f64,
        max_deviation: f64,
    },
}

impl TaskOutcome {
    pub fn placement_error(&self) -> Option<f64> {
        match self {
            TaskOutcome::Moved { .. } => None,
            TaskOutcome::Measurement { placement_error, .. } | TaskOutcome::Core { placement_error, .. } => Some(*placement_error),
        }
    }

    pub fn succeeded(&self) -> bool {
        match self {
            TaskOutcome::Core { result, .. } => result.success,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("control token is held by {holder}")]
    Denied { holder: String },
    #[error("operator does not hold the control token")]
    NotTokenHolder { holder: Option<String> },
    #[error("{trigger:?} is not allowed in phase {phase:?}")]
    IllegalPhase { phase: Phase, trigger: Trigger },
    #[error("scene changed since the preview (preview revision {preview}, scene revision {scene})")]
    StalePreview { preview: u64, scene: u64 },
    #[error("preview {requested} is not the current preview")]
    UnknownPreview { requested: u64 },
    #[error("goal target is not resolved to a point")]
    UnresolvedGoal,
    #[error("goal is not a motion task")]
    NotAMotionGoal,
    #[error("planning failed: {0}")]
    Planning(PlannerError),
    #[error(transparent)]
    Xrf(#[from] XrfError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl ExecError {
    pub fn kind(&self) -> &'static str {
        match self {
            ExecError::Denied { .. } => "denied",
            ExecError::NotTokenHolder { .. } => "not_token_holder",
            ExecError::IllegalPhase { .. } => "illegal_phase",
            ExecError::StalePreview { .. } => "stale_preview",
            ExecError::UnknownPreview { .. } => "unknown_preview",
            ExecError::UnresolvedGoal => "unresolved_goal",
            ExecError::NotAMotionGoal => "not_a_motion_goal",
            ExecError::Planning(_) => "planning",
            ExecError::Xrf(_) => "xrf",
            ExecError::Sim(_) => "sim",
        }
    }
}

/// The executive's observable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionState {
    pub phase: Phase,
    pub active_goal: Option<TaskGoal>,
    pub preview: Option<Preview>,
    pub token: ControlToken,
    pub xrf: XrfSourceParams,
    pub history: EventLog,
}

#[derive(Debug, Clone)]
struct Hold {
    anchor: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
    target: Vector3<f64>,
    /// Time spent on the descent before contact.
    driven: f64,
    elapsed: f64,
    required: f64,
    lost_ticks: u32,
    max_deviation: f64,
    acquisition: Option<Acquisition>,
}

#[derive(Debug, Clone)]
struct Execution {
    preview_id: u64,
    segments: Vec<Trajectory>,
    segment: usize,
    segment_started: f64,
    contact_target: Option<Vector3<f64>>,
    hold: Option<Hold>,
    outcome: Option<TaskOutcome>,
}

pub struct Executive {
    cfg: ExecutiveConfig,
    chain: KinematicChain,
    state: MissionState,
    exec: Option<Execution>,
    previews_built: u64,
    acquisitions: u64,
    last_hold: Option<ContactHoldStatus>,
}

fn vec3(v: &Vector3<f64>) -> Value {
    json!([v.x, v.y, v.z])
}

/// The same path driven backwards, unguarded.
fn reversed(traj: &Trajectory) -> Trajectory {
    let total = traj.duration();
    Trajectory { waypoints: traj.waypoints.iter().rev().map(|w| Waypoint { t: total - w.t, q: w.q.clone() }).collect(), guarded: false }
}

fn rate_limited_time(chain: &KinematicChain, a: &JointVector, b: &JointVector) -> f64 {
    a.iter().zip(b.iter()).zip(chain.max_rates()).map(|((x, y), r)| (y - x).abs() / r).fold(0.0, f64::max)
}

impl Executive {
    pub fn new(chain: KinematicChain, cfg: ExecutiveConfig) -> Self {
        let state = MissionState {
            phase: Phase::Idle,
            active_goal: None,
            preview: None,
            token: ControlToken::new(cfg.lease_s),
            xrf: XrfSourceParams::default(),
            history: EventLog::new(),
        };
        Self { cfg, chain, state, exec: None, previews_built: 0, acquisitions: 0, last_hold: None }
    }

    pub fn config(&self) -> &ExecutiveConfig {
        &self.cfg
    }

    pub fn state(&self) -> &MissionState {
        &self.state
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn history(&self) -> &EventLog {
        &self.state.history
    }

    pub fn preview(&self) -> Option<&Preview> {
        self.state.preview.as_ref()
    }

    /// Most recent hold status, while holding.
    pub fn hold_status(&self) -> Option<ContactHoldStatus> {
        if self.state.phase == Phase::Holding {
            self.last_hold
        } else {
            None
        }
    }

    /// Appends an externally originated record (inputs logged by the host).
    pub fn record(&mut self, now: f64, operator: Option<&str>, event: &str, payload: Value) {
        self.state.history.append(now, operator, event, payload);
    }

    fn transit(&mut self, now: f64, operator: Option<&str>, trigger: Trigger) -> Result<Phase, ExecError> {
        let from = self.state.phase;
        let to = next_phase(from, trigger).ok_or(ExecError::IllegalPhase { phase: from, trigger })?;
        self.state.phase = to;
        if to == Phase::Idle {
            self.state.active_goal = None;
        }
        if to != Phase::Previewed {
            self.state.preview = None;
        }
        self.state.history.append(now, operator, "phase", json!({ "from": from, "to": to, "trigger": trigger }));
        Ok(to)
    }

    fn require_holder(&self, operator: &str, now: f64) -> Result<(), ExecError> {
        if self.state.token.is_holder(operator, now) {
            Ok(())
        } else {
            Err(ExecError::NotTokenHolder { holder: self.state.token.live_holder(now).map(str::to_string) })
        }
    }

    pub fn acquire_token(&mut self, operator: &str, now: f64) -> Result<(), ExecError> {
        match self.state.token.acquire(operator, now) {
            Ok(()) => {
                self.state.history.append(now, Some(operator), "token_granted", json!({ "lease_s": self.state.token.lease_s }));
                Ok(())
            }
            Err(holder) => {
                self.state.history.append(now, Some(operator), "token_denied", json!({ "holder": holder }));
                Err(ExecError::Denied { holder })
            }
        }
    }

    pub fn release_token(&mut self, operator: &str, now: f64) -> bool {
        let released = self.state.token.release(operator);
        if released {
            self.state.history.append(now, Some(operator), "token_released", Value::Null);
        }
        released
    }

    /// Adjusts one XRF source parameter; rejected while the arm is active.
    pub fn tune(&mut self, operator: &str, now: f64, param: XrfParam, value: TuneValue) -> Result<XrfSourceParams, ExecError> {
        self.require_holder(operator, now)?;
        if self.state.phase.is_active() {
            return Err(ExecError::IllegalPhase { phase: self.state.phase, trigger: Trigger::Propose });
        }
        let mut p = self.state.xrf;
        let slot = match param {
            XrfParam::TubeVoltage => &mut p.tube_voltage_kv,
            XrfParam::TubeCurrent => &mut p.tube_current_ua,
            XrfParam::IntegrationTime => &mut p.integration_s,
        };
        *slot = match value {
            TuneValue::To(v) => v,
            TuneValue::By(d) => *slot + d,
        };
        p.validate()?;
        self.state.xrf = p;
        self.state.history.append(now, Some(operator), "xrf_tuned", json!(p));
        Ok(p)
    }

    pub fn propose(&mut self, operator: &str, now: f64, goal: TaskGoal) -> Result<(), ExecError> {
        self.require_holder(operator, now)?;
        if !self.state.phase.accepts_goal() {
            return Err(ExecError::IllegalPhase { phase: self.state.phase, trigger: Trigger::Propose });
        }
        match &goal.goal {
            Goal::TuneXrf { .. } | Goal::Abort => return Err(ExecError::NotAMotionGoal),
            g => {
                if g.target().is_some_and(|t| !t.is_resolved()) {
                    return Err(ExecError::UnresolvedGoal);
                }
            }
        }
        self.state.history.append(now, Some(operator), "goal_proposed", json!(goal));
        self.state.active_goal = Some(goal);
        self.transit(now, Some(operator), Trigger::Propose)?;
        Ok(())
    }

    /// Plans the active goal against `scene` from the sim's current state.
    /// Planner failures return the mission to Idle.
    pub fn build_preview(&mut self, now: f64, scene: &SceneGraph, sim: &VehicleSim) -> Result<&Preview, ExecError> {
        if self.state.phase != Phase::GoalProposed {
            return Err(ExecError::IllegalPhase { phase: self.state.phase, trigger: Trigger::PreviewReady });
        }
        let goal = self.state.active_goal.clone().expect("goal set in GoalProposed").goal;
        self.previews_built += 1;
        let id = self.previews_built;
        let seed = self.cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ id;
        match self.plan(&goal, scene, sim, seed) {
            Ok((segments, contact_target, min_clearance)) => {
                let preview = Preview { id, scene_revision: scene.revision(), segments, contact_target, min_clearance };
                self.state.history.append(now, None, "preview", json!(preview));
                self.transit(now, None, Trigger::PreviewReady)?;
                self.state.preview = Some(preview);
                Ok(self.state.preview.as_ref().expect("just stored"))
            }
            Err(e) => {
                self.state.history.append(now, None, "preview_failed", json!({ "error": e.to_string() }));
                self.transit(now, None, Trigger::PreviewFailed)?;
                Err(ExecError::Planning(e))
            }
        }
    }

    fn plan(
        &self,
        goal: &Goal,
        scene: &SceneGraph,
        sim: &VehicleSim,
        seed: u64,
    ) -> Result<(Vec<Trajectory>, Option<Vector3<f64>>, f64), PlannerError> {
        // plan in the arm frame: the world as seen from the displaced base
        let offset = sim.base_offset();
        let local = scene.translated(&-offset);
        let world = CollisionWorld::new(&local).with_margin(self.cfg.safety_margin);
        let chain = &self.chain;
        let q0 = sim.q();
        let (segments, contact_target) = match goal {
            Goal::Stow => {
                let home = self.cfg.home.as_ref().ok_or_else(|| PlannerError::GoalUnreachable("no home configuration".into()))?;
                (vec![plan_to_config(chain, &world, q0, home, seed, &self.cfg.planner)?], None)
            }
            Goal::MoveTo { target } | Goal::GraspTool { target } => {
                let p = target.point().ok_or_else(|| PlannerError::GoalUnreachable("unresolved target".into()))?;
                let top = match target {
                    Target::Object { id, .. } => scene.object(*id).map_or(0.0, |o| o.shape.half_height()),
                    _ => 0.0,
                };
                let hover = p - offset + Vector3::z() * (top + self.cfg.hover_height);
                (vec![plan_to_pose(chain, &world, q0, &Pose::tool_down(hover), seed, &self.cfg.planner)?], None)
            }
            Goal::XrfMeasure { target, .. } | Goal::PushCore { target } => {
                let p = target.point().ok_or_else(|| PlannerError::GoalUnreachable("unresolved target".into()))?;
                let z = scene
                    .terrain()
                    .height_at(p.x, p.y)
                    .map_err(|e| PlannerError::GoalUnreachable(format!("target is off the terrain: {e}")))?;
                let surface_world = Vector3::new(p.x, p.y, z);
                let surface = surface_world - offset;
                let hover = Pose::tool_down(surface + Vector3::z() * self.cfg.hover_height);
                let approach = plan_to_pose(chain, &world, q0, &hover, seed, &self.cfg.planner)?;
                let q_hover = approach.end().expect("planned trajectories are non-empty").clone();
                let descent = plan_guarded_descent(chain, &world, &q_hover, &surface, &-Vector3::z(), &self.cfg.descent)?;
                let retract = reversed(&descent);
                (vec![approach, descent, retract], Some(surface_world))
            }
            Goal::TuneXrf { .. } | Goal::Abort => return Err(PlannerError::GoalUnreachable("not a motion goal".into())),
        };
        let mut min_clearance = f64::INFINITY;
        for (i, seg) in segments.iter().enumerate() {
            let report = self.validate_segment(&world, seg, i > 0 && contact_target.is_some())?;
            if !report {
                return Err(PlannerError::MalformedTrajectory(format!("segment {i} failed validation")));
            }
            min_clearance = min_clearance.min(validate_trajectory(chain, &world, seg)?.min_clearance);
        }
        Ok((segments, contact_target, min_clearance))
    }

    /// Re-validates a segment; segments touching the seafloor are checked
    /// with the tool exempt from terrain clearance.
    fn validate_segment(&self, world: &CollisionWorld<'_>, seg: &Trajectory, touches_terrain: bool) -> Result<bool, PlannerError> {
        let mut t = seg.clone();
        t.guarded |= touches_terrain;
        Ok(validate_trajectory(&self.chain, world, &t)?.passed())
    }

    pub fn reject(&mut self, operator: &str, now: f64) -> Result<(), ExecError> {
        self.require_holder(operator, now)?;
        self.state.history.append(now, Some(operator), "rejected", Value::Null);
        self.transit(now, Some(operator), Trigger::Reject)?;
        Ok(())
    }

    /// Confirms the current preview and starts streaming it to the sim.
    pub fn confirm(&mut self, operator: &str, now: f64, preview_id: u64, scene: &SceneGraph, sim: &mut VehicleSim) -> Result<(), ExecError> {
        self.require_holder(operator, now)?;
        if self.state.phase != Phase::Previewed {
            return Err(ExecError::IllegalPhase { phase: self.state.phase, trigger: Trigger::Confirm });
        }
        let preview = self.state.preview.clone().expect("preview set in Previewed");
        if preview.id != preview_id {
            return Err(ExecError::UnknownPreview { requested: preview_id });
        }
        if preview.scene_revision != scene.revision() {
            let err = ExecError::StalePreview { preview: preview.scene_revision, scene: scene.revision() };
            self.state.history.append(now, Some(operator), "stale_preview", json!({ "preview": preview.scene_revision, "scene": scene.revision() }));
            self.transit(now, Some(operator), Trigger::StaleConfirm)?;
            return Err(err);
        }
        self.state.history.append(now, Some(operator), "confirmed", json!({ "preview_id": preview.id }));
        self.transit(now, Some(operator), Trigger::Confirm)?;
        sim.resume();
        self.exec = Some(Execution {
            preview_id: preview.id,
            segments: preview.segments,
            segment: 0,
            segment_started: now,
            contact_target: preview.contact_target,
            hold: None,
            outcome: None,
        });
        if let Err(e) = self.start_segment(now, sim, 0) {
            self.fault(now, sim, &e.to_string())?;
            return Err(e.into());
        }
        Ok(())
    }

    fn start_segment(&mut self, now: f64, sim: &mut VehicleSim, index: usize) -> Result<(), SimError> {
        let ex = self.exec.as_mut().expect("executing");
        let seg = ex.segments[index].clone();
        let digest = seg.digest();
        sim.execute(seg)?;
        ex.segment = index;
        ex.segment_started = now;
        let preview_id = ex.preview_id;
        self.state.history.append(now, None, "segment_started", json!({ "preview_id": preview_id, "index": index, "digest": digest }));
        Ok(())
    }

    fn fault(&mut self, now: f64, sim: &mut VehicleSim, reason: &str) -> Result<(), ExecError> {
        sim.halt();
        self.exec = None;
        self.state.history.append(now, None, "fault", json!({ "reason": reason }));
        self.transit(now, None, Trigger::MotionFault)?;
        Ok(())
    }

    /// Halts the arm from any phase; accepted from any operator.
    pub fn abort(&mut self, operator: Option<&str>, now: f64, sim: &mut VehicleSim) {
        sim.halt();
        self.state.history.append(now, operator, "abort", json!({ "phase": self.state.phase }));
        if let Some(hold) = self.exec.take().and_then(|e| e.hold) {
            self.emit_partial(now, &hold, "aborted");
        }
        self.transit(now, operator, Trigger::Abort).expect("abort is legal in every phase");
    }

    fn emit_partial(&mut self, now: f64, hold: &Hold, reason: &str) {
        if let Some(acq) = &hold.acquisition {
            let spectrum = acq.finish();
            self.state.history.append(
                now,
                None,
                "partial_spectrum",
                json!({ "reason": reason, "live_time": acq.live_time, "region": acq.region, "spectrum": spectrum }),
            );
        }
    }

    /// Advances the mission and the sim by one tick.
    pub fn tick(&mut self, dt: f64, sim: &mut VehicleSim) -> Option<ContactHoldStatus> {
        let status = if self.state.phase == Phase::Holding {
            Some(self.hold_step(dt, sim))
        } else {
            let report = sim.step(dt);
            if self.state.phase == Phase::Executing {
                self.after_motion(report, sim);
            }
            None
        };
        let now = sim.clock();
        if let Some(former) = self.state.token.expire(now) {
            self.state.history.append(now, Some(&former), "token_expired", Value::Null);
        }
        status
    }

    fn after_motion(&mut self, report: StepReport, sim: &mut VehicleSim) {
        let now = sim.clock();
        let ex = self.exec.as_ref().expect("executing");
        let guarded = ex.segments[ex.segment].guarded;
        let last = ex.segment + 1 == ex.segments.len();
        let next = ex.segment + 1;
        if report.froze {
            self.begin_hold(now, sim);
        } else if report.finished {
            if guarded {
                let _ = self.fault(now, sim, "guarded descent ended without contact");
            } else if last {
                let outcome = self.exec.take().and_then(|e| e.outcome).unwrap_or(TaskOutcome::Moved { tool_position: sim.tool_pose().position });
                self.state.history.append(now, None, "task_complete", json!(outcome));
                let _ = self.transit(now, None, Trigger::LastSegmentDone);
            } else {
                let _ = self.transit(now, None, Trigger::SegmentDone);
                if let Err(e) = self.start_segment(now, sim, next) {
                    let _ = self.fault(now, sim, &e.to_string());
                }
            }
        }
    }

    fn begin_hold(&mut self, now: f64, sim: &mut VehicleSim) {
        let contact = sim.contact();
        let goal = self.state.active_goal.as_ref().expect("goal while executing").goal.clone();
        let ex = self.exec.as_ref().expect("executing");
        let target = ex.contact_target.unwrap_or(contact.point);
        self.state.history.append(
            now,
            None,
            "contact",
            json!({ "point": vec3(&contact.point), "normal": vec3(&contact.normal), "target": vec3(&target) }),
        );
        let (required, acquisition) = match goal {
            Goal::XrfMeasure { integration_s, .. } => {
                let params = XrfSourceParams { integration_s, ..self.state.xrf };
                self.acquisitions += 1;
                let seed = self.cfg.seed ^ 0xA5A5_0000_0000_0000 ^ self.acquisitions;
                match sim.begin_acquisition(params, seed) {
                    Ok(a) => (integration_s, Some(a)),
                    Err(e) => {
                        let _ = self.fault(now, sim, &e.to_string());
                        return;
                    }
                }
            }
            _ => (self.cfg.core_dwell_s, None),
        };
        let hold = Hold {
            anchor: contact.point,
            orientation: sim.tool_pose().orientation,
            target,
            driven: now - ex.segment_started,
            elapsed: 0.0,
            required,
            lost_ticks: 0,
            max_deviation: 0.0,
            acquisition,
        };
        self.last_hold = Some(ContactHoldStatus { in_contact: true, deviation: 0.0, elapsed: 0.0, required });
        self.exec.as_mut().expect("executing").hold = Some(hold);
        let _ = self.transit(now, None, Trigger::ContactMade);
    }

    /// One tick of proportional correction toward the contact anchor.
    fn hold_step(&mut self, dt: f64, sim: &mut VehicleSim) -> ContactHoldStatus {
        let gain_step = (self.cfg.hold_gain * dt).min(1.0);
        let hold = self.exec.as_mut().and_then(|e| e.hold.as_mut()).expect("holding");
        let tip = sim.tool_pose().position;
        let error = hold.anchor - tip;
        if error.norm() > 1e-7 {
            let desired = tip + error * gain_step - sim.base_offset();
            let opts = IkOptions { tol_pos: 1e-6, tol_rot: 1e-5, ..IkOptions::default() };
            let q_cmd = match solve_ik(&self.chain, &Pose::new(desired, hold.orientation), sim.q(), &opts) {
                Ok(sol) => sol.joints,
                Err(KinematicsError::Unreachable { best }) => best.joints,
                Err(_) => sim.q().clone(),
            };
            let _ = sim.set_target(q_cmd);
        } else {
            let q = sim.q().clone();
            let _ = sim.set_target(q);
        }
        sim.step(dt);
        let now = sim.clock();
        let deviation = (sim.tool_pose().position - hold.anchor).norm();
        let in_contact = sim.contact().in_contact;
        if in_contact {
            hold.lost_ticks = 0;
            hold.elapsed += dt;
            if let Some(a) = hold.acquisition.as_mut() {
                a.advance(dt);
            }
        } else {
            hold.lost_ticks += 1;
        }
        hold.max_deviation = hold.max_deviation.max(deviation);
        let status = ContactHoldStatus { in_contact, deviation, elapsed: hold.elapsed.min(hold.required), required: hold.required };
        self.last_hold = Some(status);
        if deviation > self.cfg.hold_tolerance || hold.lost_ticks > self.cfg.contact_grace_ticks {
            let hold = hold.clone();
            sim.halt();
            self.exec = None;
            self.state.history.append(
                now,
                None,
                "contact_lost",
                json!({ "deviation": deviation, "max_deviation": hold.max_deviation, "elapsed": hold.elapsed, "in_contact": in_contact }),
            );
            self.emit_partial(now, &hold, "contact_lost");
            let _ = self.transit(now, None, Trigger::HoldFailed);
        } else if hold.elapsed >= hold.required - 1e-9 {
            self.complete_hold(now, sim);
        }
        status
    }

    fn complete_hold(&mut self, now: f64, sim: &mut VehicleSim) {
        let ex = self.exec.as_mut().expect("holding");
        let hold = ex.hold.take().expect("holding");
        let outcome = match &hold.acquisition {
            Some(acq) => {
                let spectrum = acq.finish();
                TaskOutcome::Measurement {
                    region: acq.region.clone(),
                    target: hold.target,
                    achieved: hold.anchor,
                    placement_error: (hold.anchor - hold.target).norm(),
                    max_deviation: hold.max_deviation,
                    spectrum,
                }
            }
            None => match sim.push_core(&hold.target) {
                Ok(result) => TaskOutcome::Core {
                    placement_error: (result.achieved - result.target).norm(),
                    max_deviation: hold.max_deviation,
                    result,
                },
                Err(e) => {
                    let _ = self.fault(now, sim, &e.to_string());
                    return;
                }
            },
        };
        // return along the descent actually driven
        let descent = &ex.segments[ex.segment];
        let driven = hold.driven;
        let prefix: Vec<&Waypoint> = descent.waypoints.iter().filter(|w| w.t <= driven + 1e-12).collect();
        let mut waypoints = vec![Waypoint { t: 0.0, q: sim.q().clone() }];
        let mut t = 0.0;
        let mut prev_t = driven;
        for w in prefix.iter().rev() {
            let prev_q = &waypoints.last().expect("non-empty").q;
            let dt = (prev_t - w.t).max(rate_limited_time(&self.chain, prev_q, &w.q)).max(1e-3);
            t += dt;
            prev_t = w.t;
            waypoints.push(Waypoint { t, q: w.q.clone() });
        }
        let retract = Trajectory { waypoints, guarded: false };
        let last = ex.segments.len() - 1;
        ex.segments[last] = retract;
        ex.outcome = Some(outcome.clone());
        let event = if matches!(outcome, TaskOutcome::Measurement { .. }) { "spectrum" } else { "core_result" };
        self.state.history.append(now, None, event, json!(outcome));
        let _ = self.transit(now, None, Trigger::HoldComplete);
        if let Err(e) = self.start_segment(now, sim, last) {
            let _ = self.fault(now, sim, &e.to_string());
        }
    }
}
