use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::protocol::{ClientMessage, Downlink, Role, ServerMessage, StatusReport};
use super::ServiceError;
use crate::command::{parse_utterance, resolve_referents, GestureEvent, Goal, Utterance};
use crate::executive::{EventLog, ExecError, Executive, ExecutiveConfig, LogRecord, Phase, TICK_S};
use crate::kinematics::KinematicChain;
use crate::scene::{encode_delta, ObjectId, SceneDelta, SceneGraph, SceneObject};
use crate::sim::{Disturbance, VehicleSim, Worksite, WorksiteError};

/// Gestures kept for fusion; older ones fall outside any window anyway.
const GESTURE_MEMORY: usize = 64;

/// Log events that are inputs to the mission; everything else is derived.
pub const INPUT_EVENTS: [&str; 7] = ["attach", "detach", "message", "disturbance", "scene_upsert", "scene_remove", "mission_ended"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissionConfig {
    pub mission_id: String,
    pub seed: u64,
    pub worksite: Worksite,
    pub chain: KinematicChain,
    pub tick_s: f64,
    /// Ticks between status broadcasts.
    pub status_every: u64,
}

impl MissionConfig {
    pub fn new(mission_id: &str, worksite: Worksite, chain: KinematicChain, seed: u64) -> Self {
        Self { mission_id: mission_id.to_string(), seed, worksite, chain, tick_s: TICK_S, status_every: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSession {
    pub operator_id: String,
    pub display_name: String,
    pub role: Role,
    pub connected_at: f64,
}

/// One mission: sim, scene and executive behind a message API. The core is
/// the only writer of mission state and knows nothing about transport.
pub struct MissionCore {
    cfg: MissionConfig,
    scene: SceneGraph,
    sim: VehicleSim,
    exec: Executive,
    sessions: BTreeMap<String, OperatorSession>,
    gestures: Vec<GestureEvent>,
    cursor: usize,
    outbox: Vec<(String, Downlink)>,
    ended: Option<String>,
}

impl MissionCore {
    pub fn start(cfg: MissionConfig) -> Result<Self, ServiceError> {
        cfg.worksite.composition.validate().map_err(WorksiteError::from)?;
        cfg.worksite.check_chain(cfg.chain.dof())?;
        let scene = cfg.worksite.scene()?;
        let sim = VehicleSim::for_worksite(cfg.chain.clone(), &cfg.worksite);
        let exec_cfg = ExecutiveConfig { home: Some(cfg.worksite.home.clone()), seed: cfg.seed, ..ExecutiveConfig::default() };
        let mut exec = Executive::new(cfg.chain.clone(), exec_cfg);
        exec.record(0.0, None, "mission_started", json!(cfg));
        let mut core =
            Self { cfg, scene, sim, exec, sessions: BTreeMap::new(), gestures: Vec::new(), cursor: 0, outbox: Vec::new(), ended: None };
        core.flush();
        Ok(core)
    }

    pub fn config(&self) -> &MissionConfig {
        &self.cfg
    }

    pub fn mission_id(&self) -> &str {
        &self.cfg.mission_id
    }

    pub fn scene(&self) -> &SceneGraph {
        &self.scene
    }

    pub fn sim(&self) -> &VehicleSim {
        &self.sim
    }

    pub fn executive(&self) -> &Executive {
        &self.exec
    }

    pub fn phase(&self) -> Phase {
        self.exec.phase()
    }

    pub fn clock(&self) -> f64 {
        self.sim.clock()
    }

    pub fn history(&self) -> &EventLog {
        self.exec.history()
    }

    pub fn sessions(&self) -> impl Iterator<Item = &OperatorSession> {
        self.sessions.values()
    }

    pub fn is_ended(&self) -> bool {
        self.ended.is_some()
    }

    /// SHA-256 over the executive state (history included) and the sim.
    pub fn state_hash(&self) -> String {
        let doc = json!({ "state": self.exec.state(), "sim": self.sim, "scene_revision": self.scene.revision() });
        hex::encode(Sha256::digest(doc.to_string().as_bytes()))
    }

    fn input(&mut self, operator: Option<&str>, event: &str, payload: Value) {
        let mut payload = payload;
        payload["tick"] = json!(self.sim.ticks());
        self.exec.record(self.sim.clock(), operator, event, payload);
    }

    fn reply(&mut self, to: &str, msg: ServerMessage) {
        self.exec.record(self.sim.clock(), None, "reply", json!({ "to": to, "message": msg }));
    }

    fn reject(&mut self, to: &str, request: &str, err: &ExecError) {
        let holder = match err {
            ExecError::Denied { holder } => Some(holder.clone()),
            ExecError::NotTokenHolder { holder } => holder.clone(),
            _ => None,
        };
        self.reply(to, ServerMessage::Rejected { request: request.into(), kind: err.kind().into(), message: err.to_string(), holder });
    }

    pub fn attach(&mut self, session: OperatorSession) -> Result<(), ServiceError> {
        if self.sessions.contains_key(&session.operator_id) {
            return Err(ServiceError::DuplicateOperator(session.operator_id));
        }
        let id = session.operator_id.clone();
        self.input(Some(&id), "attach", json!({ "session": session }));
        self.sessions.insert(id.clone(), session);
        let welcome = ServerMessage::Welcome { mission_id: self.cfg.mission_id.clone(), operator_id: id.clone(), scene_revision: self.scene.revision() };
        self.reply(&id, welcome);
        self.flush();
        self.outbox.push((id, Downlink::Scene(SceneDelta::snapshot(&self.scene))));
        Ok(())
    }

    /// Ends a session; a held control token is released.
    pub fn detach(&mut self, operator: &str) -> Result<(), ServiceError> {
        if !self.sessions.contains_key(operator) {
            return Err(ServiceError::UnknownOperator(operator.into()));
        }
        self.input(Some(operator), "detach", Value::Null);
        self.sessions.remove(operator);
        let now = self.sim.clock();
        self.exec.release_token(operator, now);
        self.flush();
        Ok(())
    }

    pub fn handle(&mut self, operator: &str, msg: ClientMessage) -> Result<(), ServiceError> {
        let Some(session) = self.sessions.get(operator) else {
            return Err(ServiceError::UnknownOperator(operator.into()));
        };
        let role = session.role;
        self.input(Some(operator), "message", json!({ "message": msg }));
        let now = self.sim.clock();
        match msg {
            ClientMessage::Hello { .. } => {
                let err = ServiceError::DuplicateOperator(operator.into());
                self.reply(operator, ServerMessage::Rejected { request: "hello".into(), kind: "duplicate_operator".into(), message: err.to_string(), holder: None });
            }
            ClientMessage::Bye => return self.detach(operator),
            ClientMessage::Utterance { text, timestamp } => self.on_utterance(operator, &text, timestamp),
            ClientMessage::Gesture { id, origin, direction, timestamp } => match GestureEvent::pointing(id, origin, direction, timestamp, operator) {
                Some(g) => {
                    let hit = self.scene.raycast(&g.origin, &g.direction).ok().flatten();
                    self.gestures.push(g);
                    if self.gestures.len() > GESTURE_MEMORY {
                        self.gestures.remove(0);
                    }
                    self.reply(operator, ServerMessage::GestureHit { gesture_id: id, point: hit.map(|h| h.point), target: hit.map(|h| h.target) });
                }
                None => self.reply(
                    operator,
                    ServerMessage::Rejected { request: "gesture".into(), kind: "invalid_gesture".into(), message: "gesture direction must be non-zero and finite".into(), holder: None },
                ),
            },
            ClientMessage::AcquireToken => {
                if role == Role::Observer {
                    self.reply(
                        operator,
                        ServerMessage::Rejected { request: "acquire_token".into(), kind: "observer".into(), message: "observers cannot command".into(), holder: None },
                    );
                } else if let Err(e) = self.exec.acquire_token(operator, now) {
                    self.reject(operator, "acquire_token", &e);
                }
            }
            ClientMessage::ReleaseToken => {
                self.exec.release_token(operator, now);
            }
            ClientMessage::Confirm { preview_id } => {
                if let Err(e) = self.exec.confirm(operator, now, preview_id, &self.scene, &mut self.sim) {
                    self.reject(operator, "confirm", &e);
                    if matches!(e, ExecError::StalePreview { .. }) {
                        let _ = self.exec.build_preview(now, &self.scene, &self.sim);
                    }
                }
            }
            ClientMessage::Reject => {
                if let Err(e) = self.exec.reject(operator, now) {
                    self.reject(operator, "reject", &e);
                }
            }
            ClientMessage::Abort => self.exec.abort(Some(operator), now, &mut self.sim),
        }
        self.flush();
        Ok(())
    }

    fn on_utterance(&mut self, operator: &str, text: &str, timestamp: f64) {
        let now = self.sim.clock();
        let parsed = match parse_utterance(&Utterance::new(text, timestamp, operator)) {
            Ok(g) => g,
            Err(d) => {
                self.reply(operator, ServerMessage::Diagnostic { utterance: text.into(), position: d.position, expected: d.expected, message: d.message });
                return;
            }
        };
        match parsed.goal {
            Goal::Abort => self.exec.abort(Some(operator), now, &mut self.sim),
            Goal::TuneXrf { param, value } => {
                if let Err(e) = self.exec.tune(operator, now, param, value) {
                    self.reject(operator, "tune_xrf", &e);
                }
            }
            _ => match resolve_referents(&parsed, &self.scene, &self.gestures) {
                Err(e) => self.reply(operator, ServerMessage::ResolveFailed { utterance: text.into(), kind: e.kind().into(), message: e.to_string() }),
                Ok(goal) => match self.exec.propose(operator, now, goal) {
                    Err(e) => self.reject(operator, "propose", &e),
                    Ok(()) => {
                        let _ = self.exec.build_preview(now, &self.scene, &self.sim);
                    }
                },
            },
        }
    }

    /// Scene update from perception; broadcast as a delta.
    pub fn upsert_object(&mut self, object: SceneObject) -> Result<(), ServiceError> {
        let next = self.scene.upsert_object(object.clone())?;
        self.input(None, "scene_upsert", json!({ "object": object }));
        self.set_scene(next)
    }

    pub fn remove_object(&mut self, id: ObjectId) -> Result<(), ServiceError> {
        let next = self.scene.remove_object(id)?;
        self.input(None, "scene_remove", json!({ "id": id }));
        self.set_scene(next)
    }

    fn set_scene(&mut self, next: SceneGraph) -> Result<(), ServiceError> {
        let delta = encode_delta(&self.scene, &next)?;
        self.scene = next;
        for id in self.sessions.keys() {
            self.outbox.push((id.clone(), Downlink::Scene(delta.clone())));
        }
        self.flush();
        Ok(())
    }

    pub fn inject_disturbance(&mut self, d: Disturbance) {
        self.input(None, "disturbance", json!({ "disturbance": d }));
        self.sim.inject_disturbance(d);
    }

    /// Advances one mission tick.
    pub fn tick(&mut self) {
        let hold = self.exec.tick(self.cfg.tick_s, &mut self.sim);
        self.flush();
        if self.sim.ticks() % self.cfg.status_every.max(1) == 0 && !self.sessions.is_empty() {
            let tool = self.sim.tool_pose();
            let status = StatusReport {
                clock: self.sim.clock(),
                phase: self.exec.phase(),
                q: self.sim.q().clone(),
                tool,
                contact: self.sim.contact(),
                hold: hold.or(self.exec.hold_status()),
                token_holder: self.exec.state().token.live_holder(self.sim.clock()).map(str::to_string),
                scene_revision: self.scene.revision(),
            };
            for id in self.sessions.keys() {
                self.outbox.push((id.clone(), Downlink::Status(status.clone())));
            }
        }
    }

    /// Closes the log with the state hash taken just before the closing record.
    pub fn finish(&mut self) -> String {
        if let Some(h) = &self.ended {
            return h.clone();
        }
        let hash = self.state_hash();
        self.input(None, "mission_ended", json!({ "state_hash": hash }));
        self.ended = Some(hash.clone());
        hash
    }

    pub fn drain_outbox(&mut self) -> Vec<(String, Downlink)> {
        std::mem::take(&mut self.outbox)
    }

    /// Translates new history records into downlink messages.
    fn flush(&mut self) {
        let records: Vec<LogRecord> = self.exec.history().since(self.cursor).to_vec();
        self.cursor += records.len();
        for rec in records {
            if rec.event == "reply" {
                if let (Some(to), Ok(msg)) = (rec.payload["to"].as_str(), serde_json::from_value::<ServerMessage>(rec.payload["message"].clone())) {
                    if self.sessions.contains_key(to) {
                        self.outbox.push((to.to_string(), Downlink::Message(msg)));
                    }
                }
                continue;
            }
            if let Some(msg) = broadcast_for(&rec) {
                for id in self.sessions.keys() {
                    self.outbox.push((id.clone(), Downlink::Message(msg.clone())));
                }
            }
        }
    }
}

fn parse<T: serde::de::DeserializeOwned>(v: &Value) -> Option<T> {
    serde_json::from_value(v.clone()).ok()
}

fn broadcast_for(rec: &LogRecord) -> Option<ServerMessage> {
    let p = &rec.payload;
    Some(match rec.event.as_str() {
        "phase" => ServerMessage::Phase { from: parse(&p["from"])?, to: parse(&p["to"])?, trigger: parse(&p["trigger"])? },
        "goal_proposed" => ServerMessage::GoalProposed { goal: parse(p)? },
        "preview" => ServerMessage::Preview { preview: parse(p)? },
        "preview_failed" => ServerMessage::PreviewFailed { message: p["error"].as_str()?.to_string() },
        "token_granted" => ServerMessage::Token { holder: rec.operator_id.clone() },
        "token_released" | "token_expired" => ServerMessage::Token { holder: None },
        "xrf_tuned" => ServerMessage::XrfParams { params: parse(p)? },
        "task_complete" => ServerMessage::TaskComplete { outcome: parse(p)? },
        "partial_spectrum" => ServerMessage::PartialSpectrum {
            reason: p["reason"].as_str()?.to_string(),
            live_time: p["live_time"].as_f64()?,
            region: p["region"].as_str()?.to_string(),
            spectrum: parse(&p["spectrum"])?,
        },
        "abort" => ServerMessage::Aborted { reason: "abort requested".into() },
        "contact_lost" => ServerMessage::Aborted { reason: "contact lost".into() },
        "fault" => ServerMessage::Aborted { reason: p["reason"].as_str()?.to_string() },
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub records: usize,
    pub inputs: usize,
    pub original_hash: String,
    pub replayed_hash: String,
    /// State hash recorded at mission end, if the log was closed.
    pub recorded_state_hash: Option<String>,
    pub replayed_state_hash: Option<String>,
    pub identical: bool,
}

fn corrupt(index: usize, reason: impl Into<String>) -> ServiceError {
    ServiceError::CorruptLog { index, reason: reason.into() }
}

/// Re-runs the inputs of a mission log on a fresh core and compares the
/// regenerated log with the original.
pub fn replay(log: &EventLog) -> Result<ReplayReport, ServiceError> {
    let records = log.records();
    let Some(first) = records.first() else {
        let empty = EventLog::new().hash();
        return Ok(ReplayReport {
            records: 0,
            inputs: 0,
            original_hash: empty.clone(),
            replayed_hash: empty,
            recorded_state_hash: None,
            replayed_state_hash: None,
            identical: true,
        });
    };
    if first.event != "mission_started" {
        return Err(corrupt(0, "log does not start with mission_started"));
    }
    let cfg: MissionConfig = serde_json::from_value(first.payload.clone()).map_err(|e| corrupt(0, e.to_string()))?;
    let mut core = MissionCore::start(cfg).map_err(|e| corrupt(0, e.to_string()))?;
    let mut inputs = 0;
    let mut recorded_state_hash = None;
    let mut replayed_state_hash = None;
    for (index, rec) in records.iter().enumerate().skip(1) {
        if !INPUT_EVENTS.contains(&rec.event.as_str()) {
            continue;
        }
        inputs += 1;
        let tick = rec.payload["tick"].as_u64().ok_or_else(|| corrupt(index, "input without tick"))?;
        if tick < core.sim.ticks() {
            return Err(corrupt(index, "input ticks go backwards"));
        }
        while core.sim.ticks() < tick {
            core.tick();
        }
        let op = rec.operator_id.as_deref();
        let need_op = || op.ok_or_else(|| corrupt(index, "input without operator"));
        let field = |name: &str| rec.payload.get(name).cloned().ok_or_else(|| corrupt(index, format!("missing {name}")));
        let bad = |e: serde_json::Error| corrupt(index, e.to_string());
        let result = match rec.event.as_str() {
            "attach" => core.attach(serde_json::from_value(field("session")?).map_err(bad)?),
            "detach" => core.detach(need_op()?),
            "message" => core.handle(need_op()?, serde_json::from_value(field("message")?).map_err(bad)?),
            "disturbance" => {
                core.inject_disturbance(serde_json::from_value(field("disturbance")?).map_err(bad)?);
                Ok(())
            }
            "scene_upsert" => core.upsert_object(serde_json::from_value(field("object")?).map_err(bad)?),
            "scene_remove" => core.remove_object(serde_json::from_value(field("id")?).map_err(bad)?),
            "mission_ended" => {
                recorded_state_hash = rec.payload["state_hash"].as_str().map(str::to_string);
                replayed_state_hash = Some(core.finish());
                Ok(())
            }
            _ => unreachable!("filtered to input events"),
        };
        result.map_err(|e| corrupt(index, e.to_string()))?;
    }
    if let Some(last) = records.last() {
        while core.history().len() < records.len() && core.sim.clock() < last.timestamp - 1e-9 {
            core.tick();
        }
    }
    let replayed_hash = core.history().hash();
    let original_hash = log.hash();
    let identical = core.history().records() == records && recorded_state_hash == replayed_state_hash;
    Ok(ReplayReport { records: records.len(), inputs, original_hash, replayed_hash, recorded_state_hash, replayed_state_hash, identical })
}
