//! Headless mission runner: a scripted operator drives the mission core
//! through an emulated link, exactly as a console would.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::mission::{MissionConfig, MissionCore, OperatorSession};
use super::protocol::{decode_downlink, decode_uplink, encode_downlink, encode_uplink, ClientMessage, Downlink, Role, ServerMessage, TOPIC_STATUS};
use super::ServiceError;
use crate::executive::{EventLog, Phase, TaskOutcome};
use crate::kinematics::KinematicChain;
use crate::link::{Channel, Duplex, Endpoint, LinkProfile, LinkStats};
use crate::sim::{Disturbance, Worksite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Seeds {
    pub mission: u64,
    pub link: u64,
}

/// Pointing gesture as a ray from `origin` through `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureFixture {
    pub origin: Vector3<f64>,
    pub target: Vector3<f64>,
}

/// Base displacement applied once the hold has run for `after_contact_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptDisturbance {
    pub after_contact_s: f64,
    pub offset: Vector3<f64>,
}

fn default_expect() -> Phase {
    Phase::Done
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub utterance: String,
    #[serde(default)]
    pub gesture: Option<GestureFixture>,
    #[serde(default = "default_expect")]
    pub expect: Phase,
    #[serde(default = "yes")]
    pub critical: bool,
    #[serde(default)]
    pub disturbance: Option<ScriptDisturbance>,
}

fn default_timeout() -> f64 {
    600.0
}

fn default_profile() -> String {
    "default".into()
}

fn default_worksite() -> String {
    "shipped".into()
}

fn default_operator() -> String {
    "operator".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionScript {
    pub name: String,
    #[serde(default = "default_operator")]
    pub operator_id: String,
    /// `default`, `lossless`, or a path to a profile JSON.
    #[serde(default = "default_profile")]
    pub profile: String,
    /// `shipped` or a path to a worksite JSON.
    #[serde(default = "default_worksite")]
    pub worksite: String,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_timeout")]
    pub step_timeout_s: f64,
    pub steps: Vec<ScriptStep>,
}

impl MissionScript {
    pub const SHIPPED_JSON: &'static str = include_str!("../../fixtures/missions/xrf_core.json");

    pub fn from_json(text: &str) -> Result<Self, ServiceError> {
        let s: MissionScript = serde_json::from_str(text).map_err(|e| ServiceError::Script(e.to_string()))?;
        if s.steps.is_empty() {
            return Err(ServiceError::Script("script has no steps".into()));
        }
        if !(s.step_timeout_s > 0.0) {
            return Err(ServiceError::Script("step_timeout_s must be positive".into()));
        }
        Ok(s)
    }

    /// The XRF-then-core mission on the shipped worksite.
    pub fn shipped() -> Self {
        Self::from_json(Self::SHIPPED_JSON).expect("shipped script is valid")
    }

    /// Resolves the profile and worksite references; relative paths are
    /// taken from `base`.
    pub fn resolve(&self, base: &Path) -> Result<(LinkProfile, Worksite), ServiceError> {
        let profile = match self.profile.as_str() {
            "default" => LinkProfile::default_mission(),
            "lossless" => LinkProfile::from_json(LinkProfile::LOSSLESS_JSON)?,
            path => LinkProfile::from_json(&read(base, path)?)?,
        };
        let worksite = match self.worksite.as_str() {
            "shipped" => Worksite::shipped(),
            path => Worksite::from_json(&read(base, path)?)?,
        };
        Ok((profile.with_seed(self.seeds.link), worksite))
    }
}

fn read(base: &Path, path: &str) -> Result<String, ServiceError> {
    let p = PathBuf::from(path);
    let p = if p.is_absolute() { p } else { base.join(p) };
    std::fs::read_to_string(&p).map_err(|e| ServiceError::Script(format!("{}: {e}", p.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub utterance: String,
    pub expected: Phase,
    /// Phase the step ended in, or `None` on timeout.
    pub terminal: Option<Phase>,
    pub completed: bool,
    pub duration_s: f64,
    pub position_error_m: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mission_id: String,
    pub tasks: Vec<TaskMetrics>,
    pub completion_rate: f64,
    pub mean_position_error_m: Option<f64>,
    pub stddev_position_error_m: Option<f64>,
    pub total_mission_time_s: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub critical_failure: bool,
    pub trace_hash: String,
    pub final_state_hash: String,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mission {}", self.mission_id);
        let _ = writeln!(out, "{:<3} {:<44} {:>9} {:>9} {:>12}  result", "#", "utterance", "terminal", "time s", "pos err m");
        for (i, t) in self.tasks.iter().enumerate() {
            let terminal = t.terminal.map(|p| format!("{p:?}")).unwrap_or_else(|| "timeout".into());
            let err = t.position_error_m.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
            let result = if t.completed { "ok".to_string() } else { format!("FAIL {}", t.failure.as_deref().unwrap_or("")) };
            let _ = writeln!(out, "{:<3} {:<44} {:>9} {:>9.2} {:>12}  {}", i + 1, t.utterance, terminal, t.duration_s, err, result);
        }
        let fmt = |v: Option<f64>| v.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "completion rate      {:.3}", self.completion_rate);
        let _ = writeln!(out, "position error m     mean {} sd {}", fmt(self.mean_position_error_m), fmt(self.stddev_position_error_m));
        let _ = writeln!(out, "mission time s       {:.2}", self.total_mission_time_s);
        let _ = writeln!(out, "bytes up / down      {} / {}", self.bytes_up, self.bytes_down);
        let _ = writeln!(out, "trace hash           {}", self.trace_hash);
        out
    }
}

/// Everything a harness run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub log: EventLog,
    pub uplink: LinkStats,
    pub downlink: LinkStats,
    /// Frame bytes handed to the wire by the shore and ship endpoints.
    pub shore_emitted: u64,
    pub ship_emitted: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum Await {
    Welcome,
    Token,
    Preview,
    Terminal { phase: Option<Phase>, outcome: Option<TaskOutcome> },
}

/// Operator side of the link: sends one step at a time and reacts to
/// server messages.
struct OperatorClient {
    id: String,
    state: Await,
    step: usize,
    started: f64,
    gesture_seq: u64,
    results: Vec<TaskMetrics>,
    pending: Vec<ClientMessage>,
}

impl OperatorClient {
    fn new(id: &str) -> Self {
        Self { id: id.into(), state: Await::Welcome, step: 0, started: 0.0, gesture_seq: 0, results: Vec::new(), pending: Vec::new() }
    }

    fn begin_step(&mut self, now: f64) {
        self.started = now;
        self.pending.push(ClientMessage::AcquireToken);
        self.state = Await::Token;
    }

    fn send_request(&mut self, step: &ScriptStep, now: f64) {
        if let Some(g) = &step.gesture {
            self.gesture_seq += 1;
            self.pending.push(ClientMessage::Gesture { id: self.gesture_seq, origin: g.origin, direction: g.target - g.origin, timestamp: now });
        }
        self.pending.push(ClientMessage::Utterance { text: step.utterance.clone(), timestamp: now });
        self.state = Await::Preview;
    }

    fn finish_step(&mut self, script: &MissionScript, now: f64, terminal: Option<Phase>, outcome: Option<&TaskOutcome>, failure: Option<String>) {
        let step = &script.steps[self.step];
        let completed = failure.is_none() && terminal == Some(step.expect) && outcome.is_none_or(TaskOutcome::succeeded);
        let failure = if completed { None } else { failure.or_else(|| Some(format!("ended in {terminal:?}"))) };
        if !completed && terminal.is_none_or(|p| !p.accepts_goal()) {
            self.pending.push(ClientMessage::Abort);
        }
        self.results.push(TaskMetrics {
            utterance: step.utterance.clone(),
            expected: step.expect,
            terminal,
            completed,
            duration_s: now - self.started,
            position_error_m: outcome.and_then(TaskOutcome::placement_error),
            failure,
        });
        self.step += 1;
        self.advance(script, now);
    }

    /// Consumes one server message.
    fn on_message(&mut self, script: &MissionScript, now: f64, msg: ServerMessage) {
        let Some(step) = script.steps.get(self.step) else { return };
        let step = step.clone();
        match (&mut self.state, msg) {
            (Await::Welcome, ServerMessage::Welcome { .. }) => self.begin_step(now),
            (Await::Token, ServerMessage::Token { holder: Some(h) }) if h == self.id => self.send_request(&step, now),
            (Await::Token, ServerMessage::Rejected { request, message, .. }) if request == "acquire_token" => {
                self.finish_step(script, now, None, None, Some(message));
            }
            (Await::Preview, ServerMessage::Preview { preview }) => {
                self.pending.push(ClientMessage::Confirm { preview_id: preview.id });
                self.state = Await::Terminal { phase: None, outcome: None };
            }
            (Await::Preview, ServerMessage::Diagnostic { message, .. })
            | (Await::Preview, ServerMessage::ResolveFailed { message, .. })
            | (Await::Preview, ServerMessage::PreviewFailed { message }) => {
                self.finish_step(script, now, Some(Phase::Idle), None, Some(message));
            }
            (Await::Preview, ServerMessage::Rejected { message, .. }) => {
                self.finish_step(script, now, None, None, Some(message));
            }
            // A stale confirm is re-previewed by the server.
            (Await::Terminal { phase: None, .. }, ServerMessage::Rejected { kind, .. }) if kind == "stale_preview" => self.state = Await::Preview,
            (Await::Terminal { phase: None, .. }, ServerMessage::Rejected { message, .. }) => {
                self.finish_step(script, now, None, None, Some(message));
            }
            (Await::Terminal { phase, .. }, ServerMessage::Phase { to, .. }) if matches!(to, Phase::Done | Phase::Aborted) => *phase = Some(to),
            (Await::Terminal { outcome, .. }, ServerMessage::TaskComplete { outcome: o }) => *outcome = Some(o),
            _ => {}
        }
        if let Await::Terminal { phase: Some(p), outcome } = &self.state {
            // Done waits for the outcome, which travels on the bulk channel.
            if *p == Phase::Aborted || outcome.is_some() {
                let (p, outcome) = (*p, outcome.clone());
                self.finish_step(script, now, Some(p), outcome.as_ref(), None);
            }
        }
    }

    fn advance(&mut self, script: &MissionScript, now: f64) {
        let last_failed_critical = self.results.last().is_some_and(|r| !r.completed) && script.steps[self.step - 1].critical;
        if self.step < script.steps.len() && !last_failed_critical {
            self.begin_step(now);
        } else {
            self.state = Await::Welcome;
            self.pending.push(ClientMessage::Bye);
        }
    }

    fn is_finished(&self, script: &MissionScript) -> bool {
        self.step >= script.steps.len() || self.results.last().is_some_and(|r| !r.completed && script.steps[self.step - 1].critical)
    }

    fn timeout(&mut self, script: &MissionScript, now: f64) {
        self.finish_step(script, now, None, None, Some("step timed out".into()));
    }
}

fn send_downlink(ep: &mut Endpoint, d: &Downlink) {
    let (channel, bytes) = encode_downlink(d);
    let _ = match channel {
        Channel::CmdReliable => ep.send_command(&bytes).map(|_| ()),
        Channel::Bulk => ep.send_bulk(&bytes).map(|_| ()),
        Channel::Telemetry => ep.publish_telemetry(TOPIC_STATUS, &bytes),
    };
}

/// Runs a script against a fresh mission. Returns the report and the
/// mission log; per-step failures are in the report.
pub fn run_script(script: &MissionScript, profile: &LinkProfile, worksite: &Worksite) -> Result<RunOutput, ServiceError> {
    let mut core = MissionCore::start(MissionConfig::new(&script.name, worksite.clone(), KinematicChain::reference_arm(), script.seeds.mission))?;
    let mut link = Duplex::new(profile)?;
    let mut client = OperatorClient::new(&script.operator_id);
    client.pending.push(ClientMessage::Hello { operator_id: script.operator_id.clone(), display_name: script.operator_id.clone(), role: Role::Commander });
    let mut attached = false;
    let mut disturbed = false;

    loop {
        let now = core.clock();
        for msg in client.pending.drain(..) {
            let bytes = encode_uplink(&msg)?;
            let _ = link.a.send_command(&bytes);
        }
        let (at_shore, at_ship) = link.step(now);
        for inbound in at_ship {
            let Ok(msg) = decode_uplink(&inbound) else { continue };
            match msg {
                ClientMessage::Hello { operator_id, display_name, role } if !attached => {
                    core.attach(OperatorSession { operator_id, display_name, role, connected_at: now })?;
                    attached = true;
                }
                ClientMessage::Bye if attached => {
                    core.detach(&script.operator_id)?;
                    attached = false;
                }
                msg if attached => core.handle(&script.operator_id, msg)?,
                _ => {}
            }
        }
        for inbound in at_shore {
            if let Ok(Downlink::Message(msg)) = decode_downlink(&inbound) {
                client.on_message(script, now, msg);
            }
        }
        if client.is_finished(script) && client.pending.is_empty() && !attached && link.a.is_quiet() && link.b.is_quiet() {
            break;
        }
        if !client.is_finished(script) && client.state != Await::Welcome && now - client.started > script.step_timeout_s {
            client.timeout(script, now);
        }
        if !client.is_finished(script) && client.state == Await::Welcome && now > script.step_timeout_s {
            return Err(ServiceError::Script("operator never attached".into()));
        }
        if let (Some(d), Some(hold)) = (client.step_is_running(script), core.executive().hold_status()) {
            if core.phase() == Phase::Holding && !disturbed && hold.elapsed >= d.after_contact_s {
                core.inject_disturbance(Disturbance { time: core.clock(), offset: d.offset });
                disturbed = true;
            }
        }
        if core.phase() != Phase::Holding {
            disturbed = false;
        }
        core.tick();
        for (to, d) in core.drain_outbox() {
            if attached && to == script.operator_id {
                send_downlink(&mut link.b, &d);
            }
        }
        if link.a.is_failed() || link.b.is_failed() {
            return Err(ServiceError::Script("link channel failed".into()));
        }
    }
    let final_state_hash = core.finish();

    let tasks = client.results;
    let completed = tasks.iter().filter(|t| t.completed).count();
    let errors: Vec<f64> = tasks.iter().filter_map(|t| t.position_error_m).collect();
    let (mean, sd) = if errors.is_empty() {
        (None, None)
    } else {
        let n = errors.len() as f64;
        let m = errors.iter().sum::<f64>() / n;
        (Some(m), Some((errors.iter().map(|e| (e - m).powi(2)).sum::<f64>() / n).sqrt()))
    };
    let critical_failure = tasks.len() < script.steps.len() || tasks.iter().zip(&script.steps).any(|(t, s)| s.critical && !t.completed);
    let report = MetricsReport {
        mission_id: script.name.clone(),
        completion_rate: completed as f64 / script.steps.len() as f64,
        tasks,
        mean_position_error_m: mean,
        stddev_position_error_m: sd,
        total_mission_time_s: core.clock(),
        bytes_up: link.a_to_b.stats().bytes_sent,
        bytes_down: link.b_to_a.stats().bytes_sent,
        critical_failure,
        trace_hash: core.history().hash(),
        final_state_hash,
    };
    let emitted = |ep: &Endpoint| ep.emissions().iter().map(|&(_, bits)| bits / 8).sum();
    Ok(RunOutput {
        report,
        log: core.history().clone(),
        uplink: link.a_to_b.stats(),
        downlink: link.b_to_a.stats(),
        shore_emitted: emitted(&link.a),
        ship_emitted: emitted(&link.b),
    })
}

impl OperatorClient {
    fn step_is_running<'s>(&self, script: &'s MissionScript) -> Option<&'s ScriptDisturbance> {
        match self.state {
            Await::Terminal { .. } => script.steps.get(self.step).and_then(|s| s.disturbance.as_ref()),
            _ => None,
        }
    }
}
