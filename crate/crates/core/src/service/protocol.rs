//! Application messages carried in link frame payloads.
//!
//! | direction | channel   | payload                                            |
//! |-----------|-----------|----------------------------------------------------|
//! | up        | CMD       | JSON [`ClientMessage`]                             |
//! | down      | CMD       | JSON [`ServerMessage`] (small messages)            |
//! | down      | BULK      | `0x00` + JSON [`ServerMessage`], or `0x01` + scene delta |
//! | down      | TELEMETRY | topic `0x01`, JSON [`StatusReport`]                |
//!
//! Scene deltas travel on the reliable BULK channel so that each one applies
//! to the revision the receiver already holds.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::TaskGoal;
use crate::executive::{ContactHoldStatus, Phase, Preview, TaskOutcome, Trigger};
use crate::kinematics::{JointVector, Pose};
use crate::link::{Channel, Inbound, MAX_PAYLOAD};
use crate::scene::{HitTarget, SceneDelta, SceneError};
use crate::sim::{Contact, XrfSourceParams, XrfSpectrum};

pub const TOPIC_STATUS: u8 = 1;
const BULK_JSON: u8 = 0;
const BULK_SCENE: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Commander,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello { operator_id: String, display_name: String, role: Role },
    Utterance { text: String, timestamp: f64 },
    Gesture { id: u64, origin: Vector3<f64>, direction: Vector3<f64>, timestamp: f64 },
    AcquireToken,
    ReleaseToken,
    Confirm { preview_id: u64 },
    Reject,
    Abort,
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome { mission_id: String, operator_id: String, scene_revision: u64 },
    /// A request that was refused; `kind` is the error's snake-case name.
    Rejected { request: String, kind: String, message: String, holder: Option<String> },
    Diagnostic { utterance: String, position: usize, expected: Vec<String>, message: String },
    ResolveFailed { utterance: String, kind: String, message: String },
    GestureHit { gesture_id: u64, point: Option<Vector3<f64>>, target: Option<HitTarget> },
    GoalProposed { goal: TaskGoal },
    Token { holder: Option<String> },
    Phase { from: Phase, to: Phase, trigger: Trigger },
    Preview { preview: Preview },
    PreviewFailed { message: String },
    XrfParams { params: XrfSourceParams },
    TaskComplete { outcome: TaskOutcome },
    PartialSpectrum { reason: String, live_time: f64, region: String, spectrum: XrfSpectrum },
    Aborted { reason: String },
}

impl ServerMessage {
    /// Large messages go on BULK.
    fn prefers_bulk(&self) -> bool {
        matches!(self, ServerMessage::Preview { .. } | ServerMessage::TaskComplete { .. } | ServerMessage::PartialSpectrum { .. })
    }
}

/// Periodic state broadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub clock: f64,
    pub phase: Phase,
    pub q: JointVector,
    pub tool: Pose,
    pub contact: Contact,
    pub hold: Option<ContactHoldStatus>,
    pub token_holder: Option<String>,
    pub scene_revision: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Downlink {
    Message(ServerMessage),
    Scene(SceneDelta),
    Status(StatusReport),
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("message JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scene delta: {0}")]
    Scene(#[from] SceneError),
    #[error("unexpected {0:?} payload")]
    UnexpectedChannel(Channel),
    #[error("unknown bulk tag {0:#04x}")]
    UnknownBulkTag(u8),
    #[error("unknown telemetry topic {0}")]
    UnknownTopic(u8),
    #[error("empty payload")]
    Empty,
}

/// Uplink messages always fit one CMD frame; anything larger is refused.
pub fn encode_uplink(msg: &ClientMessage) -> Result<Vec<u8>, ProtocolError> {
    let bytes = serde_json::to_vec(msg)?;
    if bytes.len() > MAX_PAYLOAD {
        return Err(ProtocolError::UnexpectedChannel(Channel::Bulk));
    }
    Ok(bytes)
}

pub fn decode_uplink(inbound: &Inbound) -> Result<ClientMessage, ProtocolError> {
    match inbound {
        Inbound::Command(bytes) => Ok(serde_json::from_slice(bytes)?),
        Inbound::Bulk(_) => Err(ProtocolError::UnexpectedChannel(Channel::Bulk)),
        Inbound::Telemetry { .. } => Err(ProtocolError::UnexpectedChannel(Channel::Telemetry)),
    }
}

/// Channel and payload for a downlink item. Telemetry payloads exclude the
/// topic byte, which the endpoint adds.
pub fn encode_downlink(d: &Downlink) -> (Channel, Vec<u8>) {
    match d {
        Downlink::Message(m) => {
            let json = serde_json::to_vec(m).expect("server messages serialize");
            if m.prefers_bulk() || json.len() > MAX_PAYLOAD {
                let mut out = Vec::with_capacity(json.len() + 1);
                out.push(BULK_JSON);
                out.extend_from_slice(&json);
                (Channel::Bulk, out)
            } else {
                (Channel::CmdReliable, json)
            }
        }
        Downlink::Scene(delta) => {
            let mut out = vec![BULK_SCENE];
            out.extend_from_slice(&delta.encode());
            (Channel::Bulk, out)
        }
        Downlink::Status(s) => (Channel::Telemetry, serde_json::to_vec(s).expect("status serializes")),
    }
}

pub fn decode_downlink(inbound: &Inbound) -> Result<Downlink, ProtocolError> {
    match inbound {
        Inbound::Command(bytes) => Ok(Downlink::Message(serde_json::from_slice(bytes)?)),
        Inbound::Bulk(bytes) => {
            let (&tag, body) = bytes.split_first().ok_or(ProtocolError::Empty)?;
            match tag {
                BULK_JSON => Ok(Downlink::Message(serde_json::from_slice(body)?)),
                BULK_SCENE => Ok(Downlink::Scene(SceneDelta::decode(body)?)),
                t => Err(ProtocolError::UnknownBulkTag(t)),
            }
        }
        Inbound::Telemetry { topic: TOPIC_STATUS, data } => Ok(Downlink::Status(serde_json::from_slice(data)?)),
        Inbound::Telemetry { topic, .. } => Err(ProtocolError::UnknownTopic(*topic)),
    }
}
