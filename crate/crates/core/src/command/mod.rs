//! Task-level command language: transcripts plus pointing gestures become
//! typed goals whose targets trace back to the scene, a gesture, or the words.
//!
//! ```text
//! command   := move | grasp | xrf | core | tune | stow | abort
//! move      := ("move" | "go") [article] ("gripper"|"arm"|"end effector")? "to" target
//! grasp     := ("grab" | "grasp" | "pick up") [article] LABEL
//! xrf       := ("take" | "start") [article] "xrf" ("measurement"|"reading")
//!              (("there"|"here") | "at" target)? ["for" NUMBER ("seconds"|"s")]
//! core      := ("take" | "collect") [article] ("push core" | "core sample") (("there"|"here") | "at" target)?
//! tune      := ("set" | "increase" | "decrease") PARAM ("to" | "by") NUMBER [UNIT]
//! stow      := "stow" [article] ("arm" | "gripper")
//! abort     := "stop" | "abort" | "freeze"
//! target    := "there" | "here" | "(" NUMBER "," NUMBER "," NUMBER ")" ["m"|"cm"] | [article] LABEL
//! PARAM     := "tube voltage" | "tube current" | "integration time"
//! UNIT      := "kV" | "uA" | "s" | "cm" | "m"
//! NUMBER    := signed decimal | "zero" .. "twenty"
//! ```
//!
//! Matching is case-insensitive and trailing sentence punctuation is ignored.
//! A missing XRF or core location means the gestured spot.

pub mod corpus;
mod lexer;
mod parser;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{HitTarget, ObjectId, SceneGraph};

pub use lexer::{number_word, tokenize, Token, TokenKind};
pub use parser::parse_command;

/// Integration time used when a measurement command names none (s).
pub const DEFAULT_INTEGRATION_S: f64 = 60.0;
/// Gestures this close in time to the utterance are fusion candidates (s).
pub const FUSION_WINDOW_S: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub timestamp: f64,
    pub operator_id: String,
}

impl Utterance {
    pub fn new(text: &str, timestamp: f64, operator_id: &str) -> Self {
        Self { text: text.to_string(), timestamp, operator_id: operator_id.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureEvent {
    pub id: u64,
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub timestamp: f64,
    pub operator_id: String,
}

impl GestureEvent {
    /// Normalizes `direction`; `None` for a zero or non-finite direction.
    pub fn pointing(id: u64, origin: Vector3<f64>, direction: Vector3<f64>, timestamp: f64, operator_id: &str) -> Option<Self> {
        let n = direction.norm();
        (n.is_finite() && n > 0.0).then(|| Self { id, origin, direction: direction / n, timestamp, operator_id: operator_id.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XrfParam {
    TubeVoltage,
    TubeCurrent,
    IntegrationTime,
}

impl XrfParam {
    /// Canonical unit token (lowercase).
    pub fn unit(self) -> &'static str {
        match self {
            XrfParam::TubeVoltage => "kv",
            XrfParam::TubeCurrent => "ua",
            XrfParam::IntegrationTime => "s",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            XrfParam::TubeVoltage => "tube voltage",
            XrfParam::TubeCurrent => "tube current",
            XrfParam::IntegrationTime => "integration time",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneValue {
    /// Absolute setting in the parameter's canonical unit.
    To(f64),
    /// Signed change.
    By(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Deictic,
    Label(String),
    Point(Vector3<f64>),
    Object { id: ObjectId, position: Vector3<f64> },
}

impl Target {
    pub fn point(&self) -> Option<Vector3<f64>> {
        match self {
            Target::Point(p) | Target::Object { position: p, .. } => Some(*p),
            _ => None,
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.point().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Goal {
    MoveTo { target: Target },
    GraspTool { target: Target },
    XrfMeasure { target: Target, integration_s: f64 },
    PushCore { target: Target },
    TuneXrf { param: XrfParam, value: TuneValue },
    Stow,
    Abort,
}

impl Goal {
    pub fn target(&self) -> Option<&Target> {
        match self {
            Goal::MoveTo { target } | Goal::GraspTool { target } | Goal::XrfMeasure { target, .. } | Goal::PushCore { target } => Some(target),
            _ => None,
        }
    }

    fn target_mut(&mut self) -> Option<&mut Target> {
        match self {
            Goal::MoveTo { target } | Goal::GraspTool { target } | Goal::XrfMeasure { target, .. } | Goal::PushCore { target } => Some(target),
            _ => None,
        }
    }

    /// XRF and core targets must end up as bare points.
    fn wants_point(&self) -> bool {
        matches!(self, Goal::XrfMeasure { .. } | Goal::PushCore { .. })
    }
}

/// Where a resolved target came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSource {
    /// No target, or still symbolic.
    Unresolved,
    /// Coordinates spoken in the utterance.
    Utterance,
    SceneObject { id: ObjectId },
    Gesture { gesture_id: u64, hit: HitTarget },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub operator_id: String,
    pub utterance: String,
    pub utterance_time: f64,
    pub gesture_id: Option<u64>,
    pub source: TargetSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGoal {
    pub goal: Goal,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("at token {position}: {message} (expected one of: {})", expected.join(", "))]
pub struct Diagnostic {
    /// 1-based token index; one past the last token at end of input.
    pub position: usize,
    pub expected: Vec<String>,
    pub message: String,
}

pub type ParseResult = Result<TaskGoal, Diagnostic>;

/// Parses an utterance. Total: any text yields a goal or a diagnostic.
pub fn parse_utterance(u: &Utterance) -> ParseResult {
    if u.text.trim().is_empty() {
        return Err(Diagnostic { position: 1, expected: vec!["<command>".into()], message: "empty utterance".into() });
    }
    let goal = parse_command(&u.text)?;
    let source = match goal.target() {
        Some(Target::Point(_)) => TargetSource::Utterance,
        _ => TargetSource::Unresolved,
    };
    Ok(TaskGoal {
        goal,
        provenance: Provenance {
            operator_id: u.operator_id.clone(),
            utterance: u.text.clone(),
            utterance_time: u.timestamp,
            gesture_id: None,
            source,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ResolveError {
    #[error("no gesture within {window_s} s of the utterance")]
    NoGestureInWindow { window_s: f64 },
    #[error("label '{label}' matches several objects: {candidates:?}")]
    AmbiguousLabel { label: String, candidates: Vec<ObjectId> },
    #[error("no object labeled '{label}'")]
    UnknownLabel { label: String },
    #[error("gesture {gesture_id} points at nothing")]
    GestureMiss { gesture_id: u64 },
    #[error("gesture {gesture_id} has a non-unit direction")]
    InvalidGesture { gesture_id: u64 },
}

impl ResolveError {
    pub fn kind(&self) -> &'static str {
        match self {
            ResolveError::NoGestureInWindow { .. } => "no_gesture_in_window",
            ResolveError::AmbiguousLabel { .. } => "ambiguous_label",
            ResolveError::UnknownLabel { .. } => "unknown_label",
            ResolveError::GestureMiss { .. } => "gesture_miss",
            ResolveError::InvalidGesture { .. } => "invalid_gesture",
        }
    }
}

/// The operator's gesture nearest in time to `t`, within the fusion window.
/// Ties go to the earlier gesture.
pub fn fusion_candidate<'a>(gestures: &'a [GestureEvent], operator_id: &str, t: f64) -> Option<&'a GestureEvent> {
    gestures
        .iter()
        .filter(|g| g.operator_id == operator_id && (g.timestamp - t).abs() <= FUSION_WINDOW_S)
        .min_by(|a, b| (a.timestamp - t).abs().total_cmp(&(b.timestamp - t).abs()).then(a.timestamp.total_cmp(&b.timestamp)))
}

/// Binds symbolic referents against a scene snapshot and the operator's gestures.
pub fn resolve_referents(goal: &TaskGoal, scene: &SceneGraph, gestures: &[GestureEvent]) -> Result<TaskGoal, ResolveError> {
    let mut out = goal.clone();
    let wants_point = out.goal.wants_point();
    let Some(target) = out.goal.target_mut() else {
        return Ok(out);
    };
    match target.clone() {
        Target::Deictic => {
            let g = fusion_candidate(gestures, &goal.provenance.operator_id, goal.provenance.utterance_time)
                .ok_or(ResolveError::NoGestureInWindow { window_s: FUSION_WINDOW_S })?;
            let hit = scene
                .raycast(&g.origin, &g.direction)
                .map_err(|_| ResolveError::InvalidGesture { gesture_id: g.id })?
                .ok_or(ResolveError::GestureMiss { gesture_id: g.id })?;
            *target = Target::Point(hit.point);
            out.provenance.gesture_id = Some(g.id);
            out.provenance.source = TargetSource::Gesture { gesture_id: g.id, hit: hit.target };
        }
        Target::Label(label) => {
            let matches = scene.find_by_label(&label);
            let object = match matches.as_slice() {
                [] => return Err(ResolveError::UnknownLabel { label }),
                [one] => *one,
                many => return Err(ResolveError::AmbiguousLabel { label, candidates: many.iter().map(|o| o.id).collect() }),
            };
            *target = if wants_point { Target::Point(object.position()) } else { Target::Object { id: object.id, position: object.position() } };
            out.provenance.source = TargetSource::SceneObject { id: object.id };
        }
        Target::Point(_) | Target::Object { .. } => {}
    }
    Ok(out)
}
