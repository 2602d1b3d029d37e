use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    GoalProposed,
    Previewed,
    Executing,
    Holding,
    Done,
    Aborted,
}

impl Phase {
    pub const ALL: [Phase; 7] =
        [Phase::Idle, Phase::GoalProposed, Phase::Previewed, Phase::Executing, Phase::Holding, Phase::Done, Phase::Aborted];

    /// Phases in which a new goal may be proposed.
    pub fn accepts_goal(self) -> bool {
        matches!(self, Phase::Idle | Phase::Done | Phase::Aborted)
    }

    /// Phases in which the arm is under executive control.
    pub fn is_active(self) -> bool {
        matches!(self, Phase::Executing | Phase::Holding)
    }
}

/// Everything that can move the mission state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Propose,
    PreviewReady,
    PreviewFailed,
    Confirm,
    /// Confirm against a preview whose scene revision is out of date.
    StaleConfirm,
    Reject,
    SegmentDone,
    LastSegmentDone,
    ContactMade,
    HoldComplete,
    HoldFailed,
    MotionFault,
    Abort,
}

impl Trigger {
    pub const ALL: [Trigger; 13] = [
        Trigger::Propose,
        Trigger::PreviewReady,
        Trigger::PreviewFailed,
        Trigger::Confirm,
        Trigger::StaleConfirm,
        Trigger::Reject,
        Trigger::SegmentDone,
        Trigger::LastSegmentDone,
        Trigger::ContactMade,
        Trigger::HoldComplete,
        Trigger::HoldFailed,
        Trigger::MotionFault,
        Trigger::Abort,
    ];
}

/// The transition table. `None` is a rejection: the trigger is illegal in
/// that phase and the state is left untouched.
pub fn next_phase(phase: Phase, trigger: Trigger) -> Option<Phase> {
    use Phase::*;
    use Trigger::*;
    match (phase, trigger) {
        (_, Abort) => Some(Aborted),
        (Idle | Done | Aborted, Propose) => Some(GoalProposed),
        (GoalProposed, PreviewReady) => Some(Previewed),
        (GoalProposed, PreviewFailed) => Some(Idle),
        (GoalProposed | Previewed, Reject) => Some(Idle),
        (Previewed, Confirm) => Some(Executing),
        (Previewed, StaleConfirm) => Some(GoalProposed),
        (Executing, SegmentDone) => Some(Executing),
        (Executing, LastSegmentDone) => Some(Done),
        (Executing, ContactMade) => Some(Holding),
        (Executing, MotionFault) => Some(Aborted),
        (Holding, HoldComplete) => Some(Executing),
        (Holding, HoldFailed) => Some(Aborted),
        _ => None,
    }
}
