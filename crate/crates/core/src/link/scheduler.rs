//! Strict-priority frame scheduler under a sliding one-second bit budget.

use std::collections::{BTreeMap, VecDeque};

use super::arq::ReliableSender;
use super::frame::Frame;

pub const BUDGET_WINDOW_S: f64 = 1.0;

/// Anything that can offer frames to the scheduler.
pub trait TxQueue {
    /// Encoded size of the frame that would be taken next.
    fn peek_len(&mut self, now: f64) -> Option<usize>;
    fn pop_frame(&mut self, now: f64) -> Option<Frame>;
}

impl TxQueue for VecDeque<Frame> {
    fn peek_len(&mut self, _now: f64) -> Option<usize> {
        self.front().map(Frame::encoded_len)
    }
    fn pop_frame(&mut self, _now: f64) -> Option<Frame> {
        self.pop_front()
    }
}

impl TxQueue for ReliableSender {
    fn peek_len(&mut self, now: f64) -> Option<usize> {
        ReliableSender::peek_len(self, now)
    }
    fn pop_frame(&mut self, now: f64) -> Option<Frame> {
        ReliableSender::pop_frame(self, now)
    }
}

/// Latest-only telemetry: a newer snapshot on a topic replaces the queued one.
#[derive(Debug, Clone, Default)]
pub struct TelemetrySlots {
    slots: BTreeMap<u8, (u64, Frame)>,
    stamp: u64,
    replaced: u64,
}

impl TelemetrySlots {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&mut self, topic: u8, frame: Frame) {
        self.stamp += 1;
        if self.slots.insert(topic, (self.stamp, frame)).is_some() {
            self.replaced += 1;
        }
    }

    /// Snapshots discarded because a newer one arrived before emission.
    pub fn replaced(&self) -> u64 {
        self.replaced
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn oldest(&self) -> Option<u8> {
        self.slots.iter().min_by_key(|(_, (stamp, _))| *stamp).map(|(t, _)| *t)
    }
}

impl TxQueue for TelemetrySlots {
    fn peek_len(&mut self, _now: f64) -> Option<usize> {
        self.oldest().map(|t| self.slots[&t].1.encoded_len())
    }
    fn pop_frame(&mut self, _now: f64) -> Option<Frame> {
        let t = self.oldest()?;
        self.slots.remove(&t).map(|(_, f)| f)
    }
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    budget_bps: f64,
    history: VecDeque<(f64, u64)>,
    in_window: u64,
    emitted_bits: u64,
}

impl Scheduler {
    pub fn new(budget_bps: f64) -> Self {
        assert!(budget_bps > 0.0, "budget must be positive");
        Self { budget_bps, history: VecDeque::new(), in_window: 0, emitted_bits: 0 }
    }

    pub fn budget_bps(&self) -> f64 {
        self.budget_bps
    }

    pub fn emitted_bits(&self) -> u64 {
        self.emitted_bits
    }

    fn expire(&mut self, now: f64) {
        while let Some(&(t, bits)) = self.history.front() {
            if t > now - BUDGET_WINDOW_S {
                break;
            }
            self.history.pop_front();
            self.in_window -= bits;
        }
    }

    /// Whether `bytes` more could be emitted at `now` without exceeding the budget.
    pub fn fits(&mut self, now: f64, bytes: usize) -> bool {
        self.expire(now);
        (self.in_window + bytes as u64 * 8) as f64 <= self.budget_bps * BUDGET_WINDOW_S
    }

    fn record(&mut self, now: f64, bytes: usize) {
        let bits = bytes as u64 * 8;
        self.history.push_back((now, bits));
        self.in_window += bits;
        self.emitted_bits += bits;
    }

    /// Drains `queues` in priority order (index 0 first) while the budget
    /// allows. The highest-priority non-empty queue blocks the rest when its
    /// head does not fit.
    pub fn schedule(&mut self, now: f64, queues: &mut [&mut dyn TxQueue]) -> Vec<Frame> {
        let mut out = Vec::new();
        'emit: loop {
            for q in queues.iter_mut() {
                if let Some(len) = q.peek_len(now) {
                    if !self.fits(now, len) {
                        break 'emit;
                    }
                    let frame = q.pop_frame(now).expect("peeked frame");
                    self.record(now, len);
                    out.push(frame);
                    continue 'emit;
                }
            }
            break;
        }
        out
    }
}

/// Largest number of bits inside any half-open window `(t - w, t]`.
pub fn max_window_bits(emissions: &[(f64, u64)], window: f64) -> u64 {
    let mut worst = 0;
    let mut lo = 0;
    let mut sum = 0;
    for &(t, bits) in emissions {
        sum += bits;
        while emissions[lo].0 <= t - window {
            sum -= emissions[lo].1;
            lo += 1;
        }
        worst = worst.max(sum);
    }
    worst
}
