//! Selective-repeat ARQ over a 16-bit wrapping sequence space.
//!
//! Messages larger than one frame are split into consecutive sequence numbers
//! with FIN on the last fragment. ACK frames carry the next expected sequence
//! number in `ack` and a 32-bit selective-ack bitmap as payload: bit `i` set
//! means `ack + 1 + i` is buffered at the receiver.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::frame::{Channel, Frame, MAX_PAYLOAD};

pub const WINDOW: u16 = 256;
pub const SACK_BITS: u16 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArqConfig {
    /// Initial round-trip estimate (s).
    pub initial_rtt: f64,
    /// Retransmission timeout as a multiple of the smoothed round-trip time.
    pub rto_factor: f64,
    pub backoff: f64,
    pub max_attempts: u32,
    /// Largest message accepted; 0 allows any size via fragmentation.
    pub max_message: usize,
}

impl ArqConfig {
    pub fn for_rtt(rtt: f64) -> Self {
        Self { initial_rtt: rtt, rto_factor: 1.5, backoff: 2.0, max_attempts: 8, max_message: 0 }
    }

    /// Single-frame messages only.
    pub fn unfragmented(self) -> Self {
        Self { max_message: MAX_PAYLOAD, ..self }
    }
}

pub type MessageId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SenderEvent {
    Delivered { message: MessageId, at: f64, attempts: u32 },
    /// A fragment exhausted its attempts; the channel is presumed down and
    /// every undelivered message is reported failed.
    DeliveryTimeout { message: MessageId, at: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SendError {
    #[error("message of {len} bytes exceeds the {max}-byte limit")]
    TooLarge { len: usize, max: usize },
    #[error("channel failed after a delivery timeout")]
    ChannelDown,
}

#[derive(Debug, Clone)]
struct Outstanding {
    seq: u16,
    message: MessageId,
    fin: bool,
    payload: Vec<u8>,
    sent_at: Option<f64>,
    deadline: f64,
    rto: f64,
    attempts: u32,
    acked: bool,
}

#[derive(Debug, Clone)]
pub struct ReliableSender {
    channel: Channel,
    cfg: ArqConfig,
    next_seq: u16,
    next_message: MessageId,
    srtt: f64,
    outstanding: VecDeque<Outstanding>,
    backlog: VecDeque<(MessageId, bool, Vec<u8>)>,
    /// Highest attempt count seen per message still in flight.
    message_attempts: BTreeMap<MessageId, u32>,
    events: Vec<SenderEvent>,
    failed: bool,
    retransmissions: u64,
}

impl ReliableSender {
    pub fn new(channel: Channel, cfg: ArqConfig) -> Self {
        Self {
            channel,
            cfg,
            next_seq: 0,
            next_message: 0,
            srtt: cfg.initial_rtt,
            outstanding: VecDeque::new(),
            backlog: VecDeque::new(),
            message_attempts: BTreeMap::new(),
            events: Vec::new(),
            failed: false,
            retransmissions: 0,
        }
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn is_failed(&self) -> bool {
        self.failed
    }

    pub fn is_idle(&self) -> bool {
        self.outstanding.is_empty() && self.backlog.is_empty()
    }

    pub fn pending_messages(&self) -> usize {
        self.message_attempts.len()
    }

    pub fn retransmissions(&self) -> u64 {
        self.retransmissions
    }

    pub fn srtt(&self) -> f64 {
        self.srtt
    }

    /// Current timeout for a first transmission.
    pub fn base_rto(&self) -> f64 {
        self.cfg.rto_factor * self.srtt
    }

    pub fn send(&mut self, payload: &[u8]) -> Result<MessageId, SendError> {
        if self.failed {
            return Err(SendError::ChannelDown);
        }
        if self.cfg.max_message > 0 && payload.len() > self.cfg.max_message {
            return Err(SendError::TooLarge { len: payload.len(), max: self.cfg.max_message });
        }
        let id = self.next_message;
        self.next_message += 1;
        let chunks: Vec<&[u8]> = if payload.is_empty() { vec![&[][..]] } else { payload.chunks(MAX_PAYLOAD).collect() };
        let last = chunks.len() - 1;
        for (i, chunk) in chunks.into_iter().enumerate() {
            self.backlog.push_back((id, i == last, chunk.to_vec()));
        }
        self.message_attempts.insert(id, 0);
        Ok(id)
    }

    fn admit(&mut self) {
        while self.outstanding.len() < WINDOW as usize {
            let Some((message, fin, payload)) = self.backlog.pop_front() else { break };
            let seq = self.next_seq;
            self.next_seq = self.next_seq.wrapping_add(1);
            self.outstanding.push_back(Outstanding { seq, message, fin, payload, sent_at: None, deadline: 0.0, rto: 0.0, attempts: 0, acked: false });
        }
    }

    fn fail(&mut self, now: f64) {
        self.failed = true;
        for message in std::mem::take(&mut self.message_attempts).into_keys() {
            self.events.push(SenderEvent::DeliveryTimeout { message, at: now });
        }
        self.outstanding.clear();
        self.backlog.clear();
    }

    /// Expires fragments whose final attempt has timed out.
    pub fn check_timeouts(&mut self, now: f64) {
        if self.failed {
            return;
        }
        let max = self.cfg.max_attempts;
        if self.outstanding.iter().any(|o| !o.acked && o.attempts >= max && now >= o.deadline) {
            self.fail(now);
        }
    }

    fn due_index(&mut self, now: f64) -> Option<usize> {
        if self.failed {
            return None;
        }
        self.admit();
        let max = self.cfg.max_attempts;
        self.outstanding.iter().position(|o| !o.acked && (o.sent_at.is_none() || (now >= o.deadline && o.attempts < max)))
    }

    /// Encoded size of the next frame that should go out now.
    pub fn peek_len(&mut self, now: f64) -> Option<usize> {
        let i = self.due_index(now)?;
        Some(super::frame::HEADER_LEN + self.outstanding[i].payload.len() + super::frame::CRC_LEN)
    }

    /// Takes the next due frame and starts (or backs off) its timer.
    pub fn pop_frame(&mut self, now: f64) -> Option<Frame> {
        let i = self.due_index(now)?;
        let base = self.base_rto();
        let backoff = self.cfg.backoff;
        let o = &mut self.outstanding[i];
        o.rto = if o.attempts == 0 { base } else { o.rto * backoff };
        o.attempts += 1;
        o.sent_at = Some(now);
        o.deadline = now + o.rto;
        if o.attempts > 1 {
            self.retransmissions += 1;
        }
        let attempts = self.message_attempts.entry(o.message).or_default();
        *attempts = (*attempts).max(o.attempts);
        Some(Frame { channel: self.channel, ack_flag: false, fin: o.fin, seq: o.seq, ack: 0, payload: o.payload.clone() })
    }

    /// Processes an ACK frame's cumulative ack and selective bitmap.
    pub fn on_ack(&mut self, now: f64, ack: u16, sack: u32) {
        if self.failed {
            return;
        }
        let Some(base) = self.outstanding.front().map(|o| o.seq) else { return };
        let span = self.next_seq.wrapping_sub(base);
        let progress = ack.wrapping_sub(base);
        let cumulative = if progress <= span { progress } else { 0 };
        let mut samples = Vec::new();
        for o in self.outstanding.iter_mut() {
            let offset = o.seq.wrapping_sub(base);
            let selective = {
                let d = o.seq.wrapping_sub(ack).wrapping_sub(1);
                d < SACK_BITS && sack & (1 << d) != 0
            };
            if !o.acked && o.sent_at.is_some() && (offset < cumulative || selective) {
                o.acked = true;
                // Karn: only unambiguous samples update the estimate
                if o.attempts == 1 {
                    samples.push(now - o.sent_at.expect("sent"));
                }
            }
        }
        for s in samples {
            self.srtt = 0.875 * self.srtt + 0.125 * s;
        }
        while self.outstanding.front().is_some_and(|o| o.acked) {
            let o = self.outstanding.pop_front().expect("front");
            if o.fin {
                let attempts = self.message_attempts.remove(&o.message).unwrap_or(0);
                self.events.push(SenderEvent::Delivered { message: o.message, at: now, attempts });
            }
        }
        self.admit();
    }

    pub fn drain_events(&mut self) -> Vec<SenderEvent> {
        std::mem::take(&mut self.events)
    }
}

#[derive(Debug, Clone)]
pub struct ReliableReceiver {
    channel: Channel,
    expected: u16,
    buffer: BTreeMap<u16, (bool, Vec<u8>)>,
    partial: Vec<u8>,
    ack_due: bool,
    duplicates: u64,
}

impl ReliableReceiver {
    pub fn new(channel: Channel) -> Self {
        Self { channel, expected: 0, buffer: BTreeMap::new(), partial: Vec::new(), ack_due: false, duplicates: 0 }
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    /// Accepts a data frame and returns every message now complete, in order.
    pub fn on_data(&mut self, frame: &Frame) -> Vec<Vec<u8>> {
        self.ack_due = true;
        let offset = frame.seq.wrapping_sub(self.expected);
        if offset >= WINDOW || self.buffer.contains_key(&frame.seq) {
            self.duplicates += 1;
            return Vec::new();
        }
        self.buffer.insert(frame.seq, (frame.fin, frame.payload.clone()));
        let mut out = Vec::new();
        while let Some((fin, payload)) = self.buffer.remove(&self.expected) {
            self.expected = self.expected.wrapping_add(1);
            self.partial.extend_from_slice(&payload);
            if fin {
                out.push(std::mem::take(&mut self.partial));
            }
        }
        out
    }

    pub fn sack_bitmap(&self) -> u32 {
        let mut bits = 0u32;
        for d in 0..SACK_BITS {
            if self.buffer.contains_key(&self.expected.wrapping_add(1 + d)) {
                bits |= 1 << d;
            }
        }
        bits
    }

    /// An ACK frame if data arrived since the last one was taken.
    pub fn take_ack(&mut self) -> Option<Frame> {
        if !self.ack_due {
            return None;
        }
        self.ack_due = false;
        Some(ack_frame(self.channel, self.expected, self.sack_bitmap()))
    }

    pub fn ack_pending(&self) -> bool {
        self.ack_due
    }
}

pub fn ack_frame(channel: Channel, ack: u16, sack: u32) -> Frame {
    Frame { channel, ack_flag: true, fin: false, seq: 0, ack, payload: sack.to_be_bytes().to_vec() }
}

/// Selective-ack bitmap carried by an ACK frame (zero if absent or short).
pub fn sack_of(frame: &Frame) -> u32 {
    frame.payload.get(..4).map_or(0, |b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
}
