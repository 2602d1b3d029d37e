use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::arq::{sack_of, ArqConfig, MessageId, ReliableReceiver, ReliableSender, SendError, SenderEvent};
use super::emulator::{LinkEmulator, LinkProfile, ProfileError};
use super::frame::{decode_frame, encode_frame, Channel, Frame, FrameError, MAX_PAYLOAD};
use super::scheduler::{Scheduler, TelemetrySlots, TxQueue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Inbound {
    Command(Vec<u8>),
    Bulk(Vec<u8>),
    Telemetry { topic: u8, data: Vec<u8> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointConfig {
    pub budget_bps: f64,
    pub arq: ArqConfig,
}

impl EndpointConfig {
    /// Budget equal to the link bandwidth, timers seeded from its RTT.
    pub fn for_profile(profile: &LinkProfile) -> Self {
        Self { budget_bps: profile.bandwidth_bps, arq: ArqConfig::for_rtt(profile.rtt_s.max(0.05)) }
    }
}

/// One side of the link: reliable CMD and BULK channels, latest-only
/// telemetry, and a budgeted scheduler in front of the wire.
#[derive(Debug, Clone)]
pub struct Endpoint {
    cmd_tx: ReliableSender,
    cmd_rx: ReliableReceiver,
    bulk_tx: ReliableSender,
    bulk_rx: ReliableReceiver,
    acks: VecDeque<Frame>,
    telemetry: TelemetrySlots,
    telemetry_seq: u16,
    telemetry_seen: BTreeMap<u8, u16>,
    scheduler: Scheduler,
    emissions: Vec<(f64, u64)>,
    channel_bytes: [u64; 3],
    decode_errors: u64,
}

impl Endpoint {
    pub fn new(cfg: EndpointConfig) -> Self {
        Self {
            cmd_tx: ReliableSender::new(Channel::CmdReliable, cfg.arq.unfragmented()),
            cmd_rx: ReliableReceiver::new(Channel::CmdReliable),
            bulk_tx: ReliableSender::new(Channel::Bulk, cfg.arq),
            bulk_rx: ReliableReceiver::new(Channel::Bulk),
            acks: VecDeque::new(),
            telemetry: TelemetrySlots::new(),
            telemetry_seq: 0,
            telemetry_seen: BTreeMap::new(),
            scheduler: Scheduler::new(cfg.budget_bps),
            emissions: Vec::new(),
            channel_bytes: [0; 3],
            decode_errors: 0,
        }
    }

    /// Queues a single-frame command on the reliable channel.
    pub fn send_command(&mut self, payload: &[u8]) -> Result<MessageId, SendError> {
        self.cmd_tx.send(payload)
    }

    /// Queues a message of any size on the fragmenting reliable bulk channel.
    pub fn send_bulk(&mut self, payload: &[u8]) -> Result<MessageId, SendError> {
        self.bulk_tx.send(payload)
    }

    /// Replaces any unsent snapshot on `topic`.
    pub fn publish_telemetry(&mut self, topic: u8, data: &[u8]) -> Result<(), SendError> {
        if data.len() + 1 > MAX_PAYLOAD {
            return Err(SendError::TooLarge { len: data.len() + 1, max: MAX_PAYLOAD });
        }
        let mut payload = Vec::with_capacity(data.len() + 1);
        payload.push(topic);
        payload.extend_from_slice(data);
        let frame = Frame::data(Channel::Telemetry, self.telemetry_seq, payload);
        self.telemetry_seq = self.telemetry_seq.wrapping_add(1);
        self.telemetry.publish(topic, frame);
        Ok(())
    }

    fn refresh_ack(&mut self, channel: Channel) {
        let rx = if channel == Channel::CmdReliable { &mut self.cmd_rx } else { &mut self.bulk_rx };
        if let Some(ack) = rx.take_ack() {
            self.acks.retain(|f| f.channel != channel);
            self.acks.push_back(ack);
        }
    }

    /// Frames to put on the wire at `now`, priority ACK > CMD > TELEMETRY > BULK.
    pub fn poll_transmit(&mut self, now: f64) -> Vec<Vec<u8>> {
        self.cmd_tx.check_timeouts(now);
        self.bulk_tx.check_timeouts(now);
        self.refresh_ack(Channel::CmdReliable);
        self.refresh_ack(Channel::Bulk);
        let queues: [&mut dyn TxQueue; 4] = [&mut self.acks, &mut self.cmd_tx, &mut self.telemetry, &mut self.bulk_tx];
        let frames = self.scheduler.schedule(now, &mut { queues });
        frames
            .iter()
            .map(|f| {
                let bytes = encode_frame(f);
                self.emissions.push((now, bytes.len() as u64 * 8));
                self.channel_bytes[f.channel.index()] += bytes.len() as u64;
                bytes
            })
            .collect()
    }

    /// Handles one raw frame from the wire.
    pub fn receive(&mut self, now: f64, bytes: &[u8]) -> Result<Vec<Inbound>, FrameError> {
        let frame = match decode_frame(bytes) {
            Ok(f) => f,
            Err(e) => {
                self.decode_errors += 1;
                return Err(e);
            }
        };
        if frame.ack_flag {
            match frame.channel {
                Channel::CmdReliable => self.cmd_tx.on_ack(now, frame.ack, sack_of(&frame)),
                Channel::Bulk => self.bulk_tx.on_ack(now, frame.ack, sack_of(&frame)),
                Channel::Telemetry => {}
            }
            return Ok(Vec::new());
        }
        Ok(match frame.channel {
            Channel::CmdReliable => self.cmd_rx.on_data(&frame).into_iter().map(Inbound::Command).collect(),
            Channel::Bulk => self.bulk_rx.on_data(&frame).into_iter().map(Inbound::Bulk).collect(),
            Channel::Telemetry => {
                let Some((&topic, data)) = frame.payload.split_first() else { return Ok(Vec::new()) };
                let fresh = self.telemetry_seen.get(&topic).is_none_or(|last| {
                    let d = frame.seq.wrapping_sub(*last);
                    d != 0 && d < 0x8000
                });
                if !fresh {
                    return Ok(Vec::new());
                }
                self.telemetry_seen.insert(topic, frame.seq);
                vec![Inbound::Telemetry { topic, data: data.to_vec() }]
            }
        })
    }

    pub fn drain_events(&mut self) -> Vec<(Channel, SenderEvent)> {
        let mut out: Vec<_> = self.cmd_tx.drain_events().into_iter().map(|e| (Channel::CmdReliable, e)).collect();
        out.extend(self.bulk_tx.drain_events().into_iter().map(|e| (Channel::Bulk, e)));
        out
    }

    pub fn is_failed(&self) -> bool {
        self.cmd_tx.is_failed() || self.bulk_tx.is_failed()
    }

    /// Nothing queued or awaiting acknowledgement.
    pub fn is_quiet(&self) -> bool {
        self.cmd_tx.is_idle() && self.bulk_tx.is_idle() && self.telemetry.is_empty() && self.acks.is_empty()
    }

    /// `(time, bits)` of every emitted frame.
    pub fn emissions(&self) -> &[(f64, u64)] {
        &self.emissions
    }

    pub fn channel_bytes(&self) -> [u64; 3] {
        self.channel_bytes
    }

    pub fn budget_bps(&self) -> f64 {
        self.scheduler.budget_bps()
    }

    pub fn retransmissions(&self) -> u64 {
        self.cmd_tx.retransmissions() + self.bulk_tx.retransmissions()
    }

    pub fn telemetry_replaced(&self) -> u64 {
        self.telemetry.replaced()
    }

    pub fn decode_errors(&self) -> u64 {
        self.decode_errors
    }
}

/// Two endpoints joined by a pair of emulated one-way links, stepped on a
/// virtual clock.
#[derive(Debug, Clone)]
pub struct Duplex {
    pub a: Endpoint,
    pub b: Endpoint,
    pub a_to_b: LinkEmulator,
    pub b_to_a: LinkEmulator,
}

impl Duplex {
    pub fn new(profile: &LinkProfile) -> Result<Self, ProfileError> {
        let cfg = EndpointConfig::for_profile(profile);
        let reverse = profile.clone().with_seed(profile.rng_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
        Ok(Self { a: Endpoint::new(cfg), b: Endpoint::new(cfg), a_to_b: LinkEmulator::new(profile.clone())?, b_to_a: LinkEmulator::new(reverse)? })
    }

    /// Transmits what each side has ready, then delivers due frames.
    /// Returns what arrived at `a` and at `b`.
    pub fn step(&mut self, now: f64) -> (Vec<Inbound>, Vec<Inbound>) {
        for bytes in self.a.poll_transmit(now) {
            self.a_to_b.send(now, bytes);
        }
        for bytes in self.b.poll_transmit(now) {
            self.b_to_a.send(now, bytes);
        }
        let mut at_b = Vec::new();
        for (_, bytes) in self.a_to_b.poll(now) {
            at_b.extend(self.b.receive(now, &bytes).unwrap_or_default());
        }
        let mut at_a = Vec::new();
        for (_, bytes) in self.b_to_a.poll(now) {
            at_a.extend(self.a.receive(now, &bytes).unwrap_or_default());
        }
        (at_a, at_b)
    }
}
