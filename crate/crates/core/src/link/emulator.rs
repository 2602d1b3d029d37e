//! Deterministic one-way link emulator: a FIFO serialization pipe followed by
//! propagation delay with jitter, random loss and scheduled outages.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProfile {
    pub bandwidth_bps: f64,
    pub rtt_s: f64,
    /// Half-width of the uniform one-way delay jitter.
    pub jitter_s: f64,
    pub loss: f64,
    #[serde(default)]
    pub outages: Vec<[f64; 2]>,
    #[serde(default)]
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("bandwidth must be positive")]
    Bandwidth,
    #[error("loss must lie in [0, 1]")]
    Loss,
    #[error("rtt and jitter must be non-negative and jitter at most rtt/2")]
    Delay,
    #[error("outages must be ordered, disjoint, non-empty intervals")]
    Outages,
    #[error("invalid profile JSON: {0}")]
    Json(String),
}

impl LinkProfile {
    pub const DEFAULT_JSON: &'static str = include_str!("../../fixtures/profiles/default.json");
    pub const LOSSLESS_JSON: &'static str = include_str!("../../fixtures/profiles/lossless.json");

    /// The degraded mission profile shipped as a fixture.
    pub fn default_mission() -> Self {
        Self::from_json(Self::DEFAULT_JSON).expect("shipped default profile is valid")
    }

    /// Infinite-quality link apart from serialization at `bandwidth_bps`.
    pub fn ideal(bandwidth_bps: f64) -> Self {
        Self { bandwidth_bps, rtt_s: 0.0, jitter_s: 0.0, loss: 0.0, outages: Vec::new(), rng_seed: 0 }
    }

    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let p: LinkProfile = serde_json::from_str(text).map_err(|e| ProfileError::Json(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if !(self.bandwidth_bps > 0.0 && self.bandwidth_bps.is_finite()) {
            return Err(ProfileError::Bandwidth);
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return Err(ProfileError::Loss);
        }
        if !(self.rtt_s >= 0.0 && self.jitter_s >= 0.0 && self.jitter_s <= self.rtt_s / 2.0) {
            return Err(ProfileError::Delay);
        }
        let mut last_end = f64::NEG_INFINITY;
        for [s, e] in &self.outages {
            if !(s < e) || *s < last_end {
                return Err(ProfileError::Outages);
            }
            last_end = *e;
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn in_outage(&self, t: f64) -> bool {
        self.outages.iter().any(|[s, e]| t >= *s && t < *e)
    }

    fn overlaps_outage(&self, a: f64, b: f64) -> bool {
        self.outages.iter().any(|[s, e]| a < *e && b >= *s)
    }

    pub fn serialization_time(&self, bytes: usize) -> f64 {
        bytes as f64 * 8.0 / self.bandwidth_bps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fate", rename_all = "snake_case")]
pub enum Fate {
    Delivered { at: f64 },
    Lost,
    Outage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub sent_at: f64,
    /// When the last bit left the serializer.
    pub serialized_at: f64,
    pub channel: u8,
    pub len: usize,
    pub fate: Fate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub frames_sent: u64,
    pub bytes_sent: u64,
    pub frames_lost: u64,
    pub frames_blacked_out: u64,
    pub frames_delivered: u64,
    pub bytes_delivered: u64,
}

#[derive(Debug, Clone)]
pub struct LinkEmulator {
    profile: LinkProfile,
    rng: ChaCha8Rng,
    pipe_free_at: f64,
    last_arrival: BTreeMap<u8, f64>,
    /// Keyed by (arrival time bits, admission order) so equal arrivals stay FIFO.
    in_flight: BTreeMap<(u64, u64), Vec<u8>>,
    admitted: u64,
    trace: Vec<TraceEntry>,
    stats: LinkStats,
}

/// Orders non-negative finite floats by their bit patterns.
fn time_key(t: f64) -> u64 {
    debug_assert!(t >= 0.0 && t.is_finite());
    t.to_bits()
}

impl LinkEmulator {
    pub fn new(profile: LinkProfile) -> Result<Self, ProfileError> {
        profile.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(profile.rng_seed);
        Ok(Self {
            profile,
            rng,
            pipe_free_at: 0.0,
            last_arrival: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            admitted: 0,
            trace: Vec::new(),
            stats: LinkStats::default(),
        })
    }

    pub fn profile(&self) -> &LinkProfile {
        &self.profile
    }

    /// Offers raw frame bytes to the link at time `now` (non-decreasing).
    pub fn send(&mut self, now: f64, bytes: Vec<u8>) {
        let start = now.max(self.pipe_free_at);
        let serialized_at = start + self.profile.serialization_time(bytes.len());
        self.pipe_free_at = serialized_at;
        // draws happen for every frame so outages do not shift later randomness
        let lost = self.rng.random::<f64>() < self.profile.loss;
        let jitter = if self.profile.jitter_s > 0.0 { self.rng.random_range(-self.profile.jitter_s..=self.profile.jitter_s) } else { 0.0 };
        let channel = bytes.get(2).copied().unwrap_or(u8::MAX);
        let mut arrival = serialized_at + self.profile.rtt_s / 2.0 + jitter;
        let fate = if self.profile.overlaps_outage(start, arrival) {
            Fate::Outage
        } else if lost {
            Fate::Lost
        } else {
            let last = self.last_arrival.entry(channel).or_insert(0.0);
            arrival = arrival.max(*last);
            *last = arrival;
            Fate::Delivered { at: arrival }
        };
        self.stats.frames_sent += 1;
        self.stats.bytes_sent += bytes.len() as u64;
        match fate {
            Fate::Delivered { at } => {
                self.in_flight.insert((time_key(at), self.admitted), bytes.clone());
            }
            Fate::Lost => self.stats.frames_lost += 1,
            Fate::Outage => self.stats.frames_blacked_out += 1,
        }
        self.admitted += 1;
        self.trace.push(TraceEntry { sent_at: now, serialized_at, channel, len: bytes.len(), fate });
    }

    /// Frames whose arrival time is at or before `now`, in arrival order.
    pub fn poll(&mut self, now: f64) -> Vec<(f64, Vec<u8>)> {
        let mut out = Vec::new();
        while let Some(entry) = self.in_flight.first_entry() {
            let at = f64::from_bits(entry.key().0);
            if at > now {
                break;
            }
            let bytes = entry.remove();
            self.stats.frames_delivered += 1;
            self.stats.bytes_delivered += bytes.len() as u64;
            out.push((at, bytes));
        }
        out
    }

    /// Earliest pending arrival.
    pub fn next_arrival(&self) -> Option<f64> {
        self.in_flight.keys().next().map(|(k, _)| f64::from_bits(*k))
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }
}
