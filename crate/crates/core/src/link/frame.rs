//! Wire frame codec.
//!
//! ```text
//! offset  size  field
//! 0       1     magic 0xA5
//! 1       1     version
//! 2       1     channel (0 CMD_RELIABLE, 1 TELEMETRY, 2 BULK)
//! 3       1     flags (bit0 ACK, bit1 FIN, others zero)
//! 4       2     seq
//! 6       2     ack
//! 8       2     len
//! 10      len   payload
//! 10+len  4     crc32 (IEEE) over bytes 0..10+len
//! ```
//! All integers are big-endian.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::{Reader, Writer};

pub const MAGIC: u8 = 0xA5;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
pub const CRC_LEN: usize = 4;
pub const MAX_FRAME_LEN: usize = 1024;
pub const MAX_PAYLOAD: usize = MAX_FRAME_LEN - HEADER_LEN - CRC_LEN;

pub const FLAG_ACK: u8 = 0b01;
pub const FLAG_FIN: u8 = 0b10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    CmdReliable = 0,
    Telemetry = 1,
    Bulk = 2,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::CmdReliable, Channel::Telemetry, Channel::Bulk];

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Channel::CmdReliable),
            1 => Some(Channel::Telemetry),
            2 => Some(Channel::Bulk),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub channel: Channel,
    pub ack_flag: bool,
    pub fin: bool,
    pub seq: u16,
    pub ack: u16,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("crc mismatch (computed {computed:#010x}, carried {carried:#010x})")]
    BadCrc { computed: u32, carried: u32 },
    #[error("truncated frame: {have} bytes, need {need}")]
    TruncatedFrame { have: usize, need: usize },
    #[error("length field says {declared} payload bytes but frame carries {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown channel {0}")]
    UnknownChannel(u8),
    #[error("reserved flag bits set: {0:#04x}")]
    ReservedFlags(u8),
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_LEN}-byte limit")]
    FrameTooLarge(usize),
}

impl Frame {
    pub fn data(channel: Channel, seq: u16, payload: Vec<u8>) -> Self {
        Self { channel, ack_flag: false, fin: false, seq, ack: 0, payload }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + CRC_LEN
    }

    fn flags(&self) -> u8 {
        (self.ack_flag as u8) * FLAG_ACK | (self.fin as u8) * FLAG_FIN
    }
}

/// Serializes a frame. Panics if the payload exceeds [`MAX_PAYLOAD`].
pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    assert!(frame.payload.len() <= MAX_PAYLOAD, "payload of {} bytes exceeds {MAX_PAYLOAD}", frame.payload.len());
    let mut w = Writer::with_capacity(frame.encoded_len());
    w.u8(MAGIC)
        .u8(VERSION)
        .u8(frame.channel as u8)
        .u8(frame.flags())
        .u16(frame.seq)
        .u16(frame.ack)
        .u16(frame.payload.len() as u16)
        .bytes(&frame.payload);
    let mut bytes = w.finish();
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_be_bytes());
    bytes
}

/// Parses exactly one frame occupying all of `bytes`.
///
/// The CRC is checked before any header field other than the magic byte, so a
/// corrupted frame reports `BadMagic` or `BadCrc` rather than a field error.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    let n = bytes.len();
    if n == 0 {
        return Err(FrameError::TruncatedFrame { have: 0, need: HEADER_LEN + CRC_LEN });
    }
    if bytes[0] != MAGIC {
        return Err(FrameError::BadMagic(bytes[0]));
    }
    if n < HEADER_LEN + CRC_LEN {
        return Err(FrameError::TruncatedFrame { have: n, need: HEADER_LEN + CRC_LEN });
    }
    if n > MAX_FRAME_LEN {
        return Err(FrameError::FrameTooLarge(n));
    }
    let (body, tail) = bytes.split_at(n - CRC_LEN);
    let carried = u32::from_be_bytes(tail.try_into().expect("4-byte tail"));
    let computed = crc32fast::hash(body);
    if computed != carried {
        return Err(FrameError::BadCrc { computed, carried });
    }
    let mut r = Reader::new(body);
    let truncated = |_| FrameError::TruncatedFrame { have: n, need: HEADER_LEN + CRC_LEN };
    let _magic = r.u8().map_err(truncated)?;
    let version = r.u8().map_err(truncated)?;
    let channel = r.u8().map_err(truncated)?;
    let flags = r.u8().map_err(truncated)?;
    let seq = r.u16().map_err(truncated)?;
    let ack = r.u16().map_err(truncated)?;
    let len = r.u16().map_err(truncated)? as usize;
    if version != VERSION {
        return Err(FrameError::UnsupportedVersion(version));
    }
    let channel = Channel::from_byte(channel).ok_or(FrameError::UnknownChannel(channel))?;
    if flags & !(FLAG_ACK | FLAG_FIN) != 0 {
        return Err(FrameError::ReservedFlags(flags));
    }
    let actual = r.remaining();
    if len != actual {
        return Err(FrameError::LengthMismatch { declared: len, actual });
    }
    Ok(Frame { channel, ack_flag: flags & FLAG_ACK != 0, fin: flags & FLAG_FIN != 0, seq, ack, payload: r.take(len).map_err(truncated)?.to_vec() })
}

/// Byte length of the frame at the start of a stream buffer, once enough of
/// the header has arrived to tell.
pub fn frame_boundary(buf: &[u8]) -> Result<Option<usize>, FrameError> {
    match buf.first() {
        None => return Ok(None),
        Some(&b) if b != MAGIC => return Err(FrameError::BadMagic(b)),
        _ => {}
    }
    if buf.len() < HEADER_LEN {
        return Ok(None);
    }
    let total = HEADER_LEN + u16::from_be_bytes([buf[8], buf[9]]) as usize + CRC_LEN;
    if total > MAX_FRAME_LEN {
        return Err(FrameError::FrameTooLarge(total));
    }
    Ok((buf.len() >= total).then_some(total))
}

/// Incremental splitter for frames carried over a byte stream.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete raw frame, if any. Errors leave the stream unusable.
    pub fn next_frame(&mut self) -> Result<Option<Vec<u8>>, FrameError> {
        match frame_boundary(&self.buf)? {
            Some(n) => Ok(Some(self.buf.drain(..n).collect())),
            None => Ok(None),
        }
    }
}
