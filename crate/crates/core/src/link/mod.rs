//! Ship-to-shore link: frame codec, ARQ, budgeted scheduling and emulation.

pub mod arq;
pub mod emulator;
mod endpoint;
pub mod frame;
pub mod scheduler;

pub use arq::{ArqConfig, MessageId, ReliableReceiver, ReliableSender, SendError, SenderEvent};
pub use emulator::{Fate, LinkEmulator, LinkProfile, LinkStats, ProfileError, TraceEntry};
pub use endpoint::{Duplex, Endpoint, EndpointConfig, Inbound};
pub use frame::{decode_frame, encode_frame, Channel, Frame, FrameError, StreamDecoder, MAX_FRAME_LEN, MAX_PAYLOAD};
pub use scheduler::{max_window_bits, Scheduler, TelemetrySlots, TxQueue};
