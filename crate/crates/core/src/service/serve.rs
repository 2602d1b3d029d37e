//! Live mission over TCP. Each connection carries link frames in both
//! directions and passes through its own pair of link emulators, so a
//! console sees the same degraded link the harness does.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::mission::{MissionCore, OperatorSession};
use super::protocol::{decode_uplink, encode_downlink, ClientMessage, TOPIC_STATUS};
use super::ServiceError;
use crate::link::{Channel, Endpoint, EndpointConfig, LinkEmulator, LinkProfile, StreamDecoder};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub profile: LinkProfile,
    /// Stop after this much mission time; `None` runs until shutdown.
    pub max_duration_s: Option<f64>,
    /// Sleep between ticks so the mission clock tracks wall time.
    pub real_time: bool,
}

enum ConnEvent {
    Opened(u64, TcpStream),
    Bytes(u64, Vec<u8>),
    Closed(u64),
}

struct Connection {
    stream: TcpStream,
    decoder: StreamDecoder,
    uplink: LinkEmulator,
    downlink: LinkEmulator,
    ship: Endpoint,
    operator: Option<String>,
    closed: bool,
}

fn reader(id: u64, mut stream: TcpStream, tx: Sender<ConnEvent>) {
    let mut buf = [0u8; 4096];
    loop {
        match stream.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                if tx.send(ConnEvent::Bytes(id, buf[..n].to_vec())).is_err() {
                    return;
                }
            }
        }
    }
    let _ = tx.send(ConnEvent::Closed(id));
}

/// Accepts connections on `listener` and runs `core` until `shutdown` is set
/// or the configured duration elapses. Returns the finished core.
pub fn serve(listener: TcpListener, mut core: MissionCore, cfg: ServeConfig, shutdown: Arc<AtomicBool>) -> Result<MissionCore, ServiceError> {
    let (tx, rx): (Sender<ConnEvent>, Receiver<ConnEvent>) = mpsc::channel();
    listener.set_nonblocking(true)?;
    {
        let tx = tx.clone();
        let shutdown = shutdown.clone();
        thread::spawn(move || {
            let mut next_id = 0u64;
            while !shutdown.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let _ = stream.set_nonblocking(false);
                        let id = next_id;
                        next_id += 1;
                        let Ok(read_half) = stream.try_clone() else { continue };
                        if tx.send(ConnEvent::Opened(id, stream)).is_err() {
                            return;
                        }
                        let tx = tx.clone();
                        thread::spawn(move || reader(id, read_half, tx));
                    }
                    Err(_) => thread::sleep(Duration::from_millis(10)),
                }
            }
        });
    }
    drop(tx);

    let tick = core.config().tick_s;
    let mut conns: std::collections::BTreeMap<u64, Connection> = Default::default();
    let started = Instant::now();
    let mut conn_seed = 0u64;
    while !shutdown.load(Ordering::Relaxed) {
        let now = core.clock();
        if cfg.max_duration_s.is_some_and(|m| now >= m) {
            break;
        }
        while let Ok(ev) = rx.try_recv() {
            match ev {
                ConnEvent::Opened(id, stream) => {
                    conn_seed += 1;
                    let up = cfg.profile.clone().with_seed(cfg.profile.rng_seed.wrapping_add(2 * conn_seed));
                    let down = cfg.profile.clone().with_seed(cfg.profile.rng_seed.wrapping_add(2 * conn_seed + 1));
                    conns.insert(
                        id,
                        Connection {
                            stream,
                            decoder: StreamDecoder::new(),
                            uplink: LinkEmulator::new(up)?,
                            downlink: LinkEmulator::new(down)?,
                            ship: Endpoint::new(EndpointConfig::for_profile(&cfg.profile)),
                            operator: None,
                            closed: false,
                        },
                    );
                }
                ConnEvent::Bytes(id, bytes) => {
                    if let Some(c) = conns.get_mut(&id) {
                        c.decoder.push(&bytes);
                        while let Ok(Some(frame)) = c.decoder.next_frame() {
                            c.uplink.send(now, frame);
                        }
                    }
                }
                ConnEvent::Closed(id) => {
                    if let Some(c) = conns.get_mut(&id) {
                        c.closed = true;
                    }
                }
            }
        }

        let ids: Vec<u64> = conns.keys().copied().collect();
        for id in ids {
            let c = conns.get_mut(&id).expect("listed");
            let mut inbound = Vec::new();
            for (_, frame) in c.uplink.poll(now) {
                inbound.extend(c.ship.receive(now, &frame).unwrap_or_default());
            }
            for item in inbound {
                let Ok(msg) = decode_uplink(&item) else { continue };
                let c = conns.get_mut(&id).expect("listed");
                match (&c.operator, msg) {
                    (None, ClientMessage::Hello { operator_id, display_name, role }) => {
                        let session = OperatorSession { operator_id: operator_id.clone(), display_name, role, connected_at: now };
                        match core.attach(session) {
                            Ok(()) => c.operator = Some(operator_id),
                            Err(e) => {
                                let reply = super::protocol::ServerMessage::Rejected {
                                    request: "hello".into(),
                                    kind: "duplicate_operator".into(),
                                    message: e.to_string(),
                                    holder: None,
                                };
                                let (_, bytes) = encode_downlink(&super::protocol::Downlink::Message(reply));
                                let _ = c.ship.send_command(&bytes);
                            }
                        }
                    }
                    (Some(op), ClientMessage::Bye) => {
                        let op = op.clone();
                        c.operator = None;
                        core.detach(&op)?;
                    }
                    (Some(op), msg) => {
                        let op = op.clone();
                        core.handle(&op, msg)?;
                    }
                    (None, _) => {}
                }
            }
            let c = conns.get_mut(&id).expect("listed");
            if c.closed {
                if let Some(op) = c.operator.take() {
                    core.detach(&op)?;
                }
            }
        }
        conns.retain(|_, c| !c.closed);

        core.tick();
        let outbox = core.drain_outbox();
        for c in conns.values_mut() {
            let Some(op) = &c.operator else { continue };
            for (to, d) in &outbox {
                if to == op {
                    let (channel, bytes) = encode_downlink(d);
                    let _ = match channel {
                        Channel::CmdReliable => c.ship.send_command(&bytes).map(|_| ()),
                        Channel::Bulk => c.ship.send_bulk(&bytes).map(|_| ()),
                        Channel::Telemetry => c.ship.publish_telemetry(TOPIC_STATUS, &bytes),
                    };
                }
            }
        }
        for c in conns.values_mut() {
            for frame in c.ship.poll_transmit(now) {
                c.downlink.send(now, frame);
            }
            for (_, frame) in c.downlink.poll(now) {
                if c.stream.write_all(&frame).is_err() {
                    c.closed = true;
                }
            }
        }
        if cfg.real_time {
            let due = started + Duration::from_secs_f64(core.clock());
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        let _ = tick;
    }
    shutdown.store(true, Ordering::Relaxed);
    core.finish();
    Ok(core)
}

/// Binds `addr` and serves on a background thread.
pub fn spawn(addr: SocketAddr, core: MissionCore, cfg: ServeConfig) -> Result<(SocketAddr, Arc<AtomicBool>, thread::JoinHandle<Result<MissionCore, ServiceError>>), ServiceError> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    let handle = thread::spawn(move || serve(listener, core, cfg, flag));
    Ok((local, shutdown, handle))
}
