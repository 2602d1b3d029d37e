//! Starts `serve` on a local port and connects a minimal console: it says
//! hello, takes the control token and prints what the ship sends back.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use remanip::kinematics::KinematicChain;
use remanip::link::{Endpoint, EndpointConfig, LinkProfile, StreamDecoder};
use remanip::service::protocol::{decode_downlink, encode_uplink};
use remanip::service::serve::{spawn, ServeConfig};
use remanip::service::{ClientMessage, Downlink, MissionConfig, MissionCore, Role};
use remanip::sim::Worksite;

fn main() {
    let profile = LinkProfile::ideal(64_000.0);
    let core = MissionCore::start(MissionConfig::new("demo", Worksite::shipped(), KinematicChain::reference_arm(), 0)).unwrap();
    let cfg = ServeConfig { profile: profile.clone(), max_duration_s: Some(5.0), real_time: true };
    let (addr, _, handle) = spawn("127.0.0.1:0".parse().unwrap(), core, cfg).unwrap();

    let mut stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_millis(5))).unwrap();
    let mut ep = Endpoint::new(EndpointConfig::for_profile(&profile));
    let mut decoder = StreamDecoder::new();
    for m in [ClientMessage::Hello { operator_id: "console".into(), display_name: "Console".into(), role: Role::Commander }, ClientMessage::AcquireToken] {
        ep.send_command(&encode_uplink(&m).unwrap()).unwrap();
    }
    let start = Instant::now();
    let mut buf = [0u8; 8192];
    while start.elapsed() < Duration::from_secs(3) {
        let now = start.elapsed().as_secs_f64();
        for frame in ep.poll_transmit(now) {
            stream.write_all(&frame).unwrap();
        }
        if let Ok(n) = stream.read(&mut buf) {
            decoder.push(&buf[..n]);
        }
        while let Ok(Some(frame)) = decoder.next_frame() {
            for inbound in ep.receive(now, &frame).unwrap() {
                match decode_downlink(&inbound).unwrap() {
                    Downlink::Message(m) => println!("{now:6.2}  message {}", serde_json::to_string(&m).unwrap()),
                    Downlink::Scene(d) => println!("{now:6.2}  scene delta to revision {}", d.new_revision),
                    Downlink::Status(s) => println!("{now:6.2}  status phase {:?} tool {:.3?}", s.phase, s.tool.position.as_slice()),
                }
            }
        }
    }
    drop(stream);
    let core = handle.join().unwrap().unwrap();
    println!("ship log has {} records", core.history().len());
}
