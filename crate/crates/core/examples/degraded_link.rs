//! Reliable commands and a fragmented bulk message over the default
//! degraded profile: 64 kbit/s, 1.5 s RTT, 5% loss and a 20 s outage.

use remanip::link::{Duplex, Inbound, LinkProfile};

fn main() {
    let profile = LinkProfile::default_mission();
    let mut link = Duplex::new(&profile).unwrap();
    for i in 0..50u32 {
        link.a.send_command(format!("command {i}").as_bytes()).unwrap();
    }
    link.b.send_bulk(&vec![0x5A; 20_000]).unwrap();
    let (mut commands, mut bulk) = (Vec::new(), 0);
    let mut t = 0.0;
    while t < 200.0 && (commands.len() < 50 || bulk == 0) {
        link.b.publish_telemetry(1, &[0; 64]).unwrap();
        let (at_a, at_b) = link.step(t);
        for m in at_b {
            if let Inbound::Command(p) = m {
                commands.push(String::from_utf8(p).unwrap());
            }
        }
        bulk += at_a.iter().filter(|m| matches!(m, Inbound::Bulk(_))).count();
        t += 0.01;
    }
    let stats = link.a_to_b.stats();
    println!("{} commands in order by t = {t:.1} s; last {:?}", commands.len(), commands.last());
    println!("bulk messages delivered: {bulk}");
    println!("uplink frames sent {}, lost {}, blacked out {}; retransmissions {}", stats.frames_sent, stats.frames_lost, stats.frames_blacked_out, link.a.retransmissions());
}
