//! Runs the shipped XRF + push-core script over the degraded link profile
//! and prints the metrics table, then replays the log.

use std::path::Path;

use remanip::service::{harness::run_script, replay, MissionScript};

fn main() {
    let script = MissionScript::shipped();
    let (profile, worksite) = script.resolve(Path::new(".")).expect("shipped references resolve");
    let out = run_script(&script, &profile, &worksite).expect("mission runs");
    print!("{}", out.report.table());
    let r = replay(&out.log).expect("log replays");
    println!("replay: {} records, {} inputs, identical {}", r.records, r.inputs, r.identical);
}
