//! Writes a harness mission log to JSONL, reads it back and replays it.

use remanip::executive::EventLog;
use remanip::link::LinkProfile;
use remanip::service::{replay, run_script, MissionScript};
use remanip::sim::Worksite;

fn main() {
    let profile = LinkProfile::from_json(LinkProfile::LOSSLESS_JSON).unwrap();
    let out = run_script(&MissionScript::shipped(), &profile, &Worksite::shipped()).unwrap();
    let text = out.log.to_jsonl();
    println!("log: {} records, {} bytes", out.log.len(), text.len());
    let parsed = EventLog::from_jsonl(&text).unwrap();
    let r = replay(&parsed).unwrap();
    println!("original {}\nreplayed {}\nidentical {}", r.original_hash, r.replayed_hash, r.identical);

    let truncated = &text[..text.len() / 2];
    match EventLog::from_jsonl(truncated) {
        Err(e) => println!("truncated log: {e}"),
        Ok(_) => println!("truncated log parsed"),
    }
}
