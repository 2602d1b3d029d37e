//! Parses operator utterances, fuses a pointing gesture and shows the
//! diagnostics for malformed commands.

use nalgebra::Vector3;
use remanip::command::corpus::Corpus;
use remanip::command::{parse_utterance, resolve_referents, GestureEvent, Utterance};
use remanip::sim::Worksite;

fn main() {
    let scene = Worksite::shipped().scene().unwrap();
    let gesture = GestureEvent::pointing(1, Vector3::new(0.6, 0.0, 0.2), Vector3::new(0.35, 0.30, -0.64), 10.0, "pilot").unwrap();
    for text in ["take an xrf measurement there for 30 seconds", "go to marker 1", "set tube voltage to 40 kV", "take the xrf banana"] {
        match parse_utterance(&Utterance::new(text, 10.5, "pilot")) {
            Ok(goal) => match resolve_referents(&goal, &scene, std::slice::from_ref(&gesture)) {
                Ok(g) => println!("{text:?}\n  -> {}", serde_json::to_string(&g.goal).unwrap()),
                Err(e) => println!("{text:?}\n  -> unresolved ({}): {e}", e.kind()),
            },
            Err(d) => println!("{text:?}\n  -> diagnostic: {d}"),
        }
    }
    let report = Corpus::shipped().run();
    println!("shipped corpus: {} positive, {} negative, {} failures", report.positives, report.negatives, report.failures.len());
}
