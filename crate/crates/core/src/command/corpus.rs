//! Annotated utterance corpus: one tab-separated record per line with the
//! utterance, a gesture fixture name (or `-`), and the expected outcome.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_utterance, resolve_referents, GestureEvent, Goal, Utterance};
use crate::scene::{SceneFixture, SceneGraph};

pub const CORPUS_OPERATOR: &str = "op1";
const POINT_TOLERANCE: f64 = 1e-6;

/// Gestures available to one corpus line plus the utterance time to fuse at.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GestureFixture {
    pub utterance_time: f64,
    pub gestures: Vec<GestureEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expectation {
    Goal { parsed: Goal, resolved: Result<Goal, String> },
    Diagnostic { position: usize, expected: Option<Vec<String>> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpectationSpec {
    parsed: Option<Goal>,
    resolved: Option<Goal>,
    resolve_error: Option<String>,
    diagnostic: Option<DiagnosticSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnosticSpec {
    position: usize,
    expected: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord {
    /// 1-based line in the corpus file.
    pub line: usize,
    pub utterance: String,
    pub gesture: Option<String>,
    pub expected: Expectation,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("corpus line {line}: {message}")]
pub struct CorpusError {
    pub line: usize,
    pub message: String,
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let err = |message: String| CorpusError { line, message };
        let cols: Vec<&str> = raw.split('\t').collect();
        let [utterance, gesture, expected] = cols.as_slice() else {
            return Err(err(format!("expected 3 tab-separated columns, found {}", cols.len())));
        };
        let spec: ExpectationSpec = serde_json::from_str(expected).map_err(|e| err(e.to_string()))?;
        let expected = match spec {
            ExpectationSpec { parsed: Some(parsed), resolved: Some(r), resolve_error: None, diagnostic: None } => Expectation::Goal { parsed, resolved: Ok(r) },
            ExpectationSpec { parsed: Some(parsed), resolved: None, resolve_error: Some(e), diagnostic: None } => Expectation::Goal { parsed, resolved: Err(e) },
            ExpectationSpec { parsed: None, resolved: None, resolve_error: None, diagnostic: Some(d) } => {
                Expectation::Diagnostic { position: d.position, expected: d.expected }
            }
            _ => return Err(err("expected either parsed with resolved/resolve_error, or diagnostic".into())),
        };
        let gesture = (*gesture != "-").then(|| gesture.to_string());
        out.push(CorpusRecord { line, utterance: utterance.to_string(), gesture, expected });
    }
    Ok(out)
}

/// Structural JSON equality with numbers compared to `tol`.
fn json_close(a: &Value, b: &Value, tol: f64) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => (x - y).abs() <= tol,
            _ => false,
        },
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| json_close(p, q, tol)),
        (Value::Object(x), Value::Object(y)) => x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| json_close(v, w, tol))),
        _ => a == b,
    }
}

fn goals_close(a: &Goal, b: &Goal) -> bool {
    match (serde_json::to_value(a), serde_json::to_value(b)) {
        (Ok(x), Ok(y)) => json_close(&x, &y, POINT_TOLERANCE),
        _ => false,
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub records: Vec<CorpusRecord>,
    pub scene: SceneGraph,
    pub fixtures: BTreeMap<String, GestureFixture>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusReport {
    pub positives: usize,
    pub negatives: usize,
    /// Resolution error kinds exercised by passing records.
    pub resolve_errors: BTreeMap<String, usize>,
    pub failures: Vec<(usize, String)>,
}

impl CorpusReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl Corpus {
    pub fn load(corpus: &str, scene: &str, gestures: &str) -> Result<Self, CorpusError> {
        let records = parse_corpus(corpus)?;
        let bad = |what: &str, e: String| CorpusError { line: 0, message: format!("{what}: {e}") };
        let fixture: SceneFixture = serde_json::from_str(scene).map_err(|e| bad("scene", e.to_string()))?;
        let scene = fixture.build().map_err(|e| bad("scene", e.to_string()))?;
        let fixtures: BTreeMap<String, GestureFixture> = serde_json::from_str(gestures).map_err(|e| bad("gestures", e.to_string()))?;
        for r in &records {
            if let Some(g) = &r.gesture {
                if !fixtures.contains_key(g) {
                    return Err(CorpusError { line: r.line, message: format!("unknown gesture fixture '{g}'") });
                }
            }
        }
        Ok(Self { records, scene, fixtures })
    }

    /// The corpus, scene and gestures shipped with the crate.
    pub fn shipped() -> Self {
        Self::load(
            include_str!("../../fixtures/commands/corpus.tsv"),
            include_str!("../../fixtures/commands/scene.json"),
            include_str!("../../fixtures/commands/gestures.json"),
        )
        .expect("shipped command corpus is well formed")
    }

    /// Runs one record; `Err` describes the mismatch.
    pub fn check(&self, record: &CorpusRecord) -> Result<Option<String>, String> {
        let (time, gestures) = match &record.gesture {
            Some(name) => {
                let f = &self.fixtures[name];
                (f.utterance_time, f.gestures.as_slice())
            }
            None => (0.0, &[][..]),
        };
        let parsed = parse_utterance(&Utterance::new(&record.utterance, time, CORPUS_OPERATOR));
        match (&record.expected, parsed) {
            (Expectation::Goal { parsed: want, resolved }, Ok(goal)) => {
                if &goal.goal != want {
                    return Err(format!("parsed {:?}, expected {:?}", goal.goal, want));
                }
                match (resolved, resolve_referents(&goal, &self.scene, gestures)) {
                    (Ok(want), Ok(got)) if goals_close(&got.goal, want) => Ok(None),
                    (Err(kind), Err(e)) if e.kind() == kind => Ok(Some(e.kind().to_string())),
                    (want, got) => Err(format!("resolved {:?}, expected {:?}", got.map(|g| g.goal), want)),
                }
            }
            (Expectation::Diagnostic { position, expected }, Err(d)) => {
                if d.position != *position {
                    return Err(format!("diagnostic at {}, expected {position}: {d}", d.position));
                }
                if let Some(exp) = expected {
                    if &d.expected != exp {
                        return Err(format!("diagnostic expects {:?}, annotated {exp:?}", d.expected));
                    }
                }
                Ok(None)
            }
            (Expectation::Goal { .. }, Err(d)) => Err(format!("unexpected diagnostic: {d}")),
            (Expectation::Diagnostic { .. }, Ok(g)) => Err(format!("expected a diagnostic, parsed {:?}", g.goal)),
        }
    }

    pub fn run(&self) -> CorpusReport {
        let mut report = CorpusReport::default();
        for r in &self.records {
            match &r.expected {
                Expectation::Goal { .. } => report.positives += 1,
                Expectation::Diagnostic { .. } => report.negatives += 1,
            }
            match self.check(r) {
                Ok(Some(kind)) => *report.resolve_errors.entry(kind).or_default() += 1,
                Ok(None) => {}
                Err(why) => report.failures.push((r.line, why)),
            }
        }
        report
    }
}
