use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// One line of the mission log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub timestamp: f64,
    pub operator_id: Option<String>,
    pub event: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogError {
    #[error("record {index}: {reason}")]
    CorruptLog { index: usize, reason: String },
}

/// Append-only event history, serialized as line-delimited JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, timestamp: f64, operator_id: Option<&str>, event: &str, payload: Value) -> &LogRecord {
        let seq = self.records.len() as u64;
        self.records.push(LogRecord { seq, timestamp, operator_id: operator_id.map(str::to_string), event: event.to_string(), payload });
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn since(&self, cursor: usize) -> &[LogRecord] {
        &self.records[cursor.min(self.records.len())..]
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses a log, checking that sequence numbers are contiguous from zero.
    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut records = Vec::new();
        for (index, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: LogRecord =
                serde_json::from_str(line).map_err(|e| LogError::CorruptLog { index, reason: e.to_string() })?;
            if r.seq != records.len() as u64 {
                return Err(LogError::CorruptLog { index, reason: format!("expected seq {}, found {}", records.len(), r.seq) });
            }
            records.push(r);
        }
        Ok(Self { records })
    }

    /// SHA-256 over the JSONL serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut log = EventLog::new();
        log.append(0.5, Some("a"), "x", serde_json::json!({"k": 1}));
        log.append(1.0, None, "y", Value::Null);
        assert_eq!(EventLog::from_jsonl(&log.to_jsonl()).unwrap(), log);
    }

    #[test]
    fn truncation_names_record() {
        let mut log = EventLog::new();
        log.append(0.0, None, "x", Value::Null);
        log.append(1.0, None, "y", Value::Null);
        let text = log.to_jsonl();
        let cut = &text[..text.len() - 10];
        assert!(matches!(EventLog::from_jsonl(cut), Err(LogError::CorruptLog { index: 1, .. })));
        assert!(EventLog::from_jsonl("").unwrap().is_empty());
    }
}
