//! Per-step telemetry records and sinks.

use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

/// One line per step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub step_id: String,
    pub corpus_version: String,
    pub selected_instructions: Vec<String>,
    pub selected_tools: Vec<String>,
    /// Sufficiency score of every issued prompt, in order.
    pub confidences: Vec<f64>,
    pub fallback_taken: bool,
    pub cache_hit: bool,
    pub tokens_spent: u64,
    pub error: Option<String>,
}

pub trait TelemetrySink: Send + Sync {
    fn record(&self, record: &TelemetryRecord);
}

/// Keeps records in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    records: Mutex<Vec<TelemetryRecord>>,
}

impl MemorySink {
    pub fn records(&self) -> Vec<TelemetryRecord> {
        self.records.lock().expect("sink lock").clone()
    }
}

impl TelemetrySink for MemorySink {
    fn record(&self, record: &TelemetryRecord) {
        self.records.lock().expect("sink lock").push(record.clone());
    }
}

/// Writes JSON lines to any writer.
pub struct JsonlSink<W: Write + Send> {
    out: Mutex<W>,
}

impl<W: Write + Send> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        JsonlSink { out: Mutex::new(out) }
    }

    pub fn into_inner(self) -> W {
        self.out.into_inner().expect("sink lock")
    }
}

impl<W: Write + Send> TelemetrySink for JsonlSink<W> {
    fn record(&self, record: &TelemetryRecord) {
        let mut out = self.out.lock().expect("sink lock");
        let line = serde_json::to_string(record).expect("record serializes");
        if let Err(e) = writeln!(out, "{line}") {
            tracing::warn!(error = %e, "telemetry write failed");
        }
    }
}
