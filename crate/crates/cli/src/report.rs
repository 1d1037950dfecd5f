use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const REPORT_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub instance_digest: String,
    pub parameters: serde_json::Value,
    pub results: serde_json::Value,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub stats: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<u128>,
}

impl RunReport {
    pub fn new(command: &'static str, bytes: &[u8]) -> Self {
        RunReport {
            schema_version: REPORT_VERSION,
            command,
            instance_digest: digest(bytes),
            parameters: serde_json::Value::Null,
            results: serde_json::Value::Null,
            stats: serde_json::Value::Null,
            timing_ms: None,
        }
    }

    pub fn timed(mut self, on: bool, elapsed: Duration) -> Self {
        self.timing_ms = on.then_some(elapsed.as_millis());
        self
    }
}

/// Lowercase hex SHA-256 of the instance file bytes.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
