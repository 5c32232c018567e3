//! Pass/fail checks, JSON reports and run manifests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::util::fnv1a64;

/// One verified property with its worst observed case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub worst_case: Value,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, worst_case: Value) -> Self {
        Check { name: name.into(), pass, worst_case }
    }
}

/// Named constants, witnesses and checks produced by one operation. Keys
/// are kept sorted so that serialization is deterministic.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Report {
    #[serde(flatten)]
    pub values: Map<String, Value>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.values.insert(key.to_string(), v);
        self
    }

    pub fn check(&mut self, check: Check) -> &mut Self {
        self.checks.push(check);
        self
    }

    pub fn extend_checks(&mut self, checks: impl IntoIterator<Item = Check>) -> &mut Self {
        self.checks.extend(checks);
        self
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Hex FNV-1a digest of an input file's bytes.
pub fn digest_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

/// Provenance of a run. The wall time is the only field that varies
/// between otherwise identical runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: Vec<String>,
    pub seed: u64,
    pub input_digests: BTreeMap<String, String>,
    pub wall_time_seconds: f64,
}

impl RunManifest {
    pub fn new(command: Vec<String>, seed: u64) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            seed,
            input_digests: BTreeMap::new(),
            wall_time_seconds: 0.0,
        }
    }

    pub fn add_input(&mut self, name: &str, bytes: &[u8]) {
        self.input_digests.insert(name.to_string(), digest_hex(bytes));
    }
}
