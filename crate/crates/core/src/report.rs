//! Versioned JSON reports written by every command.

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const TOOL: &str = "metastab";

/// The published report schema.
pub const SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputInfo {
    /// `"spec"` or `"model"`.
    pub kind: String,
    /// Spec path or model string as given.
    pub source: String,
    /// Separate partition file, if any.
    pub partition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: String,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input: InputInfo,
    /// SHA-256 of the canonical chain-spec JSON of the input.
    pub fingerprint: String,
    pub sections: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str, input: InputInfo, fingerprint: String) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            input,
            fingerprint,
            sections: Map::new(),
        }
    }

    pub fn section(&mut self, name: &str, value: Value) {
        self.sections.insert(name.into(), value);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }
}

/// Lower-case hex SHA-256.
pub fn fingerprint(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_hex_sha256() {
        assert_eq!(
            fingerprint(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn schema_is_json() {
        let v: Value = serde_json::from_str(SCHEMA).unwrap();
        assert_eq!(v["properties"]["schema_version"]["const"], SCHEMA_VERSION);
    }
}
