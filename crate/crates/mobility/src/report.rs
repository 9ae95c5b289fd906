//! Report serialization: versioned JSON envelopes and CSV tables.
//!
//! Every number in a report is reproducible from (config, seed); the only
//! run-dependent field is the `timestamp` header key, which consumers strip
//! when comparing runs byte for byte.

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// Versioned envelope around a report payload.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport<T> {
    pub schema_version: u32,
    /// Subcommand or experiment kind.
    pub kind: String,
    /// The only non-reproducible field: seconds since the Unix epoch.
    pub timestamp: u64,
    /// Canonical echo of the configuration that produced the report.
    pub config: String,
    pub data: T,
}

impl<T: Serialize> RunReport<T> {
    pub fn new(kind: &str, config: String, data: T) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunReport {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            timestamp,
            config,
            data,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| crate::error::Error::data(format!("serialization failed: {e}")))
    }
}

/// Strips the timestamp line from a rendered JSON report, for byte-identity
/// comparisons between runs.
pub fn strip_timestamp(json: &str) -> String {
    json.lines()
        .filter(|line| !line.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Writes a CSV table: header plus formatted rows.
pub fn write_csv<W: std::io::Write>(mut w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Canonical float formatting for CSV (shortest round-trip form).
pub fn fmt(v: f64) -> String {
    format!("{v}")
}
