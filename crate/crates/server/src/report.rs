//! Load-run metrics and their JSON / text renderings.
//!
//! The JSON schema is the serde shape of [`MetricsReport`]. Latency fields
//! are `null` when a run produced no samples.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use veld_core::StateDigest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub samples: usize,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl LatencySummary {
    /// Nearest-rank percentiles; `None` for an empty sample.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            samples: sorted.len(),
            p50: nearest_rank(&sorted, 50.0),
            p95: nearest_rank(&sorted, 95.0),
            p99: nearest_rank(&sorted, 99.0),
            max: *sorted.last().expect("non-empty"),
        })
    }
}

/// The smallest sample with at least `p` percent of the data at or below it.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// Every client digest equals the server digest.
    pub converged: bool,
    /// The server's digest of the room after quiescence.
    pub final_digest: StateDigest,
    pub distinct_client_digests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_clients: usize,
    pub n_instructors: usize,
    pub actions_requested: usize,
    pub accepted: u64,
    pub rejected: u64,
    pub delivered_events: u64,
    /// `accepted · (n_clients − 1)`, what fan-out should deliver.
    pub expected_events: u64,
    pub acks: u64,
    pub presence_messages: u64,
    pub total_messages: u64,
    pub protocol_errors: u64,
    pub action_latency_ms: Option<LatencySummary>,
    pub convergence: Convergence,
    pub msgs_per_second: f64,
    pub elapsed_s: f64,
    pub max_seq_gap: u64,
    pub per_client_max_gap: BTreeMap<String, u64>,
}

impl MetricsReport {
    pub fn fan_out_exact(&self) -> bool {
        self.delivered_events == self.expected_events && self.acks == self.accepted
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |f: &mut fmt::Formatter<'_>, k: &str, v: String| writeln!(f, "{k:<22} {v}");
        row(f, "clients", format!("{} ({} instructors)", self.n_clients, self.n_instructors))?;
        row(
            f,
            "actions",
            format!("{} requested, {} accepted, {} rejected", self.actions_requested, self.accepted, self.rejected),
        )?;
        row(f, "acks", self.acks.to_string())?;
        row(f, "delivered events", format!("{} (expected {})", self.delivered_events, self.expected_events))?;
        row(f, "presence messages", self.presence_messages.to_string())?;
        row(f, "protocol errors", self.protocol_errors.to_string())?;
        match &self.action_latency_ms {
            Some(l) => row(
                f,
                "latency ms",
                format!("p50 {:.2}  p95 {:.2}  p99 {:.2}  max {:.2}  (n={})", l.p50, l.p95, l.p99, l.max, l.samples),
            )?,
            None => row(f, "latency ms", "n/a (no events)".into())?,
        }
        row(f, "messages/s", format!("{:.1}", self.msgs_per_second))?;
        row(f, "elapsed s", format!("{:.3}", self.elapsed_s))?;
        row(f, "max seq gap", self.max_seq_gap.to_string())?;
        row(
            f,
            "converged",
            format!(
                "{} ({} distinct client digests)",
                self.convergence.converged, self.convergence.distinct_client_digests
            ),
        )?;
        row(f, "final digest", self.convergence.final_digest.to_string())
    }
}

/// True iff all digests are equal. An empty list is vacuously convergent.
pub fn verify_convergence(digests: &[StateDigest]) -> bool {
    digests.windows(2).all(|w| w[0] == w[1])
}

/// Writes `report` as pretty JSON to `path` and as a text table next to it
/// (same stem, `.txt`). Returns the table's path.
pub fn emit_report(report: &MetricsReport, path: &Path) -> std::io::Result<PathBuf> {
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    std::fs::write(path, json + "\n")?;
    let table = table_path(path);
    std::fs::write(&table, report.to_string())?;
    Ok(table)
}

pub fn table_path(path: &Path) -> PathBuf {
    let mut table = path.with_extension("txt");
    if table == path {
        table = path.with_extension("table.txt");
    }
    table
}
