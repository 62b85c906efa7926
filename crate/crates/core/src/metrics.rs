//! Metrics emission: one CSV per run and one JSON summary per comparison.
//!
//! The CSV layout is frozen: `round,policy,seed,l2_distance,lower_bound,
//! cumulative_messages,sweeps,class_0..class_{N-1}`, floats with exactly six
//! decimal places, LF line endings, header mandatory. Runs are deterministic,
//! so identical runs must produce byte-identical files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Error;
use crate::policies::PolicyKind;
use crate::sim::RoundMetrics;
use crate::Result;

/// Column header for `n_class` classes.
pub fn metrics_header(n_class: usize) -> String {
    let mut header = String::from(
        "round,policy,seed,l2_distance,lower_bound,cumulative_messages,sweeps",
    );
    for k in 0..n_class {
        header.push_str(&format!(",class_{k}"));
    }
    header
}

/// Write header plus one line per round (round 0 included) to `out`.
pub fn emit_round_metrics(
    rows: &[RoundMetrics],
    policy: PolicyKind,
    seed: u64,
    out: &mut impl Write,
) -> Result<()> {
    let Some(first) = rows.first() else {
        return Err(Error::InvalidState("no metrics rows to emit".into()));
    };
    writeln!(out, "{}", metrics_header(first.per_class_cloud_counts.len()))?;
    append_metrics_rows(rows, policy, seed, out)
}

/// Write data lines only; lets one file carry several seeds under one header.
pub fn append_metrics_rows(
    rows: &[RoundMetrics],
    policy: PolicyKind,
    seed: u64,
    out: &mut impl Write,
) -> Result<()> {
    for row in rows {
        write!(
            out,
            "{},{},{},{:.6},{:.6},{},{}",
            row.round,
            policy.name(),
            seed,
            row.l2_distance,
            row.lower_bound,
            row.cumulative_messages,
            row.sweeps
        )?;
        for count in &row.per_class_cloud_counts {
            write!(out, ",{count:.6}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Emit to a file, creating parent directories.
pub fn write_metrics_file(
    path: &Path,
    rows: &[RoundMetrics],
    policy: PolicyKind,
    seed: u64,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut buffer = Vec::new();
    emit_round_metrics(rows, policy, seed, &mut buffer)?;
    std::fs::write(path, buffer)?;
    Ok(())
}

/// One parsed CSV line; round-trips [`emit_round_metrics`] up to the
/// six-decimal rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMetricsRow {
    pub round: usize,
    pub policy: String,
    pub seed: u64,
    pub l2_distance: f64,
    pub lower_bound: f64,
    pub cumulative_messages: u64,
    pub sweeps: usize,
    pub per_class_cloud_counts: Vec<f64>,
}

/// Parse a metrics CSV produced by this module. No field of the format can
/// contain a comma or quote, so plain splitting is exact.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<ParsedMetricsRow>> {
    let bad = |line: usize, detail: &str| {
        Error::InvalidState(format!("metrics CSV line {}: {detail}", line + 1))
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InvalidState("metrics CSV is empty".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 8 || !metrics_header(columns.len() - 7).eq(header) {
        return Err(Error::InvalidState(format!(
            "metrics CSV header mismatch: {header}"
        )));
    }
    let n_class = columns.len() - 7;

    let mut rows = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(bad(idx, "wrong field count"));
        }
        let mut counts = Vec::with_capacity(n_class);
        for field in &fields[7..] {
            counts.push(
                field
                    .parse::<f64>()
                    .map_err(|_| bad(idx, "bad class count"))?,
            );
        }
        rows.push(ParsedMetricsRow {
            round: fields[0].parse().map_err(|_| bad(idx, "bad round"))?,
            policy: fields[1].to_string(),
            seed: fields[2].parse().map_err(|_| bad(idx, "bad seed"))?,
            l2_distance: fields[3].parse().map_err(|_| bad(idx, "bad l2"))?,
            lower_bound: fields[4].parse().map_err(|_| bad(idx, "bad bound"))?,
            cumulative_messages: fields[5]
                .parse()
                .map_err(|_| bad(idx, "bad message count"))?,
            sweeps: fields[6].parse().map_err(|_| bad(idx, "bad sweeps"))?,
            per_class_cloud_counts: counts,
        });
    }
    Ok(rows)
}

/// Comparison report across policies. BTreeMaps keep key order, and thereby
/// the JSON bytes, deterministic.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSummary {
    pub final_l2: BTreeMap<String, f64>,
    pub improvement_pct: f64,
    pub total_messages: BTreeMap<String, u64>,
    pub verify_verdicts: BTreeMap<String, bool>,
}

impl ComparisonSummary {
    pub fn to_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(self).expect("summary has no unserializable values");
        text.push('\n');
        text
    }
}

/// Percentage by which `interactive_final` improves on `greedy_final`.
pub fn improvement_pct(greedy_final: f64, interactive_final: f64) -> f64 {
    if greedy_final <= 0.0 {
        0.0
    } else {
        100.0 * (greedy_final - interactive_final) / greedy_final
    }
}
