//! Anomaly report shared by the CLI and the HTTP API.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::anomaly::AnomalyType;
use crate::insight::{attribute_summary, rank_groups, AttributeSummary, RankedGroup};
use crate::session::Session;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub dataset: String,
    pub version: u64,
    pub top_k: usize,
    pub total: usize,
    pub counts: BTreeMap<AnomalyType, usize>,
    pub ranked: Vec<RankedGroup>,
    pub attributes: Vec<AttributeSummary>,
}

pub fn build_report(session: &Session, top_k: usize) -> AnomalyReport {
    let detection = session.detection();
    AnomalyReport {
        dataset: session.table().name().to_string(),
        version: session.version(),
        top_k,
        total: detection.records.len(),
        counts: detection.counts_by_type(),
        ranked: rank_groups(&detection.index, top_k),
        attributes: attribute_summary(session.table(), &detection.records),
    }
}

/// Markdown rendering. A clean table renders as an empty string.
pub fn render_markdown(report: &AnomalyReport) -> String {
    if report.total == 0 {
        return String::new();
    }
    let mut out = String::new();
    let _ = writeln!(out, "# Anomaly report: {}\n", report.dataset);
    let _ = writeln!(out, "{} anomalies at version {}.\n", report.total, report.version);
    let _ = writeln!(out, "## Top {} groups\n", report.top_k);
    let _ = writeln!(out, "| group | anomalies | dominant type |\n|---|---|---|");
    for r in &report.ranked {
        let _ = writeln!(out, "| {} | {} | {} |", r.group, r.total_anomalies, r.dominant_type);
    }
    let _ = writeln!(out, "\n## Attributes\n");
    let _ = writeln!(out, "| column | score | counts |\n|---|---|---|");
    for a in &report.attributes {
        let counts: Vec<String> = a.per_type_counts.iter().map(|(t, n)| format!("{t}: {n}")).collect();
        let _ = writeln!(out, "| {} | {} | {} |", a.column, a.score, counts.join(", "));
    }
    out
}
