//! Machine-readable verdict report.
//!
//! Every pipeline emits one report listing each enabled check exactly once,
//! with its pass flag, worst margin, and the location of the worst violation
//! when one exists. Serialization is deterministic: fixed field order,
//! sorted config echo, no timestamps.

use std::collections::BTreeMap;

use serde::Serialize;

/// One theorem/property check outcome.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub id: String,
    pub pass: bool,
    /// Signed margin; sign convention documented per check id.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_node: Option<Vec<f64>>,
    pub detail: String,
}

impl CheckRecord {
    pub fn passing(id: &str, margin: Option<f64>, detail: impl Into<String>) -> Self {
        Self { id: id.into(), pass: true, margin, worst_node: None, detail: detail.into() }
    }

    pub fn failing(
        id: &str,
        margin: Option<f64>,
        worst_node: Option<Vec<f64>>,
        detail: impl Into<String>,
    ) -> Self {
        Self { id: id.into(), pass: false, margin, worst_node, detail: detail.into() }
    }
}

/// The per-run verdict artifact (`verdict.json`).
#[derive(Debug, Clone, Serialize)]
pub struct VerdictReport {
    pub pipeline: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub all_passed: bool,
    pub checks: Vec<CheckRecord>,
    pub config: BTreeMap<String, String>,
}

impl VerdictReport {
    pub fn new(
        pipeline: &str,
        seed: Option<u64>,
        c: Option<f64>,
        gamma: Option<f64>,
        checks: Vec<CheckRecord>,
        config: BTreeMap<String, String>,
    ) -> Self {
        let all_passed = checks.iter().all(|c| c.pass);
        Self { pipeline: pipeline.into(), seed, c, gamma, all_passed, checks, config }
    }

    /// Deterministic pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
