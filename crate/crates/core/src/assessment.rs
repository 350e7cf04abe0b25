//! Threshold evaluation (pass when at least two of three thresholds are
//! met) and agreement between simulated and official outcomes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricValues;
use crate::taxonomy::ThresholdTriple;

/// How a metric is compared with its threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    /// Meets or exceeds.
    #[default]
    Ge,
    /// Strictly exceeds.
    Gt,
}

impl Comparator {
    pub fn exceeds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Ge => value >= threshold,
            Comparator::Gt => value > threshold,
        }
    }
}

impl FromStr for Comparator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ge" | ">=" => Ok(Comparator::Ge),
            "gt" | ">" => Ok(Comparator::Gt),
            other => Err(format!("unknown comparator {other:?} (expected ge or gt)")),
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Ge => "ge",
            Comparator::Gt => "gt",
        })
    }
}

/// Number of thresholds that must be exceeded to pass.
pub const REQUIRED_EXCEEDED: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentResult {
    /// Per metric A, B, C.
    pub exceeds: [bool; 3],
    pub passed: bool,
}

pub fn evaluate(values: [f64; 3], thresholds: &ThresholdTriple, cmp: Comparator) -> AssessmentResult {
    let t = thresholds.as_array();
    let exceeds = [0, 1, 2].map(|i| cmp.exceeds(values[i], t[i]));
    AssessmentResult {
        exceeds,
        passed: exceeds.iter().filter(|&&e| e).count() >= REQUIRED_EXCEEDED,
    }
}

/// Official data available for one application.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OfficialOutcome {
    pub metrics: Option<MetricValues>,
    pub passed: Option<bool>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("application {0} has neither official metrics nor an official outcome")]
pub struct MissingOfficialData(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementRecord {
    pub app_id: String,
    /// Per metric A, B, C: whether simulated and official values fall on
    /// the same side of the threshold. `None` when official metrics are
    /// unknown.
    pub per_metric: [Option<bool>; 3],
    /// Same pass/fail status.
    pub overall: bool,
    /// Official outcome used for `overall`: the stored one when given,
    /// otherwise recomputed from official metrics.
    pub official_passed: bool,
    /// Stored official outcome disagrees with the one recomputed from
    /// official metrics and thresholds.
    pub official_discrepancy: bool,
}

pub fn compare(
    app_id: &str,
    simulated: &AssessmentResult,
    official: &OfficialOutcome,
    thresholds: &ThresholdTriple,
    cmp: Comparator,
) -> Result<AgreementRecord, MissingOfficialData> {
    let recomputed = official
        .metrics
        .map(|m| evaluate(m.as_array(), thresholds, cmp));
    let official_passed = official
        .passed
        .or(recomputed.map(|r| r.passed))
        .ok_or_else(|| MissingOfficialData(app_id.to_string()))?;
    let per_metric = match recomputed {
        Some(r) => [0, 1, 2].map(|i| Some(r.exceeds[i] == simulated.exceeds[i])),
        None => [None; 3],
    };
    let official_discrepancy = matches!(
        (official.passed, recomputed),
        (Some(stored), Some(r)) if stored != r.passed
    );
    if official_discrepancy {
        log::warn!("{app_id}: official outcome disagrees with official metrics and thresholds");
    }
    Ok(AgreementRecord {
        app_id: app_id.to_string(),
        per_metric,
        overall: simulated.passed == official_passed,
        official_passed,
        official_discrepancy,
    })
}
