//! Agreement percentages grouped by level, level × scientific area and
//! level × recruitment field.
//!
//! Counts are kept as integers; percentages are derived only when
//! rendering or ranking.

mod render;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assessment::AgreementRecord;
use crate::taxonomy::{Level, RecruitmentField};

pub use render::{render_rf_chart, write_long, write_table, TABLE_ROWS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Level,
    LevelSa,
    LevelRf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKey {
    Level(Level),
    LevelSa(Level, u8),
    LevelRf(Level, RecruitmentField),
}

impl GroupKey {
    pub fn level(&self) -> Level {
        match *self {
            GroupKey::Level(l) | GroupKey::LevelSa(l, _) | GroupKey::LevelRf(l, _) => l,
        }
    }

    /// Column label without the level, e.g. `SA 03` or `09/D3`.
    pub fn label(&self) -> String {
        match self {
            GroupKey::Level(l) => l.to_string(),
            GroupKey::LevelSa(_, sa) => format!("SA {sa:02}"),
            GroupKey::LevelRf(_, rf) => rf.code(),
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::Level(l) => write!(f, "{l}"),
            GroupKey::LevelSa(l, sa) => write!(f, "{l} SA {sa:02}"),
            GroupKey::LevelRf(l, rf) => write!(f, "{l} {rf}"),
        }
    }
}

/// `agree` out of `n`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub agree: u64,
    pub n: u64,
}

impl Tally {
    pub fn record(&mut self, agrees: bool) {
        self.n += 1;
        self.agree += u64::from(agrees);
    }

    pub fn merge(&mut self, other: Tally) {
        self.agree += other.agree;
        self.n += other.n;
    }

    /// `None` for an empty cell.
    pub fn pct(&self) -> Option<f64> {
        (self.n > 0).then(|| 100.0 * self.agree as f64 / self.n as f64)
    }

    /// Exact comparison of the two ratios; empty cells sort first.
    pub fn cmp_ratio(&self, other: &Tally) -> Ordering {
        match (self.n, other.n) {
            (0, 0) => Ordering::Equal,
            (0, _) => Ordering::Less,
            (_, 0) => Ordering::Greater,
            _ => (u128::from(self.agree) * u128::from(other.n))
                .cmp(&(u128::from(other.agree) * u128::from(self.n))),
        }
    }
}

/// Agreement for one group. Each cell has its own denominator because
/// per-metric agreement is unknown when official metrics are missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgreementReport {
    pub key: GroupKey,
    pub overall: Tally,
    /// Per metric A, B, C.
    pub metrics: [Tally; 3],
}

impl AgreementReport {
    /// Applications in the group.
    pub fn n(&self) -> u64 {
        self.overall.n
    }
}

/// An agreement record with the grouping attributes of its application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledAgreement {
    pub level: Level,
    pub rf: RecruitmentField,
    pub record: AgreementRecord,
}

impl LabeledAgreement {
    fn key(&self, grouping: Grouping) -> GroupKey {
        match grouping {
            Grouping::Level => GroupKey::Level(self.level),
            Grouping::LevelSa => GroupKey::LevelSa(self.level, self.rf.sa()),
            Grouping::LevelRf => GroupKey::LevelRf(self.level, self.rf),
        }
    }
}

/// Groups sorted by key; groups without records are absent.
pub fn aggregate(records: &[LabeledAgreement], grouping: Grouping) -> Vec<AgreementReport> {
    let mut groups: BTreeMap<GroupKey, AgreementReport> = BTreeMap::new();
    for rec in records {
        let key = rec.key(grouping);
        let report = groups.entry(key).or_insert(AgreementReport {
            key,
            overall: Tally::default(),
            metrics: [Tally::default(); 3],
        });
        report.overall.record(rec.record.overall);
        for (tally, agrees) in report.metrics.iter_mut().zip(rec.record.per_metric) {
            if let Some(agrees) = agrees {
                tally.record(agrees);
            }
        }
    }
    groups.into_values().collect()
}

/// Ascending by overall agreement, ties by group key.
pub fn rank_groups(reports: &[AgreementReport]) -> Vec<AgreementReport> {
    let mut ranked = reports.to_vec();
    ranked.sort_by(|a, b| a.overall.cmp_ratio(&b.overall).then_with(|| a.key.cmp(&b.key)));
    ranked
}
