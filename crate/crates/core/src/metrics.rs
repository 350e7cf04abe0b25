//! The three citation-based indicators for one application: journal
//! articles (A), citations (B) and h-index (C), computed over the
//! publications inside the level's age window.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::citations::CitationIndex;
use crate::doi::Doi;
use crate::metadata::PublicationRecord;
use crate::taxonomy::{classify, DisciplineCategory, Level, RecruitmentField};

/// A metric triple as reported by an external source (official values
/// may be normalized and fractional).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl MetricValues {
    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ApplicationError {
    #[error("application {app_id}: {rf} is a non-citation-based field")]
    NonCitationField { app_id: String, rf: RecruitmentField },
    #[error("application id must not be empty")]
    EmptyId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateApplication {
    pub app_id: String,
    pub rf: RecruitmentField,
    pub level: Level,
    pub session_year: i32,
    /// Unique, in CV order.
    pub dois: Vec<Doi>,
    pub official_metrics: Option<MetricValues>,
    pub official_passed: Option<bool>,
}

impl CandidateApplication {
    /// Rejects non-citation-based fields and drops repeated DOIs.
    pub fn new(
        app_id: impl Into<String>,
        rf: RecruitmentField,
        level: Level,
        session_year: i32,
        dois: impl IntoIterator<Item = Doi>,
    ) -> Result<Self, ApplicationError> {
        let app_id = app_id.into();
        if app_id.trim().is_empty() {
            return Err(ApplicationError::EmptyId);
        }
        if classify(&rf) != DisciplineCategory::CitationBased {
            return Err(ApplicationError::NonCitationField { app_id, rf });
        }
        let mut seen = HashSet::new();
        let dois = dois.into_iter().filter(|d| seen.insert(d.clone())).collect();
        Ok(Self {
            app_id,
            rf,
            level,
            session_year,
            dois,
            official_metrics: None,
            official_passed: None,
        })
    }

    pub fn with_official(mut self, metrics: Option<MetricValues>, passed: Option<bool>) -> Self {
        self.official_metrics = metrics;
        self.official_passed = passed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsTriple {
    pub a_journals: f64,
    pub b_citations: f64,
    pub c_hindex: u32,
}

impl MetricsTriple {
    pub const ZERO: Self = Self {
        a_journals: 0.0,
        b_citations: 0.0,
        c_hindex: 0,
    };

    pub fn as_array(&self) -> [f64; 3] {
        [self.a_journals, self.b_citations, f64::from(self.c_hindex)]
    }
}

impl fmt::Display for MetricsTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.a_journals, self.b_citations, self.c_hindex)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    #[default]
    None,
    DivideByScientificAge,
}

/// How A and B are normalized. The h-index is an integer and is never
/// divided.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationPolicy {
    pub journals: NormalizationMode,
    pub citations: NormalizationMode,
}

impl NormalizationPolicy {
    pub const NONE: Self = Self {
        journals: NormalizationMode::None,
        citations: NormalizationMode::None,
    };

    pub const BY_AGE: Self = Self {
        journals: NormalizationMode::DivideByScientificAge,
        citations: NormalizationMode::DivideByScientificAge,
    };
}

/// Years since the first dated publication, counting the session year
/// itself; never below 1.
pub fn scientific_age<'a, I>(records: I, session_year: i32) -> u32
where
    I: IntoIterator<Item = &'a PublicationRecord>,
{
    records
        .into_iter()
        .filter_map(|r| r.year)
        .min()
        .map_or(1, |first| (session_year - first + 1).max(1) as u32)
}

/// True when a publication from `year` is less than the level's window
/// old at `session_year`.
pub fn in_window(year: i32, level: Level, session_year: i32) -> bool {
    session_year - year < level.window_years()
}

/// Dated records inside the window; undated records are always dropped.
pub fn window_filter<'a, I>(records: I, level: Level, session_year: i32) -> Vec<&'a PublicationRecord>
where
    I: IntoIterator<Item = &'a PublicationRecord>,
{
    records
        .into_iter()
        .filter(|r| r.year.is_some_and(|y| in_window(y, level, session_year)))
        .collect()
}

/// Largest `h` such that at least `h` counts are `>= h`.
pub fn h_index(counts: &[u64]) -> u32 {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted
        .iter()
        .enumerate()
        .take_while(|&(i, &c)| c > i as u64)
        .count() as u32
}

/// Metrics plus the bookkeeping that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsBreakdown {
    pub metrics: MetricsTriple,
    pub dois: usize,
    pub found: usize,
    pub windowed: usize,
    pub scientific_age: u32,
}

pub fn compute_metrics_detailed(
    app: &CandidateApplication,
    records: &BTreeMap<Doi, PublicationRecord>,
    index: &CitationIndex,
    policy: &NormalizationPolicy,
) -> MetricsBreakdown {
    let found: Vec<&PublicationRecord> = app.dois.iter().filter_map(|d| records.get(d)).collect();
    let age = scientific_age(found.iter().copied(), app.session_year);
    let windowed = window_filter(found.iter().copied(), app.level, app.session_year);

    let journals = windowed.iter().filter(|r| r.is_journal_article).count() as f64;
    let counts: Vec<u64> = windowed.iter().map(|r| index.citation_count(&r.doi)).collect();
    let citations = counts.iter().sum::<u64>() as f64;
    let normalize = |value: f64, mode: NormalizationMode| match mode {
        NormalizationMode::None => value,
        NormalizationMode::DivideByScientificAge => value / f64::from(age),
    };

    MetricsBreakdown {
        metrics: MetricsTriple {
            a_journals: normalize(journals, policy.journals),
            b_citations: normalize(citations, policy.citations),
            c_hindex: h_index(&counts),
        },
        dois: app.dois.len(),
        found: found.len(),
        windowed: windowed.len(),
        scientific_age: age,
    }
}

/// A, B and C for one application. DOIs without a record contribute
/// nothing.
pub fn compute_metrics(
    app: &CandidateApplication,
    records: &BTreeMap<Doi, PublicationRecord>,
    index: &CitationIndex,
    policy: &NormalizationPolicy,
) -> MetricsTriple {
    compute_metrics_detailed(app, records, index, policy).metrics
}
