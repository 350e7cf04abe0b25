//! Publication metadata (type and year) per DOI, from a Crossref-style
//! works endpoint or an offline fixture store, behind a persistent cache.

mod cache;
mod client;
mod crossref;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::doi::Doi;

pub use cache::{CacheEntry, CacheStatus, MetadataCache};
pub use client::{ClientConfig, FetchAllResult, FetchCounts, MetadataClient, Resolution};
pub use crossref::{CrossrefSource, CrossrefWork, FetchError, FixtureStore, WorkSource};

/// Earliest publication year accepted as plausible.
pub const MIN_YEAR: i32 = 1800;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub doi: Doi,
    pub year: Option<i32>,
    pub pub_type: String,
    pub is_journal_article: bool,
}

/// Every work type in the Crossref vocabulary.
pub const CROSSREF_TYPES: [&str; 31] = [
    "book",
    "book-chapter",
    "book-part",
    "book-section",
    "book-series",
    "book-set",
    "book-track",
    "component",
    "database",
    "dataset",
    "dissertation",
    "edited-book",
    "grant",
    "journal",
    "journal-article",
    "journal-issue",
    "journal-volume",
    "monograph",
    "other",
    "peer-review",
    "posted-content",
    "proceedings",
    "proceedings-article",
    "proceedings-series",
    "reference-book",
    "reference-entry",
    "report",
    "report-component",
    "report-series",
    "standard",
    "standard-series",
];

/// Maps source types onto the journal-article class used for metric A.
#[derive(Debug, Clone)]
pub struct TypeMapping {
    journal_types: HashSet<String>,
}

impl Default for TypeMapping {
    fn default() -> Self {
        Self::new(["journal-article"])
    }
}

impl TypeMapping {
    pub fn new<I, S>(journal_types: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            journal_types: journal_types.into_iter().map(Into::into).collect(),
        }
    }

    /// Unknown types are logged and count as non-journal.
    pub fn is_journal_article(&self, pub_type: &str) -> bool {
        if !CROSSREF_TYPES.contains(&pub_type) {
            log::warn!("unknown publication type {pub_type:?}, not counted as journal article");
        }
        self.journal_types.contains(pub_type)
    }
}
