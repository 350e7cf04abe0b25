//! In-degree index over COCI-format DOI-to-DOI citation dumps.
//!
//! Only the number of distinct citing DOIs per cited DOI is kept; the
//! edge list itself is discarded after deduplication unless requested.

mod ingest;
mod snapshot;
mod source;

use std::collections::{BTreeMap, HashMap};

use crate::doi::Doi;

pub use ingest::{ingest_files, IngestConfig, IngestError, IngestStats};
pub use snapshot::{SnapshotError, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use source::{for_each_stream, Compression};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CitationIndex {
    in_degree: HashMap<Doi, u64>,
    total_edges: u64,
    total_entities: u64,
}

impl CitationIndex {
    pub fn empty() -> Self {
        Self::default()
    }

    pub(crate) fn from_parts(in_degree: HashMap<Doi, u64>, total_edges: u64, total_entities: u64) -> Self {
        Self {
            in_degree,
            total_edges,
            total_entities,
        }
    }

    /// Number of distinct citing DOIs; 0 for DOIs never seen as cited.
    pub fn citation_count(&self, doi: &Doi) -> u64 {
        self.in_degree.get(doi).copied().unwrap_or(0)
    }

    /// Citation counts for a publication list.
    pub fn restrict<'a, I>(&self, dois: I) -> BTreeMap<Doi, u64>
    where
        I: IntoIterator<Item = &'a Doi>,
    {
        dois.into_iter()
            .map(|doi| (doi.clone(), self.citation_count(doi)))
            .collect()
    }

    /// Distinct (citing, cited) pairs ingested.
    pub fn total_edges(&self) -> u64 {
        self.total_edges
    }

    /// Distinct DOIs seen on either side of an edge.
    pub fn total_entities(&self) -> u64 {
        self.total_entities
    }

    /// DOIs with at least one citation.
    pub fn cited_count(&self) -> usize {
        self.in_degree.len()
    }

    /// Cited DOIs with their counts in DOI order.
    pub fn sorted_entries(&self) -> Vec<(&Doi, u64)> {
        let mut entries: Vec<_> = self.in_degree.iter().map(|(d, c)| (d, *c)).collect();
        entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
        entries
    }
}
