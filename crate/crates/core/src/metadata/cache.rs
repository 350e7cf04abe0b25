use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::doi::Doi;

use super::PublicationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Found,
    NotFound,
}

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub doi: Doi,
    pub status: CacheStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pub_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_journal_article: Option<bool>,
    /// Unix seconds.
    pub fetched_at: u64,
}

impl CacheEntry {
    pub fn found(record: &PublicationRecord, fetched_at: u64) -> Self {
        Self {
            doi: record.doi.clone(),
            status: CacheStatus::Found,
            pub_type: Some(record.pub_type.clone()),
            year: record.year,
            is_journal_article: Some(record.is_journal_article),
            fetched_at,
        }
    }

    pub fn not_found(doi: &Doi, fetched_at: u64) -> Self {
        Self {
            doi: doi.clone(),
            status: CacheStatus::NotFound,
            pub_type: None,
            year: None,
            is_journal_article: None,
            fetched_at,
        }
    }

    /// `None` for a cached not-found answer.
    pub fn record(&self) -> Option<PublicationRecord> {
        match self.status {
            CacheStatus::NotFound => None,
            CacheStatus::Found => Some(PublicationRecord {
                doi: self.doi.clone(),
                year: self.year,
                pub_type: self.pub_type.clone().unwrap_or_else(|| "other".into()),
                is_journal_article: self.is_journal_article.unwrap_or(false),
            }),
        }
    }
}

/// DOI → cached answer. Optionally mirrored to an append-only JSON-lines
/// file; on load the last line for a DOI wins.
#[derive(Default)]
pub struct MetadataCache {
    entries: RwLock<HashMap<Doi, CacheEntry>>,
    log: Option<Mutex<BufWriter<File>>>,
}

impl MetadataCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) an append-only cache file.
    pub fn open(path: &Path) -> anyhow::Result<Self> {
        let entries = if path.exists() {
            Self::read_entries(BufReader::new(File::open(path)?))?
        } else {
            HashMap::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: RwLock::new(entries),
            log: Some(Mutex::new(BufWriter::new(file))),
        })
    }

    pub fn from_reader<R: BufRead>(reader: R) -> anyhow::Result<Self> {
        Ok(Self {
            entries: RwLock::new(Self::read_entries(reader)?),
            log: None,
        })
    }

    fn read_entries<R: BufRead>(reader: R) -> anyhow::Result<HashMap<Doi, CacheEntry>> {
        let mut entries = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CacheEntry = serde_json::from_str(&line)
                .map_err(|e| anyhow::anyhow!("cache line {}: {e}", i + 1))?;
            entries.insert(entry.doi.clone(), entry);
        }
        Ok(entries)
    }

    /// Writes every entry, sorted by DOI.
    pub fn write_to<W: Write>(&self, mut writer: W) -> anyhow::Result<()> {
        let entries = self.entries.read().expect("cache lock poisoned");
        let mut sorted: Vec<_> = entries.values().collect();
        sorted.sort_by(|a, b| a.doi.cmp(&b.doi));
        for entry in sorted {
            serde_json::to_writer(&mut writer, entry)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn get(&self, doi: &Doi) -> Option<CacheEntry> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(doi)
            .cloned()
    }

    pub fn insert(&self, entry: CacheEntry) -> anyhow::Result<()> {
        if let Some(log) = &self.log {
            let mut log = log.lock().expect("cache log lock poisoned");
            serde_json::to_writer(&mut *log, &entry)?;
            log.write_all(b"\n")?;
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(entry.doi.clone(), entry);
        Ok(())
    }

    pub fn flush(&self) -> anyhow::Result<()> {
        if let Some(log) = &self.log {
            log.lock().expect("cache log lock poisoned").flush()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Drop for MetadataCache {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            log::error!("flushing metadata cache: {e}");
        }
    }
}
