use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::doi::Doi;

use super::cache::{CacheEntry, MetadataCache};
use super::crossref::{CrossrefWork, FetchError, WorkSource};
use super::{PublicationRecord, TypeMapping, MIN_YEAR};

#[derive(Debug, Clone)]
pub struct ClientConfig {
    /// Requests per second against a remote source; `0` disables limiting.
    pub rate_limit: f64,
    /// Retries after the first attempt for rate-limited or transient errors.
    pub retry_budget: u32,
    pub backoff: Duration,
    /// Never query a remote source; cache misses become failures.
    pub offline: bool,
    /// Cached entries older than this are refetched; `None` keeps them forever.
    pub validity: Option<Duration>,
    pub jobs: usize,
    /// Upper bound for plausible years is `current_year + 1`.
    pub current_year: i32,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            rate_limit: 10.0,
            retry_budget: 3,
            backoff: Duration::from_millis(500),
            offline: false,
            validity: None,
            jobs: 4,
            current_year: current_year(),
        }
    }
}

fn current_year() -> i32 {
    use chrono::Datelike;
    chrono::Utc::now().year()
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Resolution {
    Found { record: PublicationRecord },
    NotFound,
    Failed { reason: String },
}

impl Resolution {
    pub fn record(&self) -> Option<&PublicationRecord> {
        match self {
            Resolution::Found { record } => Some(record),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchCounts {
    pub found: usize,
    pub not_found: usize,
    pub failed: usize,
    /// Found records without a usable year.
    pub undated: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchAllResult {
    pub resolutions: BTreeMap<Doi, Resolution>,
    pub counts: FetchCounts,
}

pub struct MetadataClient {
    source: Box<dyn WorkSource>,
    cache: MetadataCache,
    mapping: TypeMapping,
    config: ClientConfig,
    next_slot: Mutex<Option<Instant>>,
}

impl MetadataClient {
    pub fn new(source: Box<dyn WorkSource>, cache: MetadataCache, config: ClientConfig) -> Self {
        Self {
            source,
            cache,
            mapping: TypeMapping::default(),
            config,
            next_slot: Mutex::new(None),
        }
    }

    pub fn with_mapping(mut self, mapping: TypeMapping) -> Self {
        self.mapping = mapping;
        self
    }

    pub fn cache(&self) -> &MetadataCache {
        &self.cache
    }

    fn to_record(&self, work: CrossrefWork) -> PublicationRecord {
        let year = work
            .best_year()
            .filter(|y| (MIN_YEAR..=self.config.current_year + 1).contains(y));
        PublicationRecord {
            is_journal_article: self.mapping.is_journal_article(&work.work_type),
            doi: work.doi,
            year,
            pub_type: work.work_type,
        }
    }

    fn cached(&self, doi: &Doi) -> Option<CacheEntry> {
        let entry = self.cache.get(doi)?;
        match self.config.validity {
            Some(validity) if unix_now().saturating_sub(entry.fetched_at) >= validity.as_secs() => None,
            _ => Some(entry),
        }
    }

    fn wait_for_slot(&self) {
        if self.config.rate_limit <= 0.0 || !self.source.is_remote() {
            return;
        }
        let interval = Duration::from_secs_f64(1.0 / self.config.rate_limit);
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }

    fn query_source(&self, doi: &Doi) -> Result<Option<CrossrefWork>, FetchError> {
        let mut attempt = 0;
        loop {
            self.wait_for_slot();
            let err = match self.source.fetch(doi) {
                Ok(answer) => return Ok(answer),
                Err(FetchError::Permanent(msg)) => return Err(FetchError::Permanent(msg)),
                Err(e) => e,
            };
            if attempt >= self.config.retry_budget {
                return Err(err);
            }
            let delay = match &err {
                FetchError::RateLimited {
                    retry_after: Some(d),
                } => *d,
                _ => self.config.backoff * 2u32.saturating_pow(attempt),
            };
            log::debug!("retrying {doi} after {err} (attempt {})", attempt + 1);
            if !delay.is_zero() {
                thread::sleep(delay);
            }
            attempt += 1;
        }
    }

    /// Looks up one DOI. `Ok(None)` is a terminal not-found answer and is
    /// cached like a found record.
    pub fn fetch_record(&self, doi: &Doi) -> Result<Option<PublicationRecord>, FetchError> {
        self.fetch_record_inner(doi).map(|(record, _)| record)
    }

    fn fetch_record_inner(&self, doi: &Doi) -> Result<(Option<PublicationRecord>, bool), FetchError> {
        if let Some(entry) = self.cached(doi) {
            return Ok((entry.record(), true));
        }
        if self.config.offline && self.source.is_remote() {
            return Err(FetchError::Permanent(format!(
                "{doi} not cached and client is offline"
            )));
        }
        let record = self.query_source(doi)?.map(|work| self.to_record(work));
        let entry = match &record {
            Some(rec) => CacheEntry::found(rec, unix_now()),
            None => CacheEntry::not_found(doi, unix_now()),
        };
        if let Err(e) = self.cache.insert(entry) {
            log::error!("writing cache entry for {doi}: {e}");
        }
        Ok((record, false))
    }

    /// Resolves every DOI; failures are isolated per DOI.
    pub fn fetch_all(&self, dois: &BTreeSet<Doi>) -> FetchAllResult {
        let dois: Vec<&Doi> = dois.iter().collect();
        let jobs = self.config.jobs.max(1);
        let mut answers: Vec<Option<(Resolution, bool)>> = vec![None; dois.len()];
        let resolve = |doi: &Doi| match self.fetch_record_inner(doi) {
            Ok((Some(record), hit)) => (Resolution::Found { record }, hit),
            Ok((None, hit)) => (Resolution::NotFound, hit),
            Err(e) => {
                log::warn!("metadata for {doi} failed: {e}");
                (Resolution::Failed { reason: e.to_string() }, false)
            }
        };
        if jobs == 1 || dois.len() < 2 {
            for (slot, doi) in answers.iter_mut().zip(&dois) {
                *slot = Some(resolve(doi));
            }
        } else {
            let chunk = dois.len().div_ceil(jobs);
            thread::scope(|scope| {
                for (slots, batch) in answers.chunks_mut(chunk).zip(dois.chunks(chunk)) {
                    let resolve = &resolve;
                    scope.spawn(move || {
                        for (slot, doi) in slots.iter_mut().zip(batch) {
                            *slot = Some(resolve(doi));
                        }
                    });
                }
            });
        }
        if let Err(e) = self.cache.flush() {
            log::error!("flushing metadata cache: {e}");
        }

        let mut result = FetchAllResult::default();
        for (doi, answer) in dois.into_iter().zip(answers) {
            let (resolution, hit) = answer.expect("every DOI resolved");
            let counts = &mut result.counts;
            counts.cache_hits += usize::from(hit);
            match &resolution {
                Resolution::Found { record } => {
                    counts.found += 1;
                    counts.undated += usize::from(record.year.is_none());
                }
                Resolution::NotFound => counts.not_found += 1,
                Resolution::Failed { .. } => counts.failed += 1,
            }
            result.resolutions.insert(doi.clone(), resolution);
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use super::*;
    use crate::http::{HttpResponse, Transport, TransportError};
    use crate::metadata::{CrossrefSource, FixtureStore};

    fn doi(s: &str) -> Doi {
        Doi::parse(s).unwrap()
    }

    fn work(d: &str, ty: &str, year: Option<i32>) -> CrossrefWork {
        CrossrefWork {
            doi: doi(d),
            work_type: ty.into(),
            print_year: None,
            online_year: None,
            issued_year: year,
        }
    }

    fn quiet_config() -> ClientConfig {
        ClientConfig {
            rate_limit: 0.0,
            backoff: Duration::ZERO,
            current_year: 2021,
            ..ClientConfig::default()
        }
    }

    struct Counting<S> {
        inner: S,
        calls: Arc<AtomicUsize>,
    }

    impl<S: WorkSource> WorkSource for Counting<S> {
        fn fetch(&self, doi: &Doi) -> Result<Option<CrossrefWork>, FetchError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.fetch(doi)
        }

        fn is_remote(&self) -> bool {
            self.inner.is_remote()
        }
    }

    fn fixture_client(calls: Arc<AtomicUsize>) -> MetadataClient {
        let store = FixtureStore::new([
            work("10.1234/journal", "journal-article", Some(2015)),
            work("10.1234/monograph", "monograph", Some(2012)),
            work("10.1234/future", "journal-article", Some(2030)),
        ]);
        MetadataClient::new(
            Box::new(Counting { inner: store, calls }),
            MetadataCache::in_memory(),
            quiet_config(),
        )
    }

    #[test]
    fn journal_and_monograph_records() {
        let client = fixture_client(Arc::default());
        let journal = client.fetch_record(&doi("10.1234/journal")).unwrap().unwrap();
        assert_eq!(journal.pub_type, "journal-article");
        assert!(journal.is_journal_article);
        assert_eq!(journal.year, Some(2015));
        let book = client.fetch_record(&doi("10.1234/monograph")).unwrap().unwrap();
        assert!(!book.is_journal_article);
        let future = client.fetch_record(&doi("10.1234/future")).unwrap().unwrap();
        assert_eq!(future.year, None);
    }

    #[test]
    fn not_found_is_cached() {
        let calls = Arc::new(AtomicUsize::new(0));
        let client = fixture_client(calls.clone());
        let absent = doi("10.1234/absent");
        assert_eq!(client.fetch_record(&absent), Ok(None));
        assert_eq!(client.fetch_record(&absent), Ok(None));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn fetch_all_counts_and_is_replayable() {
        let calls = Arc::new(AtomicUsize::new(0));
        let client = fixture_client(calls.clone());
        assert!(client.fetch_all(&BTreeSet::new()).resolutions.is_empty());

        let mut set: BTreeSet<Doi> = (0..8).map(|i| doi(&format!("10.1234/w{i}"))).collect();
        set.insert(doi("10.1234/missing-1"));
        set.insert(doi("10.1234/missing-2"));
        let store = FixtureStore::new((0..8).map(|i| work(&format!("10.1234/w{i}"), "journal-article", Some(2010 + i))));
        let client = MetadataClient::new(Box::new(store), MetadataCache::in_memory(), quiet_config());
        let first = client.fetch_all(&set);
        assert_eq!(first.counts.found, 8);
        assert_eq!(first.counts.not_found, 2);
        assert_eq!(first.counts.failed, 0);
        let second = client.fetch_all(&set);
        assert_eq!(first.resolutions, second.resolutions);
        assert_eq!(second.counts.cache_hits, 10);
    }

    struct Scripted {
        script: Mutex<Vec<HttpResponse>>,
        calls: Arc<AtomicUsize>,
    }

    impl Transport for Scripted {
        fn get(&self, _: &str, _: &[(&str, &str)]) -> Result<HttpResponse, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut script = self.script.lock().unwrap();
            if script.is_empty() {
                return Err(TransportError("script exhausted".into()));
            }
            Ok(script.remove(0))
        }
    }

    fn resp(status: u16, body: &str) -> HttpResponse {
        HttpResponse {
            status,
            body: body.into(),
            retry_after: None,
        }
    }

    #[test]
    fn rate_limited_then_transient_then_success() {
        let calls = Arc::new(AtomicUsize::new(0));
        let body = r#"{"message":{"DOI":"10.1234/x","type":"journal-article","published-print":{"date-parts":[[2011]]}}}"#;
        let transport = Scripted {
            script: Mutex::new(vec![resp(429, ""), resp(502, ""), resp(200, body)]),
            calls: calls.clone(),
        };
        let source = CrossrefSource::new(transport, "https://api.example", None);
        let client = MetadataClient::new(Box::new(source), MetadataCache::in_memory(), quiet_config());
        let rec = client.fetch_record(&doi("10.1234/x")).unwrap().unwrap();
        assert_eq!(rec.year, Some(2011));
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retry_budget_is_bounded_and_failures_are_not_cached() {
        let calls = Arc::new(AtomicUsize::new(0));
        let transport = Scripted {
            script: Mutex::new(vec![resp(503, ""); 10]),
            calls: calls.clone(),
        };
        let source = CrossrefSource::new(transport, "https://api.example", None);
        let config = ClientConfig {
            retry_budget: 2,
            ..quiet_config()
        };
        let client = MetadataClient::new(Box::new(source), MetadataCache::in_memory(), config);
        let set = BTreeSet::from([doi("10.1234/x")]);
        let result = client.fetch_all(&set);
        assert_eq!(result.counts.failed, 1);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert!(client.cache().is_empty());
    }

    #[test]
    fn offline_mode_never_touches_transport() {
        let calls = Arc::new(AtomicUsize::new(0));
        let transport = Scripted {
            script: Mutex::new(Vec::new()),
            calls: calls.clone(),
        };
        let source = CrossrefSource::new(transport, "https://api.example", None);
        let cache = MetadataCache::in_memory();
        let rec = PublicationRecord {
            doi: doi("10.1234/cached"),
            year: Some(2014),
            pub_type: "journal-article".into(),
            is_journal_article: true,
        };
        cache.insert(CacheEntry::found(&rec, 0)).unwrap();
        let config = ClientConfig {
            offline: true,
            ..quiet_config()
        };
        let client = MetadataClient::new(Box::new(source), cache, config);
        let set = BTreeSet::from([doi("10.1234/cached"), doi("10.1234/uncached")]);
        let result = client.fetch_all(&set);
        assert_eq!(result.counts.found, 1);
        assert_eq!(result.counts.failed, 1);
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn expired_entries_are_refetched() {
        let calls = Arc::new(AtomicUsize::new(0));
        let store = FixtureStore::new([work("10.1234/a", "book", Some(2001))]);
        let cache = MetadataCache::in_memory();
        cache.insert(CacheEntry::not_found(&doi("10.1234/a"), 0)).unwrap();
        let config = ClientConfig {
            validity: Some(Duration::from_secs(3600)),
            ..quiet_config()
        };
        let client = MetadataClient::new(
            Box::new(Counting { inner: store, calls: calls.clone() }),
            cache,
            config,
        );
        assert!(client.fetch_record(&doi("10.1234/a")).unwrap().is_some());
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }
}
