//! Existence checks for extracted DOIs.

use std::collections::HashSet;
use std::io::BufRead;
use std::thread;
use std::time::Duration;

use percent_encoding::utf8_percent_encode;
use serde::{Deserialize, Serialize};

use crate::doi::Doi;
use crate::http::{Transport, DOI_PATH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Existence {
    Exists,
    Missing,
    Unavailable,
}

pub trait ExistenceOracle: Sync {
    fn exists(&self, doi: &Doi) -> Existence;

    /// Whether answering requires network access.
    fn is_remote(&self) -> bool {
        false
    }
}

/// Offline oracle backed by a newline-delimited list of known DOIs.
#[derive(Debug, Clone, Default)]
pub struct FixtureResolver {
    known: HashSet<Doi>,
}

impl FixtureResolver {
    pub fn new(known: impl IntoIterator<Item = Doi>) -> Self {
        Self {
            known: known.into_iter().collect(),
        }
    }

    /// Blank lines and `#` comments are ignored; unparsable lines are errors.
    pub fn from_reader<R: BufRead>(reader: R) -> anyhow::Result<Self> {
        let mut known = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let doi = Doi::parse(line)
                .map_err(|e| anyhow::anyhow!("line {}: {e}", i + 1))?;
            known.insert(doi);
        }
        Ok(Self { known })
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

impl ExistenceOracle for FixtureResolver {
    fn exists(&self, doi: &Doi) -> Existence {
        if self.known.contains(doi) {
            Existence::Exists
        } else {
            Existence::Missing
        }
    }
}

/// Queries the DOI proxy handle API (`/api/handles/<doi>`).
pub struct DoiProxyResolver<T> {
    transport: T,
    base_url: String,
}

impl<T: Transport> DoiProxyResolver<T> {
    pub const DEFAULT_BASE_URL: &'static str = "https://doi.org";

    pub fn new(transport: T, base_url: impl Into<String>) -> Self {
        Self {
            transport,
            base_url: base_url.into().trim_end_matches('/').to_string(),
        }
    }
}

impl<T: Transport> ExistenceOracle for DoiProxyResolver<T> {
    fn exists(&self, doi: &Doi) -> Existence {
        let url = format!(
            "{}/api/handles/{}",
            self.base_url,
            utf8_percent_encode(doi.as_str(), DOI_PATH)
        );
        match self.transport.get(&url, &[("Accept", "application/json")]) {
            Ok(resp) if resp.status == 200 => Existence::Exists,
            Ok(resp) if resp.status == 404 => Existence::Missing,
            Ok(_) | Err(_) => Existence::Unavailable,
        }
    }

    fn is_remote(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

/// Result of validation. `unknown` holds DOIs whose oracle stayed
/// unavailable after the retry budget was spent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validation {
    pub valid: Vec<Doi>,
    pub invalid: Vec<Doi>,
    pub unknown: Vec<Doi>,
}

impl Validation {
    pub fn total(&self) -> usize {
        self.valid.len() + self.invalid.len() + self.unknown.len()
    }
}

fn check_with_retry(oracle: &dyn ExistenceOracle, doi: &Doi, policy: &RetryPolicy) -> Existence {
    let attempts = policy.max_attempts.max(1);
    for attempt in 0..attempts {
        match oracle.exists(doi) {
            Existence::Unavailable => {
                if attempt + 1 < attempts && !policy.backoff.is_zero() {
                    thread::sleep(policy.backoff * 2u32.saturating_pow(attempt));
                }
            }
            answer => return answer,
        }
    }
    log::warn!("resolver exhausted for {doi}");
    Existence::Unavailable
}

/// Classifies every DOI, querying at most `jobs` at a time. Buckets keep
/// input order regardless of completion order.
pub fn validate_dois(
    dois: &[Doi],
    oracle: &dyn ExistenceOracle,
    policy: &RetryPolicy,
    jobs: usize,
) -> Validation {
    let jobs = jobs.max(1);
    let mut answers = vec![Existence::Unavailable; dois.len()];
    if jobs == 1 || dois.len() < 2 {
        for (slot, doi) in answers.iter_mut().zip(dois) {
            *slot = check_with_retry(oracle, doi, policy);
        }
    } else {
        let chunk = dois.len().div_ceil(jobs);
        thread::scope(|scope| {
            for (slots, batch) in answers.chunks_mut(chunk).zip(dois.chunks(chunk)) {
                scope.spawn(move || {
                    for (slot, doi) in slots.iter_mut().zip(batch) {
                        *slot = check_with_retry(oracle, doi, policy);
                    }
                });
            }
        });
    }

    let mut out = Validation::default();
    for (doi, answer) in dois.iter().zip(answers) {
        match answer {
            Existence::Exists => out.valid.push(doi.clone()),
            Existence::Missing => out.invalid.push(doi.clone()),
            Existence::Unavailable => out.unknown.push(doi.clone()),
        }
    }
    out
}
