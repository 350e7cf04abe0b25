use std::collections::HashMap;
use std::io::BufRead;
use std::time::Duration;

use percent_encoding::utf8_percent_encode;
use serde_json::Value;
use thiserror::Error;

use crate::doi::Doi;
use crate::http::{Transport, DOI_PATH};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("permanent failure: {0}")]
    Permanent(String),
}

/// The subset of a Crossref work message this toolkit reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossrefWork {
    pub doi: Doi,
    pub work_type: String,
    pub print_year: Option<i32>,
    pub online_year: Option<i32>,
    pub issued_year: Option<i32>,
}

impl CrossrefWork {
    /// Accepts either a bare work message or the `{"message": ...}` envelope.
    pub fn from_json(value: &Value) -> Result<Self, String> {
        let message = value.get("message").unwrap_or(value);
        let doi = message
            .get("DOI")
            .and_then(Value::as_str)
            .ok_or("work has no DOI")?;
        let doi = Doi::parse(doi).map_err(|e| e.to_string())?;
        let work_type = message
            .get("type")
            .and_then(Value::as_str)
            .unwrap_or("other")
            .to_string();
        Ok(Self {
            doi,
            work_type,
            print_year: date_year(message.get("published-print")),
            online_year: date_year(message.get("published-online")),
            issued_year: date_year(message.get("issued")),
        })
    }

    /// Print date, then online date, then issued date.
    pub fn best_year(&self) -> Option<i32> {
        self.print_year.or(self.online_year).or(self.issued_year)
    }
}

fn date_year(date: Option<&Value>) -> Option<i32> {
    let year = date?.get("date-parts")?.get(0)?.get(0)?;
    year.as_i64()
        .or_else(|| year.as_str().and_then(|s| s.parse().ok()))
        .and_then(|y| i32::try_from(y).ok())
}

pub trait WorkSource: Send + Sync {
    /// `Ok(None)` means the source positively does not know the DOI.
    fn fetch(&self, doi: &Doi) -> Result<Option<CrossrefWork>, FetchError>;

    fn is_remote(&self) -> bool;
}

/// In-memory works keyed by DOI, loaded from JSON lines.
#[derive(Debug, Clone, Default)]
pub struct FixtureStore {
    works: HashMap<Doi, CrossrefWork>,
}

impl FixtureStore {
    pub fn new(works: impl IntoIterator<Item = CrossrefWork>) -> Self {
        Self {
            works: works.into_iter().map(|w| (w.doi.clone(), w)).collect(),
        }
    }

    pub fn from_reader<R: BufRead>(reader: R) -> anyhow::Result<Self> {
        let mut works = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(&line)
                .map_err(|e| anyhow::anyhow!("line {}: {e}", i + 1))?;
            let work = CrossrefWork::from_json(&value)
                .map_err(|e| anyhow::anyhow!("line {}: {e}", i + 1))?;
            works.insert(work.doi.clone(), work);
        }
        Ok(Self { works })
    }

    pub fn len(&self) -> usize {
        self.works.len()
    }

    pub fn is_empty(&self) -> bool {
        self.works.is_empty()
    }
}

impl WorkSource for FixtureStore {
    fn fetch(&self, doi: &Doi) -> Result<Option<CrossrefWork>, FetchError> {
        Ok(self.works.get(doi).cloned())
    }

    fn is_remote(&self) -> bool {
        false
    }
}

/// Live Crossref REST source (`GET {base}/works/{doi}`).
pub struct CrossrefSource<T> {
    transport: T,
    base_url: String,
    user_agent: String,
}

impl<T: Transport> CrossrefSource<T> {
    pub const DEFAULT_BASE_URL: &'static str = "https://api.crossref.org";

    /// `mailto` is the polite-pool contact sent in the User-Agent.
    pub fn new(transport: T, base_url: impl Into<String>, mailto: Option<&str>) -> Self {
        let user_agent = match mailto {
            Some(m) => format!("opennsq/{} (mailto:{m})", env!("CARGO_PKG_VERSION")),
            None => format!("opennsq/{}", env!("CARGO_PKG_VERSION")),
        };
        Self {
            transport,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            user_agent,
        }
    }
}

impl<T: Transport> WorkSource for CrossrefSource<T> {
    fn fetch(&self, doi: &Doi) -> Result<Option<CrossrefWork>, FetchError> {
        let url = format!(
            "{}/works/{}",
            self.base_url,
            utf8_percent_encode(doi.as_str(), DOI_PATH)
        );
        let resp = self
            .transport
            .get(&url, &[("User-Agent", self.user_agent.as_str())])
            .map_err(|e| FetchError::Transient(e.to_string()))?;
        match resp.status {
            200 => {
                let value: Value = serde_json::from_str(&resp.body)
                    .map_err(|e| FetchError::Permanent(format!("bad JSON for {doi}: {e}")))?;
                CrossrefWork::from_json(&value)
                    .map(Some)
                    .map_err(FetchError::Permanent)
            }
            404 => Ok(None),
            429 => Err(FetchError::RateLimited {
                retry_after: resp.retry_after,
            }),
            500..=599 => Err(FetchError::Transient(format!("HTTP {}", resp.status))),
            other => Err(FetchError::Permanent(format!("HTTP {other}"))),
        }
    }

    fn is_remote(&self) -> bool {
        true
    }
}
