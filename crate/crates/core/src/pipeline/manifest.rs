//! Run manifest: a TOML file naming every input and the policy knobs.
//! Relative paths are resolved against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::assessment::Comparator;
use crate::metrics::{NormalizationMode, NormalizationPolicy};

use super::PipelineError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    None,
    Age,
}

impl Normalization {
    pub fn policy(self) -> NormalizationPolicy {
        match self {
            Normalization::None => NormalizationPolicy::NONE,
            Normalization::Age => NormalizationPolicy::BY_AGE,
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Normalization::None),
            "age" => Ok(Normalization::Age),
            other => Err(format!("unknown normalization {other:?} (expected none or age)")),
        }
    }
}

impl From<Normalization> for NormalizationMode {
    fn from(n: Normalization) -> Self {
        match n {
            Normalization::None => NormalizationMode::None,
            Normalization::Age => NormalizationMode::DivideByScientificAge,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Pre-extracted applications, one JSON object per line.
    pub applications: Option<PathBuf>,
    /// Directory of `<app_id>.txt` CVs; needs `sidecar`.
    pub cv_dir: Option<PathBuf>,
    /// CSV: `app_id,rf,level,session_year,official_a,official_b,official_c,official_passed`.
    pub sidecar: Option<PathBuf>,
    /// Glob patterns for COCI dump files.
    #[serde(default)]
    pub coci: Vec<String>,
    pub thresholds: PathBuf,
    /// Recruitment-field list; the shipped one when absent.
    pub rf_list: Option<PathBuf>,
    /// Known-DOI list used instead of the resolver.
    pub doi_fixture: Option<PathBuf>,
    /// Crossref works (JSONL) used instead of the live API.
    pub metadata_fixture: Option<PathBuf>,
    /// Metadata cache file, created when missing.
    pub metadata_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Policy {
    pub comparator: Comparator,
    pub normalization: Normalization,
    pub offline: bool,
    pub jobs: usize,
    /// Write one SVG chart per recruitment field.
    pub charts: bool,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            comparator: Comparator::Ge,
            normalization: Normalization::None,
            offline: false,
            jobs: 4,
            charts: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossrefConfig {
    pub base_url: String,
    pub mailto: Option<String>,
    pub rate_limit: f64,
    pub retry_budget: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    /// Refetch cached entries older than this many days.
    pub cache_days: Option<u64>,
}

impl Default for CrossrefConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.crossref.org".into(),
            mailto: None,
            rate_limit: 10.0,
            retry_budget: 3,
            backoff_ms: 500,
            timeout_secs: 30,
            cache_days: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolverConfig {
    /// Check DOI existence against the handle proxy when online.
    pub enabled: bool,
    pub base_url: String,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            base_url: "https://doi.org".into(),
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub out_dir: PathBuf,
    pub inputs: Inputs,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub crossref: CrossrefConfig,
    #[serde(default)]
    pub resolver: ResolverConfig,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunManifest {
    /// Parses and validates; relative paths are made absolute against
    /// the manifest's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut m: RunManifest =
            toml::from_str(text).map_err(|e| PipelineError::Manifest(e.to_string()))?;
        m.base_dir = base_dir.to_path_buf();
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        join(&mut m.out_dir);
        let inputs = &mut m.inputs;
        join(&mut inputs.thresholds);
        for p in [
            &mut inputs.applications,
            &mut inputs.cv_dir,
            &mut inputs.sidecar,
            &mut inputs.rf_list,
            &mut inputs.doi_fixture,
            &mut inputs.metadata_fixture,
            &mut inputs.metadata_cache,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        for pattern in &mut inputs.coci {
            if Path::new(pattern.as_str()).is_relative() {
                *pattern = base_dir.join(&*pattern).to_string_lossy().into_owned();
            }
        }
        Ok(m)
    }

    /// Checks that inputs exist and the output directory can be created.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Manifest(msg));
        let i = &self.inputs;
        match (&i.applications, &i.cv_dir, &i.sidecar) {
            (Some(_), None, None) => {}
            (None, Some(_), Some(_)) => {}
            (None, Some(_), None) => return bad("cv_dir needs a sidecar table".into()),
            (None, None, _) => return bad("either applications or cv_dir must be given".into()),
            _ => return bad("applications and cv_dir/sidecar are mutually exclusive".into()),
        }
        let files = [
            Some(&i.thresholds),
            i.applications.as_ref(),
            i.sidecar.as_ref(),
            i.rf_list.as_ref(),
            i.doi_fixture.as_ref(),
            i.metadata_fixture.as_ref(),
        ];
        for path in files.into_iter().flatten() {
            if !path.is_file() {
                return bad(format!("{}: no such file", path.display()));
            }
        }
        if let Some(dir) = &i.cv_dir {
            if !dir.is_dir() {
                return bad(format!("{}: no such directory", dir.display()));
            }
        }
        if let Some(cache) = &i.metadata_cache {
            let parent = cache.parent().unwrap_or(Path::new("."));
            if !parent.as_os_str().is_empty() && !parent.is_dir() {
                return bad(format!("{}: parent directory missing", cache.display()));
            }
        }
        for pattern in &i.coci {
            if let Err(e) = glob::Pattern::new(pattern) {
                return bad(format!("bad coci pattern {pattern:?}: {e}"));
            }
        }
        if self.policy.jobs == 0 {
            return bad("policy.jobs must be at least 1".into());
        }
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| PipelineError::Manifest(format!("{}: {e}", self.out_dir.display())))?;
        Ok(())
    }

    /// Files matched by the COCI patterns, sorted and deduplicated.
    pub fn coci_files(&self) -> Vec<PathBuf> {
        let mut files: Vec<PathBuf> = self
            .inputs
            .coci
            .iter()
            .flat_map(|p| {
                let matches: Vec<PathBuf> = glob::glob(p)
                    .map(|paths| paths.filter_map(Result::ok).filter(|p| p.is_file()).collect())
                    .unwrap_or_default();
                if matches.is_empty() {
                    log::warn!("coci pattern {p:?} matched no files");
                }
                matches
            })
            .collect();
        files.sort();
        files.dedup();
        files
    }
}
