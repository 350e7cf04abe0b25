use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use crate::agreement::{
    aggregate, rank_groups, render_rf_chart, write_long, write_table, AgreementReport, GroupKey,
    Grouping, LabeledAgreement, Tally,
};
use crate::assessment::{compare, evaluate as assess, AgreementRecord, OfficialOutcome};
use crate::citations::{ingest_files, CitationIndex, IngestConfig};
use crate::doi::Doi;
use crate::harvest::{
    extract_dois, validate_dois, DoiProxyResolver, ExistenceOracle, FixtureResolver, RetryPolicy,
};
use crate::http::UreqTransport;
use crate::metadata::{
    ClientConfig, CrossrefSource, FixtureStore, MetadataCache, MetadataClient, PublicationRecord,
    Resolution, WorkSource,
};
use crate::metrics::{compute_metrics_detailed, ApplicationError, CandidateApplication, MetricValues};
use crate::taxonomy::{FieldCatalog, Level, RecruitmentField, ThresholdTable};

use super::{
    ensure_dir, read_jsonl, write_json, write_jsonl, write_stage_report, PipelineError, RunManifest,
    RunReport, Stage, StageContext, APPLICATIONS_FILE, EXTRACTION_FILE, INDEX_FILE, RECORDS_FILE,
    RESULTS_FILE, RUN_REPORT_FILE,
};

// ---------------------------------------------------------------- extract

/// One line of a pre-extracted applications file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplicationInput {
    app_id: String,
    rf: String,
    level: String,
    session_year: i32,
    #[serde(default)]
    dois: Vec<String>,
    #[serde(default)]
    official: Option<MetricValues>,
    #[serde(default)]
    official_passed: Option<bool>,
}

#[derive(Debug, Deserialize)]
struct SidecarRow {
    app_id: String,
    rf: String,
    level: String,
    session_year: i32,
    official_a: Option<f64>,
    official_b: Option<f64>,
    official_c: Option<f64>,
    official_passed: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExtractionLine {
    app_id: String,
    raw_hits: usize,
    repaired: usize,
    dois: Vec<Doi>,
    rejected: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RejectedApplication {
    pub app_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExtractReport {
    pub cvs_read: usize,
    /// CV files with no sidecar row.
    pub orphan_cvs: Vec<String>,
    pub applications_read: usize,
    pub applications_accepted: usize,
    pub non_citation_rejected: usize,
    pub rejected: Vec<RejectedApplication>,
    /// Recruitment fields absent from the field list (kept, but suspicious).
    pub unknown_fields: Vec<String>,
    pub raw_hits: usize,
    pub repaired: usize,
    pub malformed: usize,
    /// Unique DOIs over all accepted applications.
    pub dois_extracted: usize,
    pub dois_valid: usize,
    pub dois_invalid: usize,
    pub dois_unknown: usize,
    /// `fixture`, `resolver` or `skipped`.
    pub validation: String,
    pub zero_doi_applications: usize,
    pub seconds: f64,
}

struct Pending {
    app_id: String,
    rf: String,
    level: String,
    session_year: i32,
    dois: Vec<Doi>,
    official: Option<MetricValues>,
    official_passed: Option<bool>,
}

fn read_list_applications(path: &Path, report: &mut ExtractReport) -> anyhow::Result<(Vec<Pending>, Vec<ExtractionLine>)> {
    let inputs: Vec<ApplicationInput> = read_jsonl(path)?;
    let mut pending = Vec::with_capacity(inputs.len());
    let mut lines = Vec::with_capacity(inputs.len());
    for input in inputs {
        let mut dois = Vec::new();
        let mut rejected = Vec::new();
        for raw in &input.dois {
            match Doi::parse(raw) {
                Ok(d) => dois.push(d),
                Err(_) => rejected.push(raw.clone()),
            }
        }
        report.raw_hits += input.dois.len();
        report.malformed += rejected.len();
        lines.push(ExtractionLine {
            app_id: input.app_id.clone(),
            raw_hits: input.dois.len(),
            repaired: 0,
            dois: dois.clone(),
            rejected,
        });
        pending.push(Pending {
            app_id: input.app_id,
            rf: input.rf,
            level: input.level,
            session_year: input.session_year,
            dois,
            official: input.official,
            official_passed: input.official_passed,
        });
    }
    Ok((pending, lines))
}

fn read_cv_applications(
    cv_dir: &Path,
    sidecar: &Path,
    report: &mut ExtractReport,
) -> anyhow::Result<(Vec<Pending>, Vec<ExtractionLine>)> {
    let mut cvs = BTreeSet::new();
    for entry in fs::read_dir(cv_dir).with_context(|| cv_dir.display().to_string())? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                cvs.insert(stem.to_string());
            }
        }
    }
    report.cvs_read = cvs.len();

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(sidecar)
        .with_context(|| sidecar.display().to_string())?;
    let mut pending = Vec::new();
    let mut lines = Vec::new();
    let mut listed = HashSet::new();
    for (i, row) in reader.deserialize::<SidecarRow>().enumerate() {
        let row = row.with_context(|| format!("{} row {}", sidecar.display(), i + 2))?;
        listed.insert(row.app_id.clone());
        if !cvs.contains(&row.app_id) {
            report.rejected.push(RejectedApplication {
                app_id: row.app_id,
                reason: "no CV file".into(),
            });
            continue;
        }
        let cv_path = cv_dir.join(format!("{}.txt", row.app_id));
        let bytes = fs::read(&cv_path).with_context(|| cv_path.display().to_string())?;
        let text = String::from_utf8_lossy(&bytes);
        let found = extract_dois(&text);
        report.raw_hits += found.raw_hits;
        report.repaired += found.repaired;
        report.malformed += found.rejected.len();
        lines.push(ExtractionLine {
            app_id: row.app_id.clone(),
            raw_hits: found.raw_hits,
            repaired: found.repaired,
            dois: found.dois.clone(),
            rejected: found.rejected.iter().map(|r| r.text.clone()).collect(),
        });
        let official = match (row.official_a, row.official_b, row.official_c) {
            (Some(a), Some(b), Some(c)) => Some(MetricValues { a, b, c }),
            _ => None,
        };
        pending.push(Pending {
            app_id: row.app_id,
            rf: row.rf,
            level: row.level,
            session_year: row.session_year,
            dois: found.dois,
            official,
            official_passed: row.official_passed,
        });
    }
    report.orphan_cvs = cvs.into_iter().filter(|c| !listed.contains(c)).collect();
    for orphan in &report.orphan_cvs {
        log::warn!("CV {orphan} has no sidecar row; skipped");
    }
    Ok((pending, lines))
}

fn existence_oracle(manifest: &RunManifest) -> anyhow::Result<Option<(Box<dyn ExistenceOracle>, &'static str)>> {
    if let Some(path) = &manifest.inputs.doi_fixture {
        let file = File::open(path).with_context(|| path.display().to_string())?;
        let oracle = FixtureResolver::from_reader(BufReader::new(file))?;
        return Ok(Some((Box::new(oracle), "fixture")));
    }
    if manifest.resolver.enabled && !manifest.policy.offline {
        let transport = UreqTransport::new(Duration::from_secs(manifest.crossref.timeout_secs));
        let oracle = DoiProxyResolver::new(transport, manifest.resolver.base_url.clone());
        return Ok(Some((Box::new(oracle), "resolver")));
    }
    Ok(None)
}

/// Reads applications (CVs or a DOI list), extracts and validates DOIs,
/// and writes the accepted applications.
pub fn extract(manifest: &RunManifest) -> Result<ExtractReport, PipelineError> {
    const S: Stage = Stage::Extract;
    let start = Instant::now();
    ensure_dir(&manifest.out_dir).stage(S)?;
    let inputs = &manifest.inputs;
    let catalog = match &inputs.rf_list {
        Some(path) => FieldCatalog::from_reader(File::open(path).stage(S)?).stage(S)?,
        None => FieldCatalog::shipped(),
    };

    let mut report = ExtractReport::default();
    let (pending, mut lines) = match (&inputs.applications, &inputs.cv_dir, &inputs.sidecar) {
        (Some(path), _, _) => read_list_applications(path, &mut report),
        (None, Some(dir), Some(sidecar)) => read_cv_applications(dir, sidecar, &mut report),
        _ => Err(anyhow!("no application input configured")),
    }
    .stage(S)?;
    report.applications_read = pending.len() + report.rejected.len();

    let mut seen = HashSet::new();
    let mut apps = Vec::with_capacity(pending.len());
    let mut unknown_fields = BTreeSet::new();
    for p in pending {
        if !seen.insert(p.app_id.clone()) {
            return Err(anyhow!("duplicate application id {:?}", p.app_id)).stage(S);
        }
        let parsed = p
            .rf
            .parse::<RecruitmentField>()
            .map_err(|e| e.to_string())
            .and_then(|rf| Ok((rf, p.level.parse::<Level>().map_err(|e| e.to_string())?)));
        let (rf, level) = match parsed {
            Ok(v) => v,
            Err(reason) => {
                report.rejected.push(RejectedApplication { app_id: p.app_id, reason });
                continue;
            }
        };
        if !catalog.contains(&rf) {
            unknown_fields.insert(rf.code());
        }
        match CandidateApplication::new(p.app_id.clone(), rf, level, p.session_year, p.dois) {
            Ok(app) => apps.push(app.with_official(p.official, p.official_passed)),
            Err(e) => {
                if matches!(e, ApplicationError::NonCitationField { .. }) {
                    report.non_citation_rejected += 1;
                }
                report.rejected.push(RejectedApplication {
                    app_id: p.app_id,
                    reason: e.to_string(),
                });
            }
        }
    }
    for code in &unknown_fields {
        log::warn!("recruitment field {code} is not in the field list");
    }
    report.unknown_fields = unknown_fields.into_iter().collect();

    let unique: Vec<Doi> = apps
        .iter()
        .flat_map(|a| a.dois.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    report.dois_extracted = unique.len();
    let invalid: HashSet<Doi> = match existence_oracle(manifest).stage(S)? {
        Some((oracle, kind)) => {
            let policy = RetryPolicy {
                max_attempts: manifest.resolver.max_attempts,
                backoff: Duration::from_millis(manifest.resolver.backoff_ms),
            };
            let v = validate_dois(&unique, oracle.as_ref(), &policy, manifest.policy.jobs);
            report.validation = kind.into();
            report.dois_valid = v.valid.len();
            report.dois_unknown = v.unknown.len();
            report.dois_invalid = v.invalid.len();
            v.invalid.into_iter().collect()
        }
        None => {
            report.validation = "skipped".into();
            report.dois_unknown = unique.len();
            HashSet::new()
        }
    };
    for app in &mut apps {
        app.dois.retain(|d| !invalid.contains(d));
    }

    apps.sort_by(|a, b| a.app_id.cmp(&b.app_id));
    lines.sort_by(|a, b| a.app_id.cmp(&b.app_id));
    report.applications_accepted = apps.len();
    report.zero_doi_applications = apps.iter().filter(|a| a.dois.is_empty()).count();
    report.rejected.sort_by(|a, b| a.app_id.cmp(&b.app_id));

    let out = &manifest.out_dir;
    write_jsonl(&out.join(EXTRACTION_FILE), &lines).stage(S)?;
    write_jsonl(&out.join(APPLICATIONS_FILE), &apps).stage(S)?;
    report.seconds = start.elapsed().as_secs_f64();
    write_stage_report(out, S, &report).stage(S)?;
    log::info!(
        "extract: {} applications, {} unique DOIs ({} invalid)",
        apps.len(),
        report.dois_extracted,
        report.dois_invalid
    );
    Ok(report)
}

// ---------------------------------------------------------------- resolve

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordLine {
    doi: Doi,
    #[serde(flatten)]
    resolution: Resolution,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResolveReport {
    pub dois: usize,
    pub found: usize,
    pub not_found: usize,
    pub failed: usize,
    pub undated: usize,
    pub cache_hits: usize,
    pub source: String,
    pub seconds: f64,
}

fn load_applications(out_dir: &Path) -> anyhow::Result<Vec<CandidateApplication>> {
    read_jsonl(&out_dir.join(APPLICATIONS_FILE)).context("run the extract stage first")
}

/// Looks up publication type and year for every DOI in the applications.
pub fn resolve(manifest: &RunManifest) -> Result<ResolveReport, PipelineError> {
    const S: Stage = Stage::Resolve;
    let start = Instant::now();
    let out = &manifest.out_dir;
    let apps = load_applications(out).stage(S)?;
    let dois: BTreeSet<Doi> = apps.iter().flat_map(|a| a.dois.iter().cloned()).collect();

    let (source, kind): (Box<dyn WorkSource>, &str) = match &manifest.inputs.metadata_fixture {
        Some(path) => {
            let file = File::open(path).with_context(|| path.display().to_string()).stage(S)?;
            (Box::new(FixtureStore::from_reader(BufReader::new(file)).stage(S)?), "fixture")
        }
        None => {
            let cfg = &manifest.crossref;
            let transport = UreqTransport::new(Duration::from_secs(cfg.timeout_secs));
            (
                Box::new(CrossrefSource::new(transport, cfg.base_url.clone(), cfg.mailto.as_deref())),
                "crossref",
            )
        }
    };
    let cache = match &manifest.inputs.metadata_cache {
        Some(path) => MetadataCache::open(path).stage(S)?,
        None => MetadataCache::in_memory(),
    };
    let cfg = &manifest.crossref;
    let config = ClientConfig {
        rate_limit: cfg.rate_limit,
        retry_budget: cfg.retry_budget,
        backoff: Duration::from_millis(cfg.backoff_ms),
        offline: manifest.policy.offline,
        validity: cfg.cache_days.map(|d| Duration::from_secs(d * 86_400)),
        jobs: manifest.policy.jobs,
        ..ClientConfig::default()
    };
    let client = MetadataClient::new(source, cache, config);
    let result = client.fetch_all(&dois);
    client.cache().flush().stage(S)?;

    let lines: Vec<RecordLine> = result
        .resolutions
        .into_iter()
        .map(|(doi, resolution)| RecordLine { doi, resolution })
        .collect();
    write_jsonl(&out.join(RECORDS_FILE), &lines).stage(S)?;
    let c = result.counts;
    let report = ResolveReport {
        dois: dois.len(),
        found: c.found,
        not_found: c.not_found,
        failed: c.failed,
        undated: c.undated,
        cache_hits: c.cache_hits,
        source: kind.into(),
        seconds: start.elapsed().as_secs_f64(),
    };
    write_stage_report(out, S, &report).stage(S)?;
    log::info!("resolve: {} found, {} not found, {} failed", c.found, c.not_found, c.failed);
    Ok(report)
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub files: usize,
    pub streams: usize,
    pub rows: u64,
    pub malformed_rows: u64,
    pub duplicate_rows: u64,
    pub edges: u64,
    pub entities: u64,
    pub cited_dois: usize,
    pub unreadable: Vec<(String, String)>,
    pub seconds: f64,
}

/// Builds the in-degree index from the COCI files and writes a snapshot.
pub fn ingest(manifest: &RunManifest) -> Result<IngestReport, PipelineError> {
    const S: Stage = Stage::Ingest;
    let start = Instant::now();
    let out = &manifest.out_dir;
    ensure_dir(out).stage(S)?;
    let files = manifest.coci_files();
    let config = IngestConfig {
        jobs: manifest.policy.jobs,
        ..IngestConfig::default()
    };
    let (index, stats) = ingest_files(&files, &config).stage(S)?;
    let mut w = BufWriter::new(File::create(out.join(INDEX_FILE)).stage(S)?);
    index.write_snapshot(&mut w).stage(S)?;

    let report = IngestReport {
        files: stats.files,
        streams: stats.streams,
        rows: stats.rows,
        malformed_rows: stats.malformed_rows,
        duplicate_rows: stats.duplicate_rows,
        edges: index.total_edges(),
        entities: index.total_entities(),
        cited_dois: index.cited_count(),
        unreadable: stats
            .unreadable
            .iter()
            .map(|(p, e)| (p.display().to_string(), e.clone()))
            .collect(),
        seconds: start.elapsed().as_secs_f64(),
    };
    write_stage_report(out, S, &report).stage(S)?;
    log::info!("ingest: {} edges from {} files", report.edges, report.files);
    Ok(report)
}

// ---------------------------------------------------------------- evaluate

/// One line of the per-application results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub app_id: String,
    pub rf: RecruitmentField,
    pub level: Level,
    pub session_year: i32,
    pub dois: usize,
    pub found: usize,
    pub windowed: usize,
    pub scientific_age: u32,
    pub a: f64,
    pub b: f64,
    pub c: u32,
    pub t_a: f64,
    pub t_b: f64,
    pub t_c: f64,
    pub exceeds_a: bool,
    pub exceeds_b: bool,
    pub exceeds_c: bool,
    pub passed: bool,
    pub official_a: Option<f64>,
    pub official_b: Option<f64>,
    pub official_c: Option<f64>,
    pub official_passed: Option<bool>,
    pub agree_a: Option<bool>,
    pub agree_b: Option<bool>,
    pub agree_c: Option<bool>,
    pub agree_overall: Option<bool>,
    pub official_discrepancy: Option<bool>,
}

pub const RESULT_COLUMNS: [&str; 27] = [
    "app_id", "rf", "level", "session_year", "dois", "found", "windowed", "scientific_age", "a", "b", "c",
    "t_a", "t_b", "t_c", "exceeds_a", "exceeds_b", "exceeds_c", "passed", "official_a", "official_b",
    "official_c", "official_passed", "agree_a", "agree_b", "agree_c", "agree_overall",
    "official_discrepancy",
];

impl ResultRow {
    pub fn agreement(&self) -> Option<AgreementRecord> {
        Some(AgreementRecord {
            app_id: self.app_id.clone(),
            per_metric: [self.agree_a, self.agree_b, self.agree_c],
            overall: self.agree_overall?,
            official_passed: self.official_passed?,
            official_discrepancy: self.official_discrepancy.unwrap_or(false),
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub applications: usize,
    pub evaluated: usize,
    pub passed: usize,
    pub zero_doi_applications: usize,
    pub missing_thresholds: Vec<String>,
    pub missing_official: Vec<String>,
    pub official_discrepancies: Vec<String>,
    pub comparator: String,
    pub normalization: String,
    pub seconds: f64,
}

fn load_records(out_dir: &Path) -> anyhow::Result<BTreeMap<Doi, PublicationRecord>> {
    let lines: Vec<RecordLine> = read_jsonl(&out_dir.join(RECORDS_FILE)).context("run the resolve stage first")?;
    Ok(lines
        .into_iter()
        .filter_map(|l| match l.resolution {
            Resolution::Found { record } => Some((l.doi, record)),
            _ => None,
        })
        .collect())
}

fn load_index(out_dir: &Path) -> anyhow::Result<CitationIndex> {
    let path = out_dir.join(INDEX_FILE);
    let file = File::open(&path).with_context(|| format!("{}: run the ingest stage first", path.display()))?;
    Ok(CitationIndex::read_snapshot(BufReader::new(file))?)
}

/// Applies `f` to every item on up to `jobs` threads, keeping input order.
fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|batch| scope.spawn(move || batch.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    })
}

enum Outcome {
    Row(Box<ResultRow>),
    MissingThresholds(String),
}

/// Computes metrics, threshold outcomes and agreement for every
/// application and writes the results file, sorted by application id.
pub fn evaluate(manifest: &RunManifest) -> Result<EvaluateReport, PipelineError> {
    const S: Stage = Stage::Evaluate;
    let start = Instant::now();
    let out = &manifest.out_dir;
    let apps = load_applications(out).stage(S)?;
    let records = load_records(out).stage(S)?;
    let index = load_index(out).stage(S)?;
    let path = &manifest.inputs.thresholds;
    let thresholds = File::open(path)
        .map_err(anyhow::Error::from)
        .and_then(|f| Ok(ThresholdTable::from_reader(f)?))
        .with_context(|| path.display().to_string())
        .stage(S)?;
    let policy = manifest.policy.normalization.policy();
    let cmp = manifest.policy.comparator;

    let outcomes = par_map(&apps, manifest.policy.jobs, |app| {
        let Ok(t) = thresholds.lookup(app.rf, app.level, Some(app.session_year)) else {
            return Outcome::MissingThresholds(app.app_id.clone());
        };
        let breakdown = compute_metrics_detailed(app, &records, &index, &policy);
        let m = breakdown.metrics;
        let sim = assess(m.as_array(), &t, cmp);
        let official = OfficialOutcome {
            metrics: app.official_metrics,
            passed: app.official_passed,
        };
        let agreement = compare(&app.app_id, &sim, &official, &t, cmp).ok();
        Outcome::Row(Box::new(ResultRow {
            app_id: app.app_id.clone(),
            rf: app.rf,
            level: app.level,
            session_year: app.session_year,
            dois: breakdown.dois,
            found: breakdown.found,
            windowed: breakdown.windowed,
            scientific_age: breakdown.scientific_age,
            a: m.a_journals,
            b: m.b_citations,
            c: m.c_hindex,
            t_a: t.t_a,
            t_b: t.t_b,
            t_c: t.t_c,
            exceeds_a: sim.exceeds[0],
            exceeds_b: sim.exceeds[1],
            exceeds_c: sim.exceeds[2],
            passed: sim.passed,
            official_a: app.official_metrics.map(|v| v.a),
            official_b: app.official_metrics.map(|v| v.b),
            official_c: app.official_metrics.map(|v| v.c),
            official_passed: agreement.as_ref().map(|r| r.official_passed),
            agree_a: agreement.as_ref().and_then(|r| r.per_metric[0]),
            agree_b: agreement.as_ref().and_then(|r| r.per_metric[1]),
            agree_c: agreement.as_ref().and_then(|r| r.per_metric[2]),
            agree_overall: agreement.as_ref().map(|r| r.overall),
            official_discrepancy: agreement.as_ref().map(|r| r.official_discrepancy),
        }))
    });

    let mut report = EvaluateReport {
        applications: apps.len(),
        comparator: cmp.to_string(),
        normalization: format!("{:?}", manifest.policy.normalization).to_lowercase(),
        ..EvaluateReport::default()
    };
    let mut rows = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Outcome::Row(row) => rows.push(*row),
            Outcome::MissingThresholds(id) => {
                log::warn!("{id}: no thresholds for its field and level");
                report.missing_thresholds.push(id);
            }
        }
    }
    rows.sort_by(|a, b| a.app_id.cmp(&b.app_id));
    for row in &rows {
        report.evaluated += 1;
        report.passed += usize::from(row.passed);
        report.zero_doi_applications += usize::from(row.dois == 0);
        if row.agree_overall.is_none() {
            report.missing_official.push(row.app_id.clone());
        }
        if row.official_discrepancy == Some(true) {
            report.official_discrepancies.push(row.app_id.clone());
        }
    }
    write_results(&out.join(RESULTS_FILE), &rows).stage(S)?;
    report.seconds = start.elapsed().as_secs_f64();
    write_stage_report(out, S, &report).stage(S)?;
    log::info!("evaluate: {} evaluated, {} passed", report.evaluated, report.passed);
    Ok(report)
}

fn write_results(path: &Path, rows: &[ResultRow]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(File::create(path)?));
    w.write_record(RESULT_COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a results file written by the evaluate stage.
pub fn read_results(path: &Path) -> anyhow::Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| path.display().to_string())?;
    let rows = reader.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: Level,
    pub overall: Tally,
    pub pct_overall: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportSummary {
    pub results: usize,
    pub agreement_records: usize,
    pub groups_level: usize,
    pub groups_sa: usize,
    pub groups_rf: usize,
    pub charts: usize,
    pub levels: Vec<LevelSummary>,
    pub seconds: f64,
}

fn write_csv_file(path: &Path, f: impl FnOnce(BufWriter<File>) -> std::io::Result<()>) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| path.display().to_string())?;
    f(BufWriter::new(file))?;
    Ok(())
}

fn write_ranking(path: &Path, reports: &[AgreementReport]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["level", "rank", "group", "agree", "n", "pct"])?;
    for level in Level::ALL {
        let scoped: Vec<AgreementReport> = reports.iter().filter(|r| r.key.level() == level).copied().collect();
        for (i, r) in rank_groups(&scoped).iter().enumerate() {
            w.write_record([
                level.as_str(),
                &(i + 1).to_string(),
                &r.key.label(),
                &r.overall.agree.to_string(),
                &r.overall.n.to_string(),
                &r.overall.pct().map(|p| format!("{p:.2}")).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Aggregates agreement by level, SA and RF, writes the tables (and
/// charts), and assembles the run report.
pub fn report(manifest: &RunManifest) -> Result<RunReport, PipelineError> {
    const S: Stage = Stage::Report;
    let start = Instant::now();
    let out = &manifest.out_dir;
    let rows = read_results(&out.join(RESULTS_FILE))
        .context("run the evaluate stage first")
        .stage(S)?;
    let labeled: Vec<LabeledAgreement> = rows
        .iter()
        .filter_map(|r| {
            r.agreement().map(|record| LabeledAgreement {
                level: r.level,
                rf: r.rf,
                record,
            })
        })
        .collect();

    let by_level = aggregate(&labeled, Grouping::Level);
    let by_sa = aggregate(&labeled, Grouping::LevelSa);
    let by_rf = aggregate(&labeled, Grouping::LevelRf);

    write_csv_file(&out.join("agreement_level.csv"), |w| write_table(w, &by_level)).stage(S)?;
    for level in Level::ALL {
        let tag = level.as_str().to_lowercase();
        for (name, reports) in [("sa", &by_sa), ("rf", &by_rf)] {
            let scoped: Vec<AgreementReport> =
                reports.iter().filter(|r| r.key.level() == level).copied().collect();
            let path = out.join(format!("agreement_{name}_{tag}.csv"));
            write_csv_file(&path, |w| write_table(w, &scoped)).stage(S)?;
        }
    }
    let all: Vec<AgreementReport> = by_level.iter().chain(&by_sa).chain(&by_rf).copied().collect();
    write_csv_file(&out.join("agreement_long.csv"), |w| write_long(w, &all)).stage(S)?;
    write_ranking(&out.join("ranking_sa.csv"), &by_sa).stage(S)?;

    let mut charts = 0;
    if manifest.policy.charts {
        let dir = out.join("charts");
        ensure_dir(&dir).stage(S)?;
        let fields: BTreeSet<RecruitmentField> = by_rf
            .iter()
            .filter_map(|r| match r.key {
                GroupKey::LevelRf(_, rf) => Some(rf),
                _ => None,
            })
            .collect();
        for rf in fields {
            if let Some(svg) = render_rf_chart(rf, &by_rf) {
                let name = format!("{:02}-{}{}.svg", rf.sa(), rf.group(), rf.field());
                fs::write(dir.join(name), svg).stage(S)?;
                charts += 1;
            }
        }
    }

    let summary = ReportSummary {
        results: rows.len(),
        agreement_records: labeled.len(),
        groups_level: by_level.len(),
        groups_sa: by_sa.len(),
        groups_rf: by_rf.len(),
        charts,
        levels: by_level
            .iter()
            .map(|r| LevelSummary {
                level: r.key.level(),
                overall: r.overall,
                pct_overall: r.overall.pct(),
            })
            .collect(),
        seconds: start.elapsed().as_secs_f64(),
    };
    write_stage_report(out, S, &summary).stage(S)?;
    let run_report = RunReport::collect(out).stage(S)?;
    write_json(&out.join(RUN_REPORT_FILE), &run_report).stage(S)?;
    for l in &summary.levels {
        log::info!(
            "report: {} overall agreement {}/{}",
            l.level,
            l.overall.agree,
            l.overall.n
        );
    }
    Ok(run_report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn result_columns_match_serialized_header() {
        let row = ResultRow {
            app_id: "x".into(),
            rf: "01/A1".parse().unwrap(),
            level: Level::FullProfessor,
            session_year: 2016,
            dois: 0,
            found: 0,
            windowed: 0,
            scientific_age: 1,
            a: 0.0,
            b: 0.0,
            c: 0,
            t_a: 1.0,
            t_b: 1.0,
            t_c: 1.0,
            exceeds_a: false,
            exceeds_b: false,
            exceeds_c: false,
            passed: false,
            official_a: None,
            official_b: None,
            official_c: None,
            official_passed: Some(false),
            agree_a: None,
            agree_b: None,
            agree_c: None,
            agree_overall: Some(true),
            official_discrepancy: Some(false),
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(&row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULT_COLUMNS.join(","));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results(&path, std::slice::from_ref(&row)).unwrap();
        assert_eq!(read_results(&path).unwrap(), vec![row]);
    }

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<u32> = (0..103).collect();
        assert_eq!(par_map(&items, 7, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
