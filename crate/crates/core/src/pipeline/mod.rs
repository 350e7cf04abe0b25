//! End-to-end run: extract, resolve, ingest, evaluate, report. Each stage
//! reads the previous stage's artifacts from the output directory, so any
//! stage can be rerun on its own.

mod manifest;
mod stages;

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{CrossrefConfig, Inputs, Normalization, Policy, ResolverConfig, RunManifest};
pub use stages::{
    evaluate, extract, ingest, read_results, report, resolve, EvaluateReport, ExtractReport, IngestReport,
    LevelSummary, RejectedApplication, ReportSummary, ResolveReport, ResultRow, RESULT_COLUMNS,
};

pub const EXTRACTION_FILE: &str = "extraction.jsonl";
pub const APPLICATIONS_FILE: &str = "applications.jsonl";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const INDEX_FILE: &str = "citations.idx";
pub const RESULTS_FILE: &str = "results.csv";
pub const RUN_REPORT_FILE: &str = "run_report.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("{stage} failed: {source:#}")]
    Stage {
        stage: Stage,
        #[source]
        source: anyhow::Error,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Manifest(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Resolve,
    Ingest,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Extract, Stage::Resolve, Stage::Ingest, Stage::Evaluate, Stage::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Resolve => "resolve",
            Stage::Ingest => "ingest",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    fn report_file(self) -> String {
        format!("stage_{}.json", self.as_str())
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {}", self.as_str())
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<anyhow::Error>> StageContext<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::Stage {
            stage,
            source: e.into(),
        })
    }
}

/// Bookkeeping for a whole run; stages not yet run are `None`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub extract: Option<ExtractReport>,
    pub resolve: Option<ResolveReport>,
    pub ingest: Option<IngestReport>,
    pub evaluate: Option<EvaluateReport>,
    pub report: Option<ReportSummary>,
}

impl RunReport {
    /// Collects the per-stage reports found in `out_dir`.
    pub fn collect(out_dir: &Path) -> anyhow::Result<Self> {
        fn load<T: DeserializeOwned>(out_dir: &Path, stage: Stage) -> anyhow::Result<Option<T>> {
            let path = out_dir.join(stage.report_file());
            if !path.exists() {
                return Ok(None);
            }
            Ok(Some(serde_json::from_reader(BufReader::new(File::open(path)?))?))
        }
        Ok(Self {
            extract: load(out_dir, Stage::Extract)?,
            resolve: load(out_dir, Stage::Resolve)?,
            ingest: load(out_dir, Stage::Ingest)?,
            evaluate: load(out_dir, Stage::Evaluate)?,
            report: load(out_dir, Stage::Report)?,
        })
    }
}

pub(crate) fn write_stage_report<T: Serialize>(out_dir: &Path, stage: Stage, report: &T) -> anyhow::Result<()> {
    write_json(&out_dir.join(stage.report_file()), report)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = File::open(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

/// Runs all five stages in order.
pub fn run(manifest: &RunManifest) -> Result<RunReport, PipelineError> {
    manifest.validate()?;
    extract(manifest)?;
    resolve(manifest)?;
    ingest(manifest)?;
    evaluate(manifest)?;
    report(manifest)
}

/// Output directory artifacts, in stage order.
pub fn artifacts(out_dir: &Path) -> Vec<PathBuf> {
    [EXTRACTION_FILE, APPLICATIONS_FILE, RECORDS_FILE, INDEX_FILE, RESULTS_FILE, RUN_REPORT_FILE]
        .iter()
        .map(|f| out_dir.join(f))
        .collect()
}

pub(crate) fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| anyhow::anyhow!("{}: {e}", dir.display()))
}
