use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opennsq::assessment::Comparator;
use opennsq::pipeline::{self, Normalization, PipelineError, RunManifest};

#[derive(Parser)]
#[command(name = "opennsq", version, about = "Simulate the bibliometric phase of the national qualification on open data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract and validate DOIs from CVs or an applications file
    Extract(Common),
    /// Fetch publication type and year for every DOI
    Resolve(Common),
    /// Build the citation in-degree index from COCI dump files
    Ingest(Common),
    /// Compute metrics, threshold outcomes and agreement per application
    Evaluate(Common),
    /// Write agreement tables, charts and the run report
    Report(Common),
    /// Run all stages
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Run manifest (TOML)
    #[arg(long)]
    manifest: PathBuf,
    /// Never touch the network
    #[arg(long)]
    offline: bool,
    /// Threshold comparison
    #[arg(long, value_parser = ["ge", "gt"])]
    comparator: Option<String>,
    /// Normalization of A and B
    #[arg(long, value_parser = ["none", "age"])]
    normalization: Option<String>,
    /// Worker threads
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    /// Output directory (overrides the manifest)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn manifest(&self) -> Result<RunManifest, PipelineError> {
        let mut m = RunManifest::load(&self.manifest)?;
        if self.offline {
            m.policy.offline = true;
        }
        if let Some(c) = &self.comparator {
            m.policy.comparator = c.parse::<Comparator>().map_err(PipelineError::Manifest)?;
        }
        if let Some(n) = &self.normalization {
            m.policy.normalization = n.parse::<Normalization>().map_err(PipelineError::Manifest)?;
        }
        if let Some(j) = self.jobs {
            m.policy.jobs = usize::from(j);
        }
        if let Some(out) = &self.out {
            m.out_dir = out.clone();
        }
        m.validate()?;
        Ok(m)
    }
}

fn dispatch(command: &Command) -> Result<(), PipelineError> {
    match command {
        Command::Extract(c) => pipeline::extract(&c.manifest()?).map(drop),
        Command::Resolve(c) => pipeline::resolve(&c.manifest()?).map(drop),
        Command::Ingest(c) => pipeline::ingest(&c.manifest()?).map(drop),
        Command::Evaluate(c) => pipeline::evaluate(&c.manifest()?).map(drop),
        Command::Report(c) => pipeline::report(&c.manifest()?).map(drop),
        Command::Run(c) => pipeline::run(&c.manifest()?).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
