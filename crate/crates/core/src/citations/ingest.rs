//! Streaming ingestion with exact distinct-pair deduplication.
//!
//! Worker threads parse dump files and send DOI pairs to a single
//! consumer that interns DOIs to dense ids and buffers each pair as a
//! packed `u64` in a shard chosen by the cited id. Buffers spill to
//! per-shard temp files past a threshold, so resident memory is the
//! interner plus at most one shard at finish time. Each shard is then
//! sorted and deduplicated independently.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::source::for_each_stream;
use super::CitationIndex;
use crate::doi::Doi;

const BATCH: usize = 8192;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("spill storage: {0}")]
    Spill(#[from] io::Error),
    #[error("more than u32::MAX distinct DOIs")]
    TooManyEntities,
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    /// Files parsed concurrently.
    pub jobs: usize,
    pub shards: usize,
    /// Buffered pairs across all shards before spilling to disk.
    pub spill_threshold: usize,
    /// Directory for spill files; the system temp dir when `None`.
    pub temp_dir: Option<PathBuf>,
    /// Also write the deduplicated `citing,cited` edge list here.
    /// Row order follows shard layout and is not canonical.
    pub keep_edges: Option<PathBuf>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            jobs: 4,
            shards: 64,
            spill_threshold: 16 << 20,
            temp_dir: None,
            keep_edges: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub files: usize,
    pub streams: usize,
    pub rows: u64,
    pub malformed_rows: u64,
    pub duplicate_rows: u64,
    pub spilled_pairs: u64,
    /// Files that could not be read, with the error.
    pub unreadable: Vec<(PathBuf, String)>,
}

type Batch = Vec<(Doi, Doi)>;

enum Message {
    Pairs(Batch),
    Malformed(u64),
    Stream,
    Failed(PathBuf, String),
}

struct ColumnMap {
    citing: usize,
    cited: usize,
}

fn parse_stream(
    reader: &mut dyn Read,
    tx: &mpsc::SyncSender<Message>,
) -> io::Result<()> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(io::Error::other)?.clone();
    if headers.is_empty() {
        // empty stream
        return Ok(());
    }
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let cols = match (find("citing"), find("cited")) {
        (Some(citing), Some(cited)) => ColumnMap { citing, cited },
        _ => {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("header lacks citing/cited columns: {headers:?}"),
            ))
        }
    };
    let width = headers.len();

    let mut batch = Vec::with_capacity(BATCH);
    let mut malformed = 0u64;
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(io::Error::other(e)),
            Err(_) => {
                malformed += 1;
                continue;
            }
        }
        if record.len() != width {
            malformed += 1;
            continue;
        }
        match (Doi::parse(&record[cols.citing]), Doi::parse(&record[cols.cited])) {
            (Ok(citing), Ok(cited)) => {
                batch.push((citing, cited));
                if batch.len() == BATCH {
                    send(tx, Message::Pairs(std::mem::replace(&mut batch, Vec::with_capacity(BATCH))))?;
                }
            }
            _ => malformed += 1,
        }
    }
    if !batch.is_empty() {
        send(tx, Message::Pairs(batch))?;
    }
    if malformed > 0 {
        send(tx, Message::Malformed(malformed))?;
    }
    send(tx, Message::Stream)
}

fn send(tx: &mpsc::SyncSender<Message>, msg: Message) -> io::Result<()> {
    tx.send(msg)
        .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "ingest consumer stopped"))
}

struct Interner {
    ids: HashMap<Doi, u32>,
}

impl Interner {
    fn id(&mut self, doi: Doi) -> Result<u32, IngestError> {
        let next = self.ids.len();
        if let Some(&id) = self.ids.get(&doi) {
            return Ok(id);
        }
        let id = u32::try_from(next).map_err(|_| IngestError::TooManyEntities)?;
        self.ids.insert(doi, id);
        Ok(id)
    }
}

struct ShardSpill {
    buffers: Vec<Vec<u64>>,
    files: Vec<Option<BufWriter<File>>>,
    dir: tempfile::TempDir,
    buffered: usize,
    threshold: usize,
    spilled: u64,
}

impl ShardSpill {
    fn new(shards: usize, threshold: usize, temp_dir: Option<&Path>) -> io::Result<Self> {
        let dir = match temp_dir {
            Some(base) => tempfile::Builder::new().prefix("opennsq-ingest").tempdir_in(base)?,
            None => tempfile::Builder::new().prefix("opennsq-ingest").tempdir()?,
        };
        Ok(Self {
            buffers: vec![Vec::new(); shards],
            files: (0..shards).map(|_| None).collect(),
            dir,
            buffered: 0,
            threshold: threshold.max(1),
            spilled: 0,
        })
    }

    fn shard_path(&self, shard: usize) -> PathBuf {
        self.dir.path().join(format!("shard-{shard:04}.bin"))
    }

    fn push(&mut self, citing: u32, cited: u32) -> io::Result<()> {
        let shard = cited as usize % self.buffers.len();
        self.buffers[shard].push((u64::from(cited) << 32) | u64::from(citing));
        self.buffered += 1;
        if self.buffered >= self.threshold {
            self.spill()?;
        }
        Ok(())
    }

    fn spill(&mut self) -> io::Result<()> {
        for shard in 0..self.buffers.len() {
            if self.buffers[shard].is_empty() {
                continue;
            }
            if self.files[shard].is_none() {
                self.files[shard] = Some(BufWriter::new(File::create(self.shard_path(shard))?));
            }
            let writer = self.files[shard].as_mut().expect("opened above");
            for pair in self.buffers[shard].drain(..) {
                writer.write_all(&pair.to_le_bytes())?;
            }
        }
        self.spilled += self.buffered as u64;
        self.buffered = 0;
        Ok(())
    }

    /// Sorted, deduplicated pairs of one shard.
    fn take_shard(&mut self, shard: usize) -> io::Result<Vec<u64>> {
        let mut pairs = std::mem::take(&mut self.buffers[shard]);
        if let Some(mut writer) = self.files[shard].take() {
            writer.flush()?;
            drop(writer);
            let mut reader = BufReader::new(File::open(self.shard_path(shard))?);
            let mut word = [0u8; 8];
            loop {
                match reader.read_exact(&mut word) {
                    Ok(()) => pairs.push(u64::from_le_bytes(word)),
                    Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
                    Err(e) => return Err(e),
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(pairs)
    }
}

/// Builds an index from COCI dump files (raw, gzip or zip).
///
/// A file that cannot be opened or parsed is recorded in
/// [`IngestStats::unreadable`] and ingestion continues with the rest.
pub fn ingest_files(
    paths: &[PathBuf],
    config: &IngestConfig,
) -> Result<(CitationIndex, IngestStats), IngestError> {
    let shards = config.shards.max(1);
    let mut spill = ShardSpill::new(shards, config.spill_threshold, config.temp_dir.as_deref())?;
    let mut interner = Interner { ids: HashMap::new() };
    let mut stats = IngestStats {
        files: paths.len(),
        ..IngestStats::default()
    };
    let jobs = config.jobs.max(1).min(paths.len().max(1));
    let next_file = AtomicUsize::new(0);
    let (tx, rx) = mpsc::sync_channel::<Message>(jobs * 4);
    let consumer_error: Mutex<Option<IngestError>> = Mutex::new(None);

    thread::scope(|scope| {
        for _ in 0..jobs {
            let tx = tx.clone();
            let next_file = &next_file;
            scope.spawn(move || loop {
                let i = next_file.fetch_add(1, Ordering::SeqCst);
                let Some(path) = paths.get(i) else { break };
                let result = for_each_stream(path, |reader| parse_stream(reader, &tx));
                if let Err(e) = result {
                    if e.kind() == io::ErrorKind::BrokenPipe {
                        break;
                    }
                    let _ = tx.send(Message::Failed(path.clone(), e.to_string()));
                }
            });
        }
        drop(tx);

        let mut consume = || -> Result<(), IngestError> {
            for msg in rx.iter() {
                match msg {
                    Message::Pairs(batch) => {
                        stats.rows += batch.len() as u64;
                        for (citing, cited) in batch {
                            let citing = interner.id(citing)?;
                            let cited = interner.id(cited)?;
                            spill.push(citing, cited)?;
                        }
                    }
                    Message::Malformed(n) => {
                        stats.rows += n;
                        stats.malformed_rows += n;
                    }
                    Message::Stream => stats.streams += 1,
                    Message::Failed(path, err) => {
                        log::error!("unreadable dump {}: {err}", path.display());
                        stats.unreadable.push((path, err));
                    }
                }
            }
            Ok(())
        };
        let result = consume();
        // dropping the receiver unblocks and stops the workers
        drop(rx);
        if let Err(e) = result {
            *consumer_error.lock().expect("error slot poisoned") = Some(e);
        }
    });
    if let Some(e) = consumer_error.into_inner().expect("error slot poisoned") {
        return Err(e);
    }
    stats.unreadable.sort();
    stats.spilled_pairs = spill.spilled;

    let entities = interner.ids.len();
    let mut degree = vec![0u64; entities];
    let mut total_edges = 0u64;
    let mut id_to_doi: Option<Vec<&Doi>> = None;
    let mut edges_out = match &config.keep_edges {
        Some(path) => {
            let mut table = vec![None; entities];
            for (doi, &id) in &interner.ids {
                table[id as usize] = Some(doi);
            }
            id_to_doi = Some(table.into_iter().map(|d| d.expect("dense ids")).collect());
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "citing,cited")?;
            Some(w)
        }
        None => None,
    };
    for shard in 0..shards {
        let pairs = spill.take_shard(shard)?;
        total_edges += pairs.len() as u64;
        for pair in pairs {
            let cited = (pair >> 32) as usize;
            degree[cited] += 1;
            if let (Some(w), Some(names)) = (edges_out.as_mut(), id_to_doi.as_ref()) {
                let citing = (pair & 0xffff_ffff) as usize;
                writeln!(w, "{},{}", names[citing], names[cited])?;
            }
        }
    }
    if let Some(mut w) = edges_out {
        w.flush()?;
    }
    drop(id_to_doi);
    let valid_rows = stats.rows - stats.malformed_rows;
    stats.duplicate_rows = valid_rows - total_edges;

    let in_degree: HashMap<Doi, u64> = interner
        .ids
        .into_iter()
        .filter_map(|(doi, id)| {
            let d = degree[id as usize];
            (d > 0).then_some((doi, d))
        })
        .collect();
    Ok((
        CitationIndex::from_parts(in_degree, total_edges, entities as u64),
        stats,
    ))
}
