#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn copy_dir(src: &Path, dst: &Path) {
    fs::create_dir_all(dst).unwrap();
    for entry in fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let target = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

pub const COCI_HEADER: &str = "oci,citing,cited,creation,timespan,journal_sc,author_sc";

fn coci_line(i: usize, citing: &str, cited: &str) -> String {
    format!("02{i:08}-03{i:08},{citing},{cited},2019-03,P2Y,no,no\n")
}

/// Synthetic COCI rows (citing, cited) over `targets` plus filler DOIs.
/// About 10% of rows repeat an earlier pair, some with different case.
pub fn synthetic_edges(targets: &[String], rows: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filler: Vec<String> = (0..2_000).map(|i| format!("10.7777/syn.{i}")).collect();
    let mut out: Vec<(String, String)> = Vec::with_capacity(rows);
    while out.len() < rows {
        if !out.is_empty() && rng.random_bool(0.1) {
            let (a, b) = out[rng.random_range(0..out.len())].clone();
            let b = if rng.random_bool(0.5) { b.to_uppercase() } else { b };
            out.push((a, b));
            continue;
        }
        let citing = if rng.random_bool(0.05) {
            targets[rng.random_range(0..targets.len())].clone()
        } else {
            filler[rng.random_range(0..filler.len())].clone()
        };
        let cited = if rng.random_bool(0.4) {
            // skewed so that some targets collect many citations
            let i = rng.random_range(0..targets.len());
            let j = rng.random_range(0..=i);
            targets[j].clone()
        } else {
            filler[rng.random_range(0..filler.len())].clone()
        };
        out.push((citing, cited));
    }
    out.shuffle(&mut rng);
    out
}

/// Writes the rows as a plain CSV (first `split` rows) and a gzipped CSV.
pub fn write_coci(dir: &Path, rows: &[(String, String)], split: usize) {
    fs::create_dir_all(dir).unwrap();
    let mut plain = String::from(COCI_HEADER);
    plain.push('\n');
    for (i, (a, b)) in rows[..split].iter().enumerate() {
        plain.push_str(&coci_line(i, a, b));
    }
    fs::write(dir.join("part-0.csv"), plain).unwrap();

    let mut gz = GzEncoder::new(File::create(dir.join("part-1.csv.gz")).unwrap(), Compression::default());
    writeln!(gz, "{COCI_HEADER}").unwrap();
    for (i, (a, b)) in rows[split..].iter().enumerate() {
        gz.write_all(coci_line(split + i, a, b).as_bytes()).unwrap();
    }
    gz.finish().unwrap();
}

// ------------------------------------------------------------ oracles

/// Largest h with at least h counts >= h, by trying every h.
pub fn definitional_h(counts: &[u64]) -> u32 {
    let mut best = 0;
    for h in 0..=counts.len() {
        let mut at_least = 0;
        for &c in counts {
            if c >= h as u64 {
                at_least += 1;
            }
        }
        if at_least >= h {
            best = h;
        }
    }
    best as u32
}

/// Distinct citing DOIs for `cited`, by scanning every row.
pub fn nested_loop_in_degree(rows: &[(String, String)], cited: &str) -> u64 {
    let mut citing: Vec<String> = Vec::new();
    for (a, b) in rows {
        if b.to_lowercase() == cited {
            let a = a.to_lowercase();
            if !citing.contains(&a) {
                citing.push(a);
            }
        }
    }
    citing.len() as u64
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            let hex = &s[i + 1..i + 3];
            if let Ok(v) = u8::from_str_radix(hex, 16) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8(out).unwrap()
}

fn is_list_marker(token: &str) -> bool {
    let body = token.trim_end_matches(['.', ')']);
    body.len() < token.len() && !body.is_empty() && body.chars().all(|c| c.is_ascii_digit())
}

fn starts_doi_at(token: &str, i: usize) -> bool {
    let b = token.as_bytes();
    if !token[i..].starts_with("10.") {
        return false;
    }
    if i > 0 && (b[i - 1].is_ascii_alphanumeric() || b[i - 1] == b'.') {
        return false;
    }
    let digits = token[i + 3..].chars().take_while(char::is_ascii_digit).count();
    digits >= 4 && token[i + 3 + digits..].starts_with('/')
}

/// Plain scan written for the fixture corpus conventions: DOIs are
/// whitespace-free tokens; a DOI cut after `.`, `-` or `/` continues with
/// the first token of the next line unless that token is a list marker
/// or a word.
pub fn naive_scan(text: &str) -> Vec<String> {
    naive_scan_counted(text).0
}

/// Also returns how many DOIs were rejoined across a line break and how
/// many contained percent escapes.
pub fn naive_scan_counted(text: &str) -> (Vec<String>, usize, usize) {
    let mut joined = 0;
    let mut encoded = 0;
    let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
    let mut found: Vec<String> = Vec::new();
    for (li, tokens) in lines.iter().enumerate() {
        for (ti, token) in tokens.iter().enumerate() {
            let decoded = percent_decode(token);
            let Some(start) = (0..decoded.len()).find(|&i| decoded.is_char_boundary(i) && starts_doi_at(&decoded, i)) else {
                continue;
            };
            if token.contains('%') {
                encoded += 1;
            }
            let mut doi = decoded[start..].to_string();
            let last_on_line = ti + 1 == tokens.len();
            if last_on_line && doi.ends_with(['.', '-', '/']) {
                if let Some(next) = lines.get(li + 1).and_then(|l| l.first()) {
                    let first = next.chars().next().unwrap();
                    let wordy = next.trim_end_matches(['.', ',']).chars().all(|c| c.is_ascii_alphabetic());
                    if first.is_ascii_alphanumeric() && !is_list_marker(next) && !wordy {
                        doi.push_str(&percent_decode(next));
                        joined += 1;
                    }
                }
            }
            loop {
                let unbalanced = doi.ends_with(')') && doi.matches('(').count() < doi.matches(')').count();
                if doi.ends_with(['.', ',', ';', ':']) || unbalanced {
                    doi.pop();
                } else {
                    break;
                }
            }
            let doi = doi.to_lowercase();
            if !found.contains(&doi) {
                found.push(doi);
            }
        }
    }
    (found, joined, encoded)
}

#[derive(Debug, Clone)]
pub struct OracleWork {
    pub year: Option<i32>,
    pub journal: bool,
}

/// Reads a works JSONL fixture by hand: print date, then online, then issued.
pub fn oracle_works(path: &Path) -> BTreeMap<String, OracleWork> {
    let mut out = BTreeMap::new();
    for line in fs::read_to_string(path).unwrap().lines() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).unwrap();
        let m = v.get("message").unwrap_or(&v);
        let year_of = |k: &str| m.get(k).and_then(|d| d["date-parts"][0][0].as_i64()).map(|y| y as i32);
        let year = year_of("published-print").or(year_of("published-online")).or(year_of("issued"));
        out.insert(
            m["DOI"].as_str().unwrap().to_lowercase(),
            OracleWork {
                year,
                journal: m["type"] == "journal-article",
            },
        );
    }
    out
}

pub fn oracle_known(path: &Path) -> HashSet<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// (A, B, C) for one CV by brute force.
pub fn oracle_metrics(
    cv_text: &str,
    level: &str,
    session: i32,
    known: &HashSet<String>,
    works: &BTreeMap<String, OracleWork>,
    rows: &[(String, String)],
) -> (u64, u64, u32) {
    let window = if level == "FP" { 15 } else { 10 };
    let mut a = 0;
    let mut counts = Vec::new();
    for doi in naive_scan(cv_text) {
        if !known.contains(&doi) {
            continue;
        }
        let Some(work) = works.get(&doi) else { continue };
        let Some(year) = work.year else { continue };
        if session - year >= window {
            continue;
        }
        if work.journal {
            a += 1;
        }
        counts.push(nested_loop_in_degree(rows, &doi));
    }
    (a, counts.iter().sum(), definitional_h(&counts))
}

pub fn e2e_targets() -> Vec<String> {
    let mut targets: Vec<String> = oracle_works(&fixture("e2e/works.jsonl")).into_keys().collect();
    targets.push("10.4321/unknown.77".into());
    targets.push("10.9999/fake.2016.001".into());
    targets
}

/// Copies the CV corpus into `dir` and adds a 10,000-edge dump.
pub fn prepare_e2e(dir: &Path) -> Vec<(String, String)> {
    copy_dir(&fixture("e2e"), dir);
    let rows = synthetic_edges(&e2e_targets(), 10_000, 2016);
    write_coci(&dir.join("coci"), &rows, 6_000);
    rows
}

pub fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}
