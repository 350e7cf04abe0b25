//! DOI extraction from plain-text CVs.
//!
//! The scanner looks for `10.<digits>/` (or `%2F`) and consumes suffix
//! characters until whitespace or a character outside printable ASCII.
//! Each raw hit then goes through three repairs:
//!
//! * a DOI broken across a line break is rejoined with the first token of
//!   the next line when that token plausibly continues it,
//! * HTML entities and percent escapes inside the hit are decoded,
//! * trailing sentence punctuation and unbalanced closing brackets are
//!   stripped.

use std::collections::HashSet;
use std::ops::Range;

use once_cell::sync::Lazy;
use percent_encoding::percent_decode_str;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::doi::{is_valid_shape, Doi};

/// Why a raw hit did not yield a DOI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Nothing left after the registrant slash once punctuation was stripped.
    EmptySuffix,
    /// Decoding produced whitespace, control characters or a broken prefix.
    InvalidAfterDecoding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// Byte range of the raw hit in the source text.
    pub span: Range<usize>,
    pub text: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    /// Unique DOIs in first-occurrence order.
    pub dois: Vec<Doi>,
    /// Pattern hits before normalization, duplicates included.
    pub raw_hits: usize,
    /// Hits changed by at least one repair heuristic.
    pub repaired: usize,
    pub rejected: Vec<Rejection>,
}

/// Scans `text` for DOIs.
pub fn extract_dois(text: &str) -> ExtractionReport {
    let mut report = ExtractionReport::default();
    let mut seen = HashSet::new();
    let mut cursor = 0;

    while let Some(offset) = text[cursor..].find("10.") {
        let start = cursor + offset;
        let Some(hit) = scan_hit(text, start) else {
            cursor = start + 3;
            continue;
        };
        cursor = hit.end;
        report.raw_hits += 1;

        let decoded = decode_escapes(&hit.raw);
        let cleaned = strip_trailing(&decoded);
        if hit.rejoined || decoded != hit.raw || cleaned.len() != decoded.len() {
            report.repaired += 1;
        }

        match Doi::parse(cleaned) {
            Ok(doi) => {
                if seen.insert(doi.clone()) {
                    report.dois.push(doi);
                }
            }
            Err(_) => {
                let reason = if suffix_is_empty(cleaned) {
                    RejectReason::EmptySuffix
                } else {
                    RejectReason::InvalidAfterDecoding
                };
                report.rejected.push(Rejection {
                    span: start..hit.end,
                    text: text[start..hit.end].to_string(),
                    reason,
                });
            }
        }
    }
    report
}

/// One DOI per line; the inverse view used for idempotence checks.
pub fn format_list(dois: &[Doi]) -> String {
    let mut out = String::new();
    for doi in dois {
        out.push_str(doi.as_str());
        out.push('\n');
    }
    out
}

struct RawHit {
    raw: String,
    end: usize,
    rejoined: bool,
}

fn is_suffix_char(c: char) -> bool {
    c.is_ascii_graphic() && c != '"'
}

fn is_boundary_before(text: &str, start: usize) -> bool {
    match text[..start].chars().next_back() {
        None => true,
        Some(c) => !(c.is_alphanumeric() || c == '.'),
    }
}

/// Length of `10.<4-9 digits>` plus the slash (literal or `%2F`) at the
/// start of `s`, if present.
fn prefix_len(s: &str) -> Option<usize> {
    let rest = s.strip_prefix("10.")?;
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if !(4..=9).contains(&digits) {
        return None;
    }
    let after = &rest[digits..];
    let slash = if after.starts_with('/') {
        1
    } else if after.len() >= 3 && after[..3].eq_ignore_ascii_case("%2f") {
        3
    } else {
        return None;
    };
    Some(3 + digits + slash)
}

fn take_suffix(text: &str, from: usize) -> usize {
    text[from..]
        .char_indices()
        .find(|&(_, c)| !is_suffix_char(c))
        .map_or(text.len(), |(i, _)| from + i)
}

fn scan_hit(text: &str, start: usize) -> Option<RawHit> {
    if !is_boundary_before(text, start) {
        return None;
    }
    let prefix = prefix_len(&text[start..])?;
    let mut end = take_suffix(text, start + prefix);
    let mut raw = text[start..end].to_string();
    let mut rejoined = false;

    while let Some((token_start, token_end)) = next_line_token(text, end) {
        let token = &text[token_start..token_end];
        if !continues_doi(&raw, token) {
            break;
        }
        raw.push_str(token);
        end = token_end;
        rejoined = true;
    }
    Some(RawHit { raw, end, rejoined })
}

/// The run of suffix characters that opens the line after `pos`, when
/// `pos` is followed only by horizontal whitespace and one line break.
fn next_line_token(text: &str, pos: usize) -> Option<(usize, usize)> {
    let rest = &text[pos..];
    let after_ws = rest.trim_start_matches([' ', '\t']);
    let after_break = after_ws
        .strip_prefix("\r\n")
        .or_else(|| after_ws.strip_prefix('\n'))?;
    let line = after_break.trim_start_matches([' ', '\t']);
    let token_start = text.len() - line.len();
    let token_end = take_suffix(text, token_start);
    (token_end > token_start).then_some((token_start, token_end))
}

static LIST_MARKER: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^[\[(]?\d{1,3}[\].)]$").expect("valid regex"));
static YEAR_TOKEN: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^(\((19|20)\d{2}\)[.,;:]?|(19|20)\d{2}[.,;:])$").expect("valid regex")
});

fn is_prose_word(token: &str) -> bool {
    let word = token.trim_end_matches(['.', ',', ';', ':', ')']);
    word.len() >= 2 && word.bytes().all(|b| b.is_ascii_alphabetic())
}

/// Decides whether `token`, the first word of the next line, is the rest
/// of the DOI fragment `fragment`.
fn continues_doi(fragment: &str, token: &str) -> bool {
    let lower = token.to_ascii_lowercase();
    let starts_new_identifier = prefix_len(token).is_some()
        || ["doi", "http", "www.", "urn:", "isbn", "issn"]
            .iter()
            .any(|p| lower.starts_with(p))
        || token.starts_with('[')
        || token.starts_with('<');
    // bullets and dashes opening a list item
    let bare_punct = !token.bytes().any(|b| b.is_ascii_alphanumeric());
    if starts_new_identifier || bare_punct {
        return false;
    }
    if fragment.ends_with(['-', '_', '/']) || fragment.to_ascii_lowercase().ends_with("%2f") {
        return true;
    }
    !(is_prose_word(token) || LIST_MARKER.is_match(token) || YEAR_TOKEN.is_match(token))
}

fn decode_escapes(raw: &str) -> String {
    let mut s = if raw.contains('&') {
        html_escape::decode_html_entities(raw).into_owned()
    } else {
        raw.to_string()
    };
    if s.contains('%') {
        s = percent_decode_str(&s).decode_utf8_lossy().into_owned();
    }
    s
}

const TRAILING_PUNCT: [char; 5] = ['.', ',', ';', ':', '\''];

fn strip_trailing(s: &str) -> &str {
    let mut s = s;
    loop {
        let Some(last) = s.chars().next_back() else {
            return s;
        };
        let open = match last {
            ')' => '(',
            ']' => '[',
            '}' => '{',
            '>' => '<',
            c if TRAILING_PUNCT.contains(&c) => {
                s = &s[..s.len() - 1];
                continue;
            }
            _ => return s,
        };
        if s.matches(last).count() > s.matches(open).count() {
            s = &s[..s.len() - 1];
        } else {
            return s;
        }
    }
}

fn suffix_is_empty(s: &str) -> bool {
    match s.find('/') {
        Some(i) => s[i + 1..].is_empty(),
        None => !is_valid_shape(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dois(text: &str) -> Vec<String> {
        extract_dois(text)
            .dois
            .into_iter()
            .map(Doi::into_string)
            .collect()
    }

    #[test]
    fn strips_sentence_period() {
        let report = extract_dois("see doi:10.1007/s11192-019-03217-6.");
        assert_eq!(report.dois[0].as_str(), "10.1007/s11192-019-03217-6");
        assert_eq!(report.raw_hits, 1);
        assert_eq!(report.repaired, 1);
    }

    #[test]
    fn empty_text() {
        assert_eq!(extract_dois(""), ExtractionReport::default());
        assert!(extract_dois("no identifiers here, version 10.2 only").dois.is_empty());
    }

    #[test]
    fn rejoins_line_split() {
        assert_eq!(dois("text with 10.1162/qss_a_\n00023 more"), ["10.1162/qss_a_00023"]);
        assert_eq!(dois("10.1371/journal.\r\n  pone.0221212"), ["10.1371/journal.pone.0221212"]);
        assert_eq!(dois("10.1007/BF0227\n9353 and so on"), ["10.1007/bf02279353"]);
    }

    #[test]
    fn does_not_glue_next_reference() {
        let text = "1. Rossi (2019). doi:10.1162/qss_a_00019\n2. Bianchi, J. Title.\n";
        assert_eq!(dois(text), ["10.1162/qss_a_00019"]);
        let text = "doi:10.1162/qss_a_00019\nSmith, J. (2020) Another paper";
        assert_eq!(dois(text), ["10.1162/qss_a_00019"]);
        let text = "doi:10.1162/qss_a_00019.\nThe next sentence";
        assert_eq!(dois(text), ["10.1162/qss_a_00019"]);
        let text = "10.1162/qss_a_00019\n10.1162/qss_a_00018\n[3] X";
        assert_eq!(dois(text), ["10.1162/qss_a_00019", "10.1162/qss_a_00018"]);
        let text = "10.1162/qss_a_00019\n\n00023 is a number";
        assert_eq!(dois(text), ["10.1162/qss_a_00019"]);
        let text = "10.1162/qss_a_00019\n(2020). Journal";
        assert_eq!(dois(text), ["10.1162/qss_a_00019"]);
        let text = "- one, 10.1162/qss_a_00019\n- two\n* 10.1162/qss_a_00018\n* three";
        assert_eq!(dois(text), ["10.1162/qss_a_00019", "10.1162/qss_a_00018"]);
    }

    #[test]
    fn decodes_escapes() {
        assert_eq!(dois("https://doi.org/10.1007%2Fs11192-019-03217-6"), ["10.1007/s11192-019-03217-6"]);
        assert_eq!(
            dois("doi: 10.1002/(SICI)1097-4636(199709)36:3&lt;323::AID-JBM7&gt;3.0.CO;2-D"),
            ["10.1002/(sici)1097-4636(199709)36:3<323::aid-jbm7>3.0.co;2-d"]
        );
        assert_eq!(dois("10.1234/abc&amp;def"), ["10.1234/abc&def"]);
    }

    #[test]
    fn strips_unbalanced_brackets_only() {
        assert_eq!(dois("(see 10.1016/0021-9681(87)90171-8)."), ["10.1016/0021-9681(87)90171-8"]);
        assert_eq!(dois("<https://doi.org/10.1162/qss_a_00019>"), ["10.1162/qss_a_00019"]);
        assert_eq!(dois("[10.1038/502295a]"), ["10.1038/502295a"]);
        assert_eq!(dois("10.1234/a(b)"), ["10.1234/a(b)"]);
    }

    #[test]
    fn deduplicates_case_insensitively_in_order() {
        let text = "10.1038/502295A then 10.5281/zenodo.4603624 then 10.1038/502295a";
        let report = extract_dois(text);
        assert_eq!(report.raw_hits, 3);
        assert_eq!(
            report.dois.iter().map(Doi::as_str).collect::<Vec<_>>(),
            ["10.1038/502295a", "10.5281/zenodo.4603624"]
        );
    }

    #[test]
    fn rejects_empty_suffix_and_bad_decoding() {
        let report = extract_dois("broken 10.1234/. and 10.1234/a%20b");
        assert!(report.dois.is_empty());
        assert_eq!(report.raw_hits, 2);
        assert_eq!(report.rejected[0].reason, RejectReason::EmptySuffix);
        assert_eq!(report.rejected[1].reason, RejectReason::InvalidAfterDecoding);
        assert_eq!(report.rejected[0].text, "10.1234/.");
    }

    #[test]
    fn requires_boundary_and_registrant_digits() {
        assert!(dois("x10.1234/abc").is_empty());
        assert!(dois("2010.1234/abc").is_empty());
        assert!(dois("10.123/abc").is_empty());
        assert_eq!(dois("doi:10.123456789/x"), ["10.123456789/x"]);
    }

    #[test]
    fn format_list_round_trips() {
        let text = "a 10.1162/qss_a_\n00023 b 10.1007%2Fs11192-019-03217-6, c 10.1038/502295a.";
        let first = extract_dois(text);
        let second = extract_dois(&format_list(&first.dois));
        assert_eq!(first.dois, second.dois);
    }
}
