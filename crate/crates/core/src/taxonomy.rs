//! Recruitment-field taxonomy, discipline categories, qualification levels
//! and the official threshold tables.
//!
//! Recruitment fields are coded `AA/GF`: a two-digit scientific area
//! (01–14), a group letter and a field digit. Only the citation-based
//! disciplines (CD) are evaluated with the journal/citation/h-index
//! triple; everything else is rejected at pipeline entry.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shipped list of recruitment fields (`code,name`).
pub const RECRUITMENT_FIELDS_CSV: &str = include_str!("../data/recruitment_fields.csv");

/// Fields in areas 01–09 that are nevertheless non-citation-based.
pub const ND_EXCEPTIONS: [&str; 5] = ["08/C1", "08/D1", "08/E1", "08/E2", "08/F1"];

/// Fields in areas 10–14 that are nevertheless citation-based (Psychology).
pub const CD_EXCEPTIONS: [&str; 4] = ["11/E1", "11/E2", "11/E3", "11/E4"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("malformed recruitment field code {0:?}")]
    MalformedCode(String),
    #[error("scientific area out of range in {0:?} (expected 01-14)")]
    OutOfRange(String),
    #[error("unknown level {0:?} (expected FP or AP)")]
    UnknownLevel(String),
}

#[derive(Debug, Error)]
pub enum ThresholdError {
    #[error("duplicate threshold entry for {rf} {level}{}", session_suffix(*.session))]
    DuplicateKey {
        rf: RecruitmentField,
        level: Level,
        session: Option<i32>,
    },
    #[error("malformed threshold row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("no threshold entry for {rf} {level}")]
    MissingEntry { rf: RecruitmentField, level: Level },
    #[error("reading threshold table: {0}")]
    Csv(#[from] csv::Error),
}

fn session_suffix(session: Option<i32>) -> String {
    session.map(|s| format!(" (session {s})")).unwrap_or_default()
}

/// A recruitment field such as `06/D5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecruitmentField {
    sa: u8,
    group: char,
    field: u8,
}

impl RecruitmentField {
    pub fn new(sa: u8, group: char, field: u8) -> Result<Self, TaxonomyError> {
        let rf = Self { sa, group, field };
        if !group.is_ascii_uppercase() || !(1..=9).contains(&field) {
            return Err(TaxonomyError::MalformedCode(rf.code()));
        }
        if !(1..=14).contains(&sa) {
            return Err(TaxonomyError::OutOfRange(rf.code()));
        }
        Ok(rf)
    }

    /// Parses `AA/GF` or `AA-GF`, tolerating surrounding whitespace.
    pub fn parse(code: &str) -> Result<Self, TaxonomyError> {
        let trimmed = code.trim();
        let bytes = trimmed.as_bytes();
        let malformed = || TaxonomyError::MalformedCode(code.to_string());
        if bytes.len() != 5 || !matches!(bytes[2], b'/' | b'-') {
            return Err(malformed());
        }
        if !bytes[0].is_ascii_digit() || !bytes[1].is_ascii_digit() {
            return Err(malformed());
        }
        let group = bytes[3] as char;
        if !group.is_ascii_uppercase() || !(b'1'..=b'9').contains(&bytes[4]) {
            return Err(malformed());
        }
        let sa = (bytes[0] - b'0') * 10 + (bytes[1] - b'0');
        if !(1..=14).contains(&sa) {
            return Err(TaxonomyError::OutOfRange(code.to_string()));
        }
        Ok(Self {
            sa,
            group,
            field: bytes[4] - b'0',
        })
    }

    pub fn sa(&self) -> u8 {
        self.sa
    }

    pub fn group(&self) -> char {
        self.group
    }

    pub fn field(&self) -> u8 {
        self.field
    }

    /// Canonical `AA/GF` form.
    pub fn code(&self) -> String {
        format!("{:02}/{}{}", self.sa, self.group, self.field)
    }

    pub fn category(&self) -> DisciplineCategory {
        classify(self)
    }
}

impl fmt::Display for RecruitmentField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}/{}{}", self.sa, self.group, self.field)
    }
}

impl FromStr for RecruitmentField {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for RecruitmentField {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.code())
    }
}

impl<'de> Deserialize<'de> for RecruitmentField {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Citation-based vs non-citation-based discipline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DisciplineCategory {
    #[serde(rename = "CD")]
    CitationBased,
    #[serde(rename = "ND")]
    NonCitationBased,
}

pub fn classify(rf: &RecruitmentField) -> DisciplineCategory {
    let code = rf.code();
    if rf.sa <= 9 {
        if ND_EXCEPTIONS.contains(&code.as_str()) {
            DisciplineCategory::NonCitationBased
        } else {
            DisciplineCategory::CitationBased
        }
    } else if CD_EXCEPTIONS.contains(&code.as_str()) {
        DisciplineCategory::CitationBased
    } else {
        DisciplineCategory::NonCitationBased
    }
}

/// Qualification level. FP considers publications less than 15 years
/// old, AP less than 10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "FP")]
    FullProfessor,
    #[serde(rename = "AP")]
    AssociateProfessor,
}

impl Level {
    pub const ALL: [Level; 2] = [Level::FullProfessor, Level::AssociateProfessor];

    pub const fn window_years(self) -> i32 {
        match self {
            Level::FullProfessor => 15,
            Level::AssociateProfessor => 10,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            Level::FullProfessor => "FP",
            Level::AssociateProfessor => "AP",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FP" | "1" => Ok(Level::FullProfessor),
            "AP" | "2" => Ok(Level::AssociateProfessor),
            _ => Err(TaxonomyError::UnknownLevel(s.to_string())),
        }
    }
}

/// Thresholds for journal articles (A), citations (B) and h-index (C).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTriple {
    pub t_a: f64,
    pub t_b: f64,
    pub t_c: f64,
}

impl ThresholdTriple {
    pub fn new(t_a: f64, t_b: f64, t_c: f64) -> Option<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        (ok(t_a) && ok(t_b) && ok(t_c)).then_some(Self { t_a, t_b, t_c })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.t_a, self.t_b, self.t_c]
    }
}

#[derive(Debug, Deserialize)]
struct ThresholdRow {
    rf: String,
    level: String,
    t_a: String,
    t_b: String,
    t_c: String,
    #[serde(default)]
    session: Option<String>,
}

type ThresholdKey = (RecruitmentField, Level, Option<i32>);

/// Official thresholds keyed by (field, level), optionally per session.
#[derive(Debug, Clone, Default)]
pub struct ThresholdTable {
    entries: HashMap<ThresholdKey, ThresholdTriple>,
}

impl ThresholdTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads `rf,level,t_a,t_b,t_c[,session]` rows.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ThresholdError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut table = Self::new();
        for (i, row) in rdr.deserialize::<ThresholdRow>().enumerate() {
            // header is row 1
            let row_no = i + 2;
            let row = row.map_err(|e| ThresholdError::MalformedRow {
                row: row_no,
                reason: e.to_string(),
            })?;
            let bad = |reason: String| ThresholdError::MalformedRow { row: row_no, reason };
            let rf = RecruitmentField::parse(&row.rf).map_err(|e| bad(e.to_string()))?;
            let level = row.level.parse::<Level>().map_err(|e| bad(e.to_string()))?;
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("not a number: {s:?}")))
            };
            let triple = ThresholdTriple::new(num(&row.t_a)?, num(&row.t_b)?, num(&row.t_c)?)
                .ok_or_else(|| bad("thresholds must be finite and non-negative".into()))?;
            let session = match row.session.as_deref().map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(
                    s.parse::<i32>()
                        .map_err(|_| bad(format!("invalid session {s:?}")))?,
                ),
            };
            table.insert(rf, level, session, triple)?;
        }
        Ok(table)
    }

    pub fn insert(
        &mut self,
        rf: RecruitmentField,
        level: Level,
        session: Option<i32>,
        triple: ThresholdTriple,
    ) -> Result<(), ThresholdError> {
        if self.entries.insert((rf, level, session), triple).is_some() {
            return Err(ThresholdError::DuplicateKey { rf, level, session });
        }
        Ok(())
    }

    /// Session-specific entry first, then the session-independent one.
    pub fn lookup(
        &self,
        rf: RecruitmentField,
        level: Level,
        session: Option<i32>,
    ) -> Result<ThresholdTriple, ThresholdError> {
        session
            .and_then(|s| self.entries.get(&(rf, level, Some(s))))
            .or_else(|| self.entries.get(&(rf, level, None)))
            .copied()
            .ok_or(ThresholdError::MissingEntry { rf, level })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The catalog of known recruitment fields with their names.
#[derive(Debug, Clone)]
pub struct FieldCatalog {
    fields: BTreeMap<RecruitmentField, String>,
}

#[derive(Debug, Deserialize)]
struct CatalogRow {
    code: String,
    #[serde(default)]
    name: String,
}

impl FieldCatalog {
    pub fn shipped() -> Self {
        Self::from_reader(RECRUITMENT_FIELDS_CSV.as_bytes())
            .expect("shipped recruitment field list is well-formed")
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, anyhow::Error> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut fields = BTreeMap::new();
        for row in rdr.deserialize::<CatalogRow>() {
            let row = row?;
            let rf = RecruitmentField::parse(&row.code)?;
            if fields.insert(rf, row.name).is_some() {
                anyhow::bail!("duplicate recruitment field {rf} in catalog");
            }
        }
        Ok(Self { fields })
    }

    pub fn contains(&self, rf: &RecruitmentField) -> bool {
        self.fields.contains_key(rf)
    }

    pub fn name(&self, rf: &RecruitmentField) -> Option<&str> {
        self.fields.get(rf).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RecruitmentField, &str)> {
        self.fields.iter().map(|(rf, name)| (rf, name.as_str()))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}
