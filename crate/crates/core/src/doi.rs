//! Normalized DOI values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid DOI {input:?}: {reason}")]
pub struct DoiError {
    pub input: String,
    pub reason: &'static str,
}

const RESOLVER_PREFIXES: [&str; 6] = [
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi.org/",
    "doi:",
];

/// A DOI of the form `10.<registrant>/<suffix>`, stored lowercase.
///
/// The registrant code is 4 to 9 digits and the suffix is at least one
/// non-whitespace character. DOIs compare case-insensitively, so the
/// lowercase form is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Doi(String);

impl Doi {
    /// Parses a bare DOI or one carrying a `doi:` / resolver URL prefix.
    pub fn parse(input: &str) -> Result<Self, DoiError> {
        let trimmed = input.trim();
        let mut rest = trimmed;
        for prefix in RESOLVER_PREFIXES {
            if rest.len() >= prefix.len() && rest[..prefix.len()].eq_ignore_ascii_case(prefix) {
                rest = rest[prefix.len()..].trim_start();
                break;
            }
        }
        let err = |reason| DoiError {
            input: input.to_string(),
            reason,
        };
        if !is_valid_shape(rest) {
            return Err(err("expected 10.<4-9 digits>/<suffix>"));
        }
        Ok(Doi(rest.to_lowercase()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Registrant prefix, e.g. `10.1007`.
    pub fn prefix(&self) -> &str {
        let slash = self.0.find('/').expect("validated DOI has a slash");
        &self.0[..slash]
    }

    pub fn suffix(&self) -> &str {
        let slash = self.0.find('/').expect("validated DOI has a slash");
        &self.0[slash + 1..]
    }
}

/// `10.` + 4..=9 ASCII digits + `/` + at least one char, no whitespace or
/// control characters anywhere.
pub(crate) fn is_valid_shape(s: &str) -> bool {
    let Some(rest) = s.strip_prefix("10.") else {
        return false;
    };
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if !(4..=9).contains(&digits) {
        return false;
    }
    let Some(suffix) = rest[digits..].strip_prefix('/') else {
        return false;
    };
    !suffix.is_empty() && !suffix.chars().any(|c| c.is_whitespace() || c.is_control())
}

impl fmt::Display for Doi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Doi {
    type Err = DoiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Doi::parse(s)
    }
}

impl AsRef<str> for Doi {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Serialize for Doi {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Doi {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Doi::parse(&s).map_err(serde::de::Error::custom)
    }
}
