//! Identity extraction from biographies and synthetic corpus generation.
//!
//! Records travel between stages as tab-separated lines:
//!
//! | file            | columns                                      |
//! |-----------------|----------------------------------------------|
//! | raw input       | `id`, `source`, `text`                       |
//! | extracted bios  | `id`, `source`, JSON array of identity strings |

mod synthetic;
mod twitter;
mod wikipedia;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::FormatError;

pub use synthetic::{community_of, generate_synthetic, identity_name, SizeRange, SyntheticSpec};
pub use twitter::{extract_twitter, TwitterExtractor, DEFAULT_MAX_TOKENS};
pub use wikipedia::{extract_wikipedia, WikipediaExtractor, DEFAULT_NATIONALITIES};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no copular predicate found in {0:?}")]
    NoCopulaFound(String),
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Twitter,
    Wikipedia,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Twitter => "twitter",
            Source::Wikipedia => "wikipedia",
            Source::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "twitter" => Ok(Source::Twitter),
            "wikipedia" => Ok(Source::Wikipedia),
            "synthetic" => Ok(Source::Synthetic),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

/// Unprocessed biography text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawBio {
    pub id: String,
    pub source: Source,
    pub text: String,
}

impl RawBio {
    pub fn new(id: impl Into<String>, source: Source, text: impl Into<String>) -> Self {
        RawBio {
            id: id.into(),
            source,
            text: text.into(),
        }
    }
}

/// One person's ordered identity phrases.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bio {
    pub id: String,
    pub source: Source,
    pub identities: Vec<String>,
}

impl Bio {
    pub fn new(id: impl Into<String>, source: Source, identities: Vec<String>) -> Self {
        Bio {
            id: id.into(),
            source,
            identities,
        }
    }

    /// Drops repeated identities, keeping first occurrences in order.
    pub fn dedup(&self) -> Bio {
        let mut seen = std::collections::HashSet::with_capacity(self.identities.len());
        let identities = self
            .identities
            .iter()
            .filter(|p| seen.insert(p.as_str()))
            .cloned()
            .collect();
        Bio {
            id: self.id.clone(),
            source: self.source,
            identities,
        }
    }

    /// Comma-joined rendering, the inverse of Twitter chunking.
    pub fn render(&self) -> String {
        self.identities.join(", ")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractStats {
    pub n_input: usize,
    pub n_output: usize,
    /// Wikipedia sentences without a copular predicate.
    pub n_no_copula: usize,
    /// Records that yielded no identity.
    pub n_empty: usize,
}

/// Extracts every record with the extractor matching its source. Twitter
/// and synthetic records are chunked; Wikipedia records are parsed. Records
/// yielding nothing are dropped and counted.
pub fn extract_all(
    raws: &[RawBio],
    twitter: &TwitterExtractor,
    wikipedia: &WikipediaExtractor,
) -> (Vec<Bio>, ExtractStats) {
    let mut stats = ExtractStats {
        n_input: raws.len(),
        ..ExtractStats::default()
    };
    let mut bios = Vec::with_capacity(raws.len());
    for raw in raws {
        let bio = match raw.source {
            Source::Twitter | Source::Synthetic => twitter.extract(raw),
            Source::Wikipedia => match wikipedia.extract(raw) {
                Ok(bio) => bio,
                Err(_) => {
                    stats.n_no_copula += 1;
                    continue;
                }
            },
        };
        if bio.identities.is_empty() {
            stats.n_empty += 1;
        } else {
            bios.push(bio);
        }
    }
    stats.n_output = bios.len();
    (bios, stats)
}

/// Reads `id \t source \t text` lines. Blank lines are skipped.
pub fn read_raw_bios<R: BufRead>(reader: R) -> Result<Vec<RawBio>, FormatError> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (Some(id), Some(source), Some(text)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(FormatError::at(lineno + 1, "expected 3 tab-separated fields"));
        };
        let source = source
            .parse()
            .map_err(|e: String| FormatError::at(lineno + 1, e))?;
        out.push(RawBio::new(id, source, text));
    }
    Ok(out)
}

pub fn write_bios<W: Write>(mut writer: W, bios: &[Bio]) -> Result<(), FormatError> {
    for bio in bios {
        let identities = serde_json::to_string(&bio.identities)?;
        writeln!(writer, "{}\t{}\t{}", bio.id, bio.source, identities)?;
    }
    Ok(())
}

pub fn read_bios<R: BufRead>(reader: R) -> Result<Vec<Bio>, FormatError> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (Some(id), Some(source), Some(identities)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(FormatError::at(lineno + 1, "expected 3 tab-separated fields"));
        };
        let source = source
            .parse()
            .map_err(|e: String| FormatError::at(lineno + 1, e))?;
        let identities: Vec<String> =
            serde_json::from_str(identities).map_err(|e| FormatError::at(lineno + 1, e.to_string()))?;
        out.push(Bio::new(id, source, identities));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bio_records_roundtrip() {
        let bios = vec![
            Bio::new("a", Source::Twitter, vec!["wife".into(), "she/her".into()]),
            Bio::new("b", Source::Synthetic, vec![]),
            Bio::new("c", Source::Wikipedia, vec!["tab\there \"quoted\"".into()]),
        ];
        let mut buf = Vec::new();
        write_bios(&mut buf, &bios).unwrap();
        assert_eq!(read_bios(&buf[..]).unwrap(), bios);
    }

    #[test]
    fn extract_all_dispatches_on_source() {
        let raws = vec![
            RawBio::new("1", Source::Twitter, "wife | runner"),
            RawBio::new("2", Source::Wikipedia, "Jo Bloggs is a British poet."),
            RawBio::new("3", Source::Wikipedia, "The bridge collapsed."),
            RawBio::new("4", Source::Twitter, " | "),
        ];
        let (bios, stats) = extract_all(
            &raws,
            &TwitterExtractor::default(),
            &WikipediaExtractor::default(),
        );
        assert_eq!(bios[0].identities, ["wife", "runner"]);
        assert_eq!(bios[1].identities, ["poet"]);
        assert_eq!(
            stats,
            ExtractStats {
                n_input: 4,
                n_output: 2,
                n_no_copula: 1,
                n_empty: 1
            }
        );
    }

    #[test]
    fn raw_reader_rejects_short_lines() {
        let err = read_raw_bios("x\ttwitter\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 1"));
        let err = read_raw_bios("x\tfacebook\thello\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("facebook"));
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let bio = Bio::new(
            "x",
            Source::Twitter,
            vec!["a".into(), "b".into(), "a".into(), "c".into(), "b".into()],
        );
        assert_eq!(bio.dedup().identities, vec!["a", "b", "c"]);
    }
}
