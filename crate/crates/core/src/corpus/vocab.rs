use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::extraction::Bio;
use crate::io::FormatError;

use super::CorpusError;

/// Frequency-thresholded identity lexicon with dense ids.
///
/// Ids are assigned by descending document frequency, ties broken by phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    phrases: Vec<String>,
    doc_freq: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds from `(phrase, doc_frequency)` entries already in id order.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self, CorpusError> {
        if entries.is_empty() {
            return Err(CorpusError::EmptyVocabulary);
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut phrases = Vec::with_capacity(entries.len());
        let mut doc_freq = Vec::with_capacity(entries.len());
        for (id, (phrase, freq)) in entries.into_iter().enumerate() {
            if index.insert(phrase.clone(), id as u32).is_some() {
                return Err(CorpusError::DuplicatePhrase(phrase));
            }
            phrases.push(phrase);
            doc_freq.push(freq);
        }
        Ok(Vocabulary {
            phrases,
            doc_freq,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// `None` means out-of-vocabulary.
    pub fn id(&self, phrase: &str) -> Option<u32> {
        self.index.get(phrase).copied()
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.index.contains_key(phrase)
    }

    pub fn phrase(&self, id: u32) -> &str {
        &self.phrases[id as usize]
    }

    pub fn doc_frequency(&self, id: u32) -> u64 {
        self.doc_freq[id as usize]
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    /// In-vocabulary ids of a bio, first occurrences only, in bio order.
    pub fn ids_of(&self, bio: &Bio) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::with_capacity(bio.identities.len());
        for phrase in &bio.identities {
            if let Some(id) = self.id(phrase) {
                if !out.contains(&id) {
                    out.push(id);
                }
            }
        }
        out
    }

    /// Writes `phrase \t id \t doc_frequency` lines sorted by id.
    pub fn write_tsv<W: Write>(&self, mut writer: W) -> Result<(), FormatError> {
        for (id, (phrase, freq)) in self.phrases.iter().zip(&self.doc_freq).enumerate() {
            if phrase.contains(['\t', '\n', '\r']) {
                return Err(FormatError::Invalid(format!(
                    "phrase {phrase:?} contains a tab or newline"
                )));
            }
            writeln!(writer, "{phrase}\t{id}\t{freq}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, FormatError> {
        let mut entries = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [phrase, id, freq] = fields[..] else {
                return Err(FormatError::at(lineno + 1, "expected phrase, id, doc_frequency"));
            };
            let id: usize = id
                .parse()
                .map_err(|_| FormatError::at(lineno + 1, format!("bad id {id:?}")))?;
            if id != entries.len() {
                return Err(FormatError::at(lineno + 1, "ids must be dense and sorted"));
            }
            let freq: u64 = freq
                .parse()
                .map_err(|_| FormatError::at(lineno + 1, format!("bad frequency {freq:?}")))?;
            entries.push((phrase.to_string(), freq));
        }
        Vocabulary::from_entries(entries).map_err(|e| FormatError::Invalid(e.to_string()))
    }
}

/// Distinct-bio counts for every identity.
pub fn doc_frequencies(bios: &[Bio]) -> HashMap<&str, u64> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for bio in bios {
        let mut seen: Vec<&str> = Vec::with_capacity(bio.identities.len());
        for phrase in &bio.identities {
            if !seen.contains(&phrase.as_str()) {
                seen.push(phrase);
                *counts.entry(phrase).or_default() += 1;
            }
        }
    }
    counts
}

/// Identities found in at least `min_doc_freq` distinct bios.
pub fn build_vocabulary(bios: &[Bio], min_doc_freq: u64) -> Result<Vocabulary, CorpusError> {
    if min_doc_freq == 0 {
        return Err(CorpusError::InvalidThreshold);
    }
    let mut entries: Vec<(String, u64)> = doc_frequencies(bios)
        .into_iter()
        .filter(|&(_, n)| n >= min_doc_freq)
        .map(|(p, n)| (p.to_string(), n))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_entries(entries)
}

/// Bios with at least two distinct in-vocabulary identities, deduplicated.
pub fn filter_trainable(bios: &[Bio], vocabulary: &Vocabulary) -> Vec<Bio> {
    bios.iter()
        .map(Bio::dedup)
        .filter(|bio| vocabulary.ids_of(bio).len() >= 2)
        .collect()
}
