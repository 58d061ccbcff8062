//! Chunk-and-clean extraction for short profile bios.
//!
//! Chunk delimiters (rule table version 1):
//!
//! | delimiter                           | example                 |
//! |-------------------------------------|-------------------------|
//! | `,` `;` `|`                         | `runner | coffee addict` |
//! | `/` unless joining pronoun tokens   | `mom/wife`, not `she/her` |
//! | bullets `•` `·` `●` `▪`             | `dad • nurse`           |
//! | em/en dash with surrounding spaces  | `writer — runner`       |
//! | newline                             |                         |
//! | two or more consecutive spaces      | `dad  nurse`            |
//!
//! Each chunk is then NFC-normalized, lowercased, whitespace-collapsed, trimmed
//! of edge punctuation and emoji (a leading `#` is kept), and stripped of
//! lead-ins (`i am`, `i'm`, optionally followed by an article) and leading
//! articles until nothing changes.

use std::sync::LazyLock;

use regex::Regex;
use unicode_normalization::UnicodeNormalization;

use super::{Bio, RawBio};

pub const DEFAULT_MAX_TOKENS: usize = 12;

// Stands in for a protected pronoun slash while chunking.
const SLASH_GUARD: char = '\u{E000}';

static DELIMITER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[,;|/\n\r•·●▪]|\s+[—–]\s+|[ \t]{2,}").expect("valid delimiter regex"));

static PRONOUN_RUN: LazyLock<Regex> = LazyLock::new(|| {
    let pronoun = "he|him|his|she|her|hers|they|them|their|theirs|xe|xem|xir|ze|zir|hir|it|its|any|all";
    Regex::new(&format!(r"(?i)\b(?:{pronoun})(?:/(?:{pronoun}))+\b")).expect("valid pronoun regex")
});

static LEAD_IN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:i am|i'm|i’m)\s+(?:(?:a|an|the)\s+)?").expect("valid lead-in regex"));

static ARTICLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:a|an|the)\s+").expect("valid article regex"));

#[derive(Debug, Clone)]
pub struct TwitterExtractor {
    /// Phrases with more whitespace tokens than this are discarded.
    pub max_tokens: usize,
}

impl Default for TwitterExtractor {
    fn default() -> Self {
        TwitterExtractor {
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl TwitterExtractor {
    pub fn extract(&self, raw: &RawBio) -> Bio {
        Bio::new(raw.id.clone(), raw.source, self.identities(&raw.text))
    }

    pub fn identities(&self, text: &str) -> Vec<String> {
        // Normalize before chunking: NFC can map characters onto delimiters.
        let text: String = text.nfc().filter(|&c| c != SLASH_GUARD).collect();
        let guarded = PRONOUN_RUN.replace_all(&text, |caps: &regex::Captures<'_>| {
            caps[0].replace('/', &SLASH_GUARD.to_string())
        });
        DELIMITER
            .split(&guarded)
            .filter_map(|chunk| self.clean(chunk))
            .map(|phrase| phrase.replace(SLASH_GUARD, "/"))
            .collect()
    }

    /// Normalizes one chunk; `None` when nothing identity-like remains.
    pub fn clean(&self, chunk: &str) -> Option<String> {
        let lowered: String = chunk.nfc().collect::<String>().to_lowercase().nfc().collect();
        let mut phrase = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
        loop {
            let before = phrase.len();
            phrase = trim_edges(&phrase).to_string();
            phrase = LEAD_IN.replace(&phrase, "").into_owned();
            phrase = ARTICLE.replace(&phrase, "").into_owned();
            if phrase.len() == before {
                break;
            }
        }
        if phrase.is_empty() || phrase.split_whitespace().count() > self.max_tokens {
            return None;
        }
        Some(phrase)
    }
}

fn trim_edges(phrase: &str) -> &str {
    phrase
        .trim_start_matches(|c: char| !(c.is_alphanumeric() || c == '#'))
        .trim_end_matches(|c: char| !c.is_alphanumeric())
}

/// Extracts identities with the default rule table.
pub fn extract_twitter(raw: &RawBio) -> Bio {
    TwitterExtractor::default().extract(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Source;
    use proptest::prelude::*;

    fn run(text: &str) -> Vec<String> {
        extract_twitter(&RawBio::new("t", Source::Twitter, text)).identities
    }

    #[test]
    fn worked_example() {
        assert_eq!(
            run("Progressive Christian, wife, I am a proud Canadian"),
            vec!["progressive christian", "wife", "proud canadian"]
        );
    }

    #[test]
    fn whitespace_only_is_empty() {
        assert!(run("").is_empty());
        assert!(run("   \n  ").is_empty());
    }

    #[test]
    fn pronoun_slash_is_kept() {
        assert_eq!(
            run("runner | coffee addict | she/her"),
            vec!["runner", "coffee addict", "she/her"]
        );
        assert_eq!(
            run("They/Them/Theirs, artist"),
            vec!["they/them/theirs", "artist"]
        );
        assert_eq!(run("mom/wife/teacher"), vec!["mom", "wife", "teacher"]);
        assert_eq!(run("nurse/she/her"), vec!["nurse", "she/her"]);
    }

    #[test]
    fn delimiter_table() {
        assert_eq!(
            run("dad • nurse · gamer ● fan ▪ x"),
            vec!["dad", "nurse", "gamer", "fan", "x"]
        );
        assert_eq!(run("writer — runner – poet"), vec!["writer", "runner", "poet"]);
        assert_eq!(run("well-known writer-runner"), vec!["well-known writer-runner"]);
        assert_eq!(run("dad  nurse\nwife; mom"), vec!["dad", "nurse", "wife", "mom"]);
    }

    #[test]
    fn cleaning_rules() {
        assert_eq!(run("I'm an engineer"), vec!["engineer"]);
        assert_eq!(run("i am the best dad!!! 🇨🇦"), vec!["best dad"]);
        assert_eq!(run("The Boss"), vec!["boss"]);
        assert_eq!(run("The  Boss"), vec!["the", "boss"]);
        // U+0387 normalizes to the middle-dot bullet
        assert_eq!(run("nurse\u{387}dad"), vec!["nurse", "dad"]);
        assert_eq!(run("#BlackLivesMatter 🖤"), vec!["#blacklivesmatter"]);
        assert_eq!(run("\"proud\tmom\""), vec!["proud mom"]);
        assert_eq!(run("the a team"), vec!["team"]);
        assert_eq!(run(", , ,"), Vec::<String>::new());
    }

    #[test]
    fn long_phrases_dropped() {
        let long = (0..13).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        assert_eq!(run(&format!("{long}, wife")), vec!["wife"]);
        let ok = (0..12).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        assert_eq!(run(&ok), vec![ok.clone()]);
    }

    #[test]
    fn nfc_normalization() {
        // "café" written with a combining acute accent
        assert_eq!(run("cafe\u{301} owner"), vec!["caf\u{e9} owner"]);
    }

    proptest! {
        #[test]
        fn render_then_extract_is_identity(text in "[a-zA-Z ,;|/•#'!.\u{e9}-]{0,60}|(she|he|they)/(her|him|them)[ a-z,]{0,20}") {
            let first = run(&text);
            let bio = Bio::new("t", Source::Twitter, first.clone());
            prop_assert_eq!(run(&bio.render()), first);
        }

        #[test]
        fn no_delimiters_survive(text in "\\PC{0,80}") {
            for phrase in run(&text) {
                let unguarded = PRONOUN_RUN.replace_all(&phrase, "");
                prop_assert!(!DELIMITER.is_match(&unguarded), "{:?}", phrase);
                prop_assert!(!phrase.is_empty());
                prop_assert!(phrase.split_whitespace().count() <= DEFAULT_MAX_TOKENS);
            }
        }

        #[test]
        fn cleaning_preserves_order(words in proptest::collection::vec("[a-z]{1,8}", 1..8)) {
            let text = words.iter().map(|w| format!("The {w}")).collect::<Vec<_>>().join(" | ");
            prop_assert_eq!(run(&text), words);
        }
    }
}
