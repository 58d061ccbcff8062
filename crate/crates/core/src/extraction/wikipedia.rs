//! Copular-predicate extraction from the first sentence of an encyclopedia
//! biography.
//!
//! Grammar:
//!
//! ```text
//! SENTENCE   := SUBJECT COPULA ARTICLE PREDICATE
//! COPULA     := is | was | are | were
//! ARTICLE    := a | an | the
//! PREDICATE  := NP ( (',' | 'and' | 'or' | '&' | ', and') NP )* [CLAUSE]
//! CLAUSE     := STOPWORD ...        (ends the predicate)
//! ```
//!
//! Parentheticals are removed first. Each NP keeps its modifiers except
//! nationality adjectives, which come from a configurable closed list.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use unicode_normalization::UnicodeNormalization;

use super::{Bio, ExtractError, RawBio, DEFAULT_MAX_TOKENS};

static PARENTHETICAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*\([^()]*\)").expect("valid regex"));

static COPULA: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(\S.*?)\s+(?:is|was|are|were)\s+(?:a|an|the)\s+(.+)$").expect("valid regex")
});

/// Words that open a relative clause, participle or prepositional phrase.
const STOPWORDS: &[&str] = &[
    "who", "whom", "whose", "which", "that", "where", "when", "known", "best", "born", "based", "noted",
    "famous", "of", "for", "from", "in", "at", "on", "with", "by", "to", "since", "during", "between",
    "after", "before", "under", "as", "about", "into", "within", "until",
];

const SKIP_LEADING: &[&str] = &["a", "an", "the", "also"];

pub const DEFAULT_NATIONALITIES: &[&str] = &[
    "afghan",
    "albanian",
    "algerian",
    "american",
    "argentine",
    "argentinian",
    "armenian",
    "australian",
    "austrian",
    "azerbaijani",
    "bangladeshi",
    "belarusian",
    "belgian",
    "bolivian",
    "bosnian",
    "brazilian",
    "british",
    "bulgarian",
    "cambodian",
    "cameroonian",
    "canadian",
    "chilean",
    "chinese",
    "colombian",
    "congolese",
    "croatian",
    "cuban",
    "cypriot",
    "czech",
    "danish",
    "dominican",
    "dutch",
    "ecuadorian",
    "egyptian",
    "english",
    "eritrean",
    "estonian",
    "ethiopian",
    "fijian",
    "filipino",
    "finnish",
    "french",
    "georgian",
    "german",
    "ghanaian",
    "greek",
    "guatemalan",
    "haitian",
    "honduran",
    "hungarian",
    "icelandic",
    "indian",
    "indonesian",
    "iranian",
    "iraqi",
    "irish",
    "israeli",
    "italian",
    "ivorian",
    "jamaican",
    "japanese",
    "jordanian",
    "kazakh",
    "kenyan",
    "korean",
    "kosovar",
    "kuwaiti",
    "latvian",
    "lebanese",
    "liberian",
    "libyan",
    "lithuanian",
    "luxembourgish",
    "macedonian",
    "malaysian",
    "maltese",
    "mexican",
    "moldovan",
    "mongolian",
    "montenegrin",
    "moroccan",
    "namibian",
    "nepalese",
    "nepali",
    "nicaraguan",
    "nigerian",
    "norwegian",
    "pakistani",
    "palestinian",
    "panamanian",
    "paraguayan",
    "peruvian",
    "polish",
    "portuguese",
    "qatari",
    "romanian",
    "russian",
    "rwandan",
    "salvadoran",
    "saudi",
    "scottish",
    "senegalese",
    "serbian",
    "singaporean",
    "slovak",
    "slovenian",
    "somali",
    "spanish",
    "sudanese",
    "swedish",
    "swiss",
    "syrian",
    "taiwanese",
    "tanzanian",
    "thai",
    "tunisian",
    "turkish",
    "ugandan",
    "ukrainian",
    "uruguayan",
    "uzbek",
    "venezuelan",
    "vietnamese",
    "welsh",
    "yemeni",
    "zambian",
    "zimbabwean",
    "new zealand",
    "south african",
    "south korean",
    "north korean",
    "sri lankan",
    "puerto rican",
    "costa rican",
    "saudi arabian",
    "hong kong",
    "northern irish",
    "sierra leonean",
    "trinidadian",
    "emirati",
];

#[derive(Debug, Clone)]
pub struct WikipediaExtractor {
    nationalities: HashSet<String>,
    max_phrase_words: usize,
    pub max_tokens: usize,
}

impl Default for WikipediaExtractor {
    fn default() -> Self {
        Self::with_nationalities(DEFAULT_NATIONALITIES.iter().copied())
    }
}

impl WikipediaExtractor {
    pub fn with_nationalities<'a>(list: impl IntoIterator<Item = &'a str>) -> Self {
        let nationalities: HashSet<String> = list.into_iter().map(|s| s.to_lowercase()).collect();
        let max_phrase_words = nationalities
            .iter()
            .map(|n| n.split_whitespace().count())
            .max()
            .unwrap_or(1);
        WikipediaExtractor {
            nationalities,
            max_phrase_words,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn extract(&self, raw: &RawBio) -> Result<Bio, ExtractError> {
        let identities = self.identities(&raw.text)?;
        Ok(Bio::new(raw.id.clone(), raw.source, identities))
    }

    pub fn identities(&self, sentence: &str) -> Result<Vec<String>, ExtractError> {
        let mut text: String = sentence.nfc().collect();
        loop {
            let stripped = PARENTHETICAL.replace_all(&text, "").into_owned();
            if stripped == text {
                break;
            }
            text = stripped;
        }
        let text = text.trim().trim_end_matches(['.', '!', '?']).trim();
        let caps = COPULA
            .captures(text)
            .ok_or_else(|| ExtractError::NoCopulaFound(sentence.to_string()))?;
        let predicate = caps[2].to_lowercase();
        let predicate = predicate.split([';', ':']).next().unwrap_or_default();

        let spaced = predicate.replace(',', " , ");
        let mut phrases = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for token in spaced.split_whitespace() {
            match token {
                "," | "and" | "or" | "&" => self.flush(&mut current, &mut phrases),
                _ => {
                    let word = token.trim_matches(|c: char| !(c.is_alphanumeric() || c == '-'));
                    if STOPWORDS.contains(&word) {
                        break;
                    }
                    if current.is_empty() && SKIP_LEADING.contains(&word) {
                        continue;
                    }
                    if !word.is_empty() {
                        current.push(word);
                    }
                }
            }
        }
        self.flush(&mut current, &mut phrases);

        if phrases.is_empty() {
            return Err(ExtractError::NoCopulaFound(sentence.to_string()));
        }
        Ok(phrases)
    }

    fn flush(&self, current: &mut Vec<&str>, phrases: &mut Vec<String>) {
        let words = self.strip_nationalities(current);
        current.clear();
        if !words.is_empty() && words.len() <= self.max_tokens {
            let phrase = words.join(" ");
            if !phrases.contains(&phrase) {
                phrases.push(phrase);
            }
        }
    }

    fn strip_nationalities<'a>(&self, words: &[&'a str]) -> Vec<&'a str> {
        let mut out = Vec::with_capacity(words.len());
        let mut i = 0;
        'outer: while i < words.len() {
            for span in (1..=self.max_phrase_words.min(words.len() - i)).rev() {
                if self.nationalities.contains(&words[i..i + span].join(" ")) {
                    i += span;
                    continue 'outer;
                }
            }
            if self.is_hyphenated_nationality(words[i]) {
                i += 1;
                continue;
            }
            out.push(words[i]);
            i += 1;
        }
        out
    }

    // "irish-american", "american-born"
    fn is_hyphenated_nationality(&self, word: &str) -> bool {
        word.contains('-')
            && word
                .split('-')
                .all(|part| self.nationalities.contains(part) || part == "born")
    }
}

pub fn extract_wikipedia(raw: &RawBio) -> Result<Bio, ExtractError> {
    WikipediaExtractor::default().extract(raw)
}
