//! Vocabulary, co-occurrence index and train/test splits.

mod cooccur;
pub mod files;
mod split;
mod vocab;

use thiserror::Error;

pub use cooccur::{build_cooccurrence, CooccurrenceIndex};
pub use split::{split_corpus, test_count, EvalInstance, SplitConfig, SplitCorpus, SplitKind, SplitStats};
pub use vocab::{build_vocabulary, doc_frequencies, filter_trainable, Vocabulary};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no identity meets the document-frequency threshold")]
    EmptyVocabulary,
    #[error("minimum document frequency must be at least 1")]
    InvalidThreshold,
    #[error("duplicate vocabulary phrase {0:?}")]
    DuplicatePhrase(String),
    #[error("test fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("instances per bio must be at least 1")]
    InvalidInstanceCount,
    #[error("degenerate split: {n_test} of {n_bios} bios held out")]
    DegenerateSplit { n_bios: usize, n_test: usize },
}
