use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::extraction::Bio;

use super::{build_vocabulary, filter_trainable, CorpusError, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    /// Remainder contains at least one training-vocabulary identity.
    Main,
    /// Remainder contains none.
    General,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Main => "main",
            SplitKind::General => "general",
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "main" => Ok(SplitKind::Main),
            "general" => Ok(SplitKind::General),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One held-out prediction problem: recover `target` from `remainder`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalInstance {
    pub bio_id: String,
    /// Index of this instance among those drawn from the same bio.
    pub draw: usize,
    pub remainder: Vec<String>,
    pub target: String,
    pub split: SplitKind,
}

impl EvalInstance {
    /// Key used by instance-embedding files: `bio_id#draw`.
    pub fn instance_id(&self) -> String {
        format!("{}#{}", self.bio_id, self.draw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub min_doc_freq: u64,
    pub seed: u64,
    pub instances_per_bio: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.2,
            min_doc_freq: 100,
            seed: 0,
            instances_per_bio: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub n_input_bios: usize,
    pub n_train_bios: usize,
    pub n_trainable_bios: usize,
    pub n_test_bios_raw: usize,
    pub n_test_bios_clean: usize,
    pub n_main_instances: usize,
    pub n_general_instances: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCorpus {
    /// Every bio in the training portion, deduplicated; the vocabulary is a
    /// function of exactly this list. Use [`SplitCorpus::train_view`] for the
    /// bios a model trains on.
    pub train: Vec<Bio>,
    /// Test bios that survived cleaning.
    pub test: Vec<Bio>,
    pub test_main: Vec<EvalInstance>,
    pub test_general: Vec<EvalInstance>,
    pub vocabulary: Vocabulary,
    pub stats: SplitStats,
}

impl SplitCorpus {
    /// Training bios with at least two in-vocabulary identities.
    pub fn train_view(&self) -> Vec<Bio> {
        filter_trainable(&self.train, &self.vocabulary)
    }
}

/// Number of bios held out for testing.
pub fn test_count(n_bios: usize, test_fraction: f64) -> usize {
    (n_bios as f64 * test_fraction).round() as usize
}

pub fn split_corpus(bios: &[Bio], config: &SplitConfig) -> Result<SplitCorpus, CorpusError> {
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(config.test_fraction));
    }
    if config.instances_per_bio == 0 {
        return Err(CorpusError::InvalidInstanceCount);
    }
    let n_test = test_count(bios.len(), config.test_fraction);
    if n_test == 0 || n_test >= bios.len() {
        return Err(CorpusError::DegenerateSplit {
            n_bios: bios.len(),
            n_test,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..bios.len()).collect();
    order.shuffle(&mut rng);
    let mut is_test = vec![false; bios.len()];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }

    let (mut train, mut test_raw) = (Vec::new(), Vec::new());
    for (bio, &held_out) in bios.iter().zip(&is_test) {
        if held_out {
            test_raw.push(bio.dedup());
        } else {
            train.push(bio.dedup());
        }
    }

    let vocabulary = build_vocabulary(&train, config.min_doc_freq)?;
    let n_trainable = filter_trainable(&train, &vocabulary).len();

    let test: Vec<Bio> = test_raw
        .iter()
        .filter(|b| b.identities.len() >= 2 && b.identities.iter().any(|p| vocabulary.contains(p)))
        .cloned()
        .collect();

    let (mut test_main, mut test_general) = (Vec::new(), Vec::new());
    for bio in &test {
        let candidates: Vec<usize> = (0..bio.identities.len())
            .filter(|&i| vocabulary.contains(&bio.identities[i]))
            .collect();
        let k = config.instances_per_bio.min(candidates.len());
        for (draw, pick) in sample(&mut rng, candidates.len(), k).into_iter().enumerate() {
            let target_pos = candidates[pick];
            let remainder: Vec<String> = bio
                .identities
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != target_pos)
                .map(|(_, p)| p.clone())
                .collect();
            let split = if remainder.iter().any(|p| vocabulary.contains(p)) {
                SplitKind::Main
            } else {
                SplitKind::General
            };
            let instance = EvalInstance {
                bio_id: bio.id.clone(),
                draw,
                remainder,
                target: bio.identities[target_pos].clone(),
                split,
            };
            match split {
                SplitKind::Main => test_main.push(instance),
                SplitKind::General => test_general.push(instance),
            }
        }
    }

    let stats = SplitStats {
        n_input_bios: bios.len(),
        n_train_bios: train.len(),
        n_trainable_bios: n_trainable,
        n_test_bios_raw: test_raw.len(),
        n_test_bios_clean: test.len(),
        n_main_instances: test_main.len(),
        n_general_instances: test_general.len(),
        vocab_size: vocabulary.len(),
    };
    Ok(SplitCorpus {
        train,
        test,
        test_main,
        test_general,
        vocabulary,
        stats,
    })
}
