use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::io::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    SkipGram,
    Cbow,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::SkipGram => "skipgram",
            Mode::Cbow => "cbow",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "skipgram" | "skip-gram" | "sg" => Ok(Mode::SkipGram),
            "cbow" => Ok(Mode::Cbow),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// Hyperparameters of the entity-only trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    /// Maximum distance between a center identity and its context.
    pub window: usize,
    pub mode: Mode,
    pub negatives_per_positive: usize,
    /// Initial learning rate, decayed linearly to `min_learning_rate`.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    /// Frequent-identity subsampling threshold; zero disables it.
    pub subsample_threshold: f64,
    /// Exponent applied to unigram counts in the negative-sampling distribution.
    pub noise_exponent: f64,
    pub seed: u64,
    /// Single worker, bit-identical output for identical inputs.
    pub deterministic: bool,
    /// Worker count when not deterministic; zero picks the available parallelism.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 768,
            epochs: 300,
            window: 8,
            mode: Mode::SkipGram,
            negatives_per_positive: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            subsample_threshold: 0.0,
            noise_exponent: 0.75,
            seed: 0,
            deterministic: true,
            threads: 0,
        }
    }
}

/// Hyperparameters whose defaults are word2vec conventions rather than
/// values reported alongside the entity-only model.
pub const CONVENTIONAL_DEFAULTS: &[&str] = &[
    "negatives_per_positive",
    "learning_rate",
    "min_learning_rate",
    "subsample_threshold",
    "noise_exponent",
];

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.dim < 2 {
            problems.push(format!("dim must be at least 2, got {}", self.dim));
        }
        if self.window < 1 {
            problems.push("window must be at least 1".to_string());
        }
        if self.epochs < 1 {
            problems.push("epochs must be at least 1".to_string());
        }
        if self.negatives_per_positive < 1 {
            problems.push("negatives_per_positive must be at least 1".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.min_learning_rate >= 0.0 && self.min_learning_rate <= self.learning_rate) {
            problems.push("min_learning_rate must lie in [0, learning_rate]".to_string());
        }
        if !(self.subsample_threshold >= 0.0 && self.subsample_threshold.is_finite()) {
            problems.push("subsample_threshold must be non-negative".to_string());
        }
        if !self.noise_exponent.is_finite() {
            problems.push("noise_exponent must be finite".to_string());
        }
        problems
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
