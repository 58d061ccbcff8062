//! Held-out identity prediction: rank the target among the whole vocabulary
//! by cosine similarity to the remainder embedding.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EvalInstance, SplitKind, Vocabulary};
use crate::io::FormatError;
use crate::store::{EmbeddingProvider, StoreError};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("target {0:?} is not in the vocabulary")]
    TargetNotInVocabulary(String),
    #[error("instances mix main and general splits")]
    MixedSplits,
    #[error("invalid prediction config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    /// Fraction of the vocabulary counted as a hit for top-percent accuracy.
    pub top_fraction: f64,
    /// Softmax temperature applied to similarities.
    pub temperature: f64,
    /// Lower edges of the second and later frequency buckets.
    pub bucket_edges: Vec<u64>,
    /// Z-score the similarity vector of each instance before the softmax.
    pub standardize: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            top_fraction: 0.01,
            temperature: 1.0,
            bucket_edges: vec![300, 10_000],
            standardize: false,
        }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.top_fraction > 0.0 && self.top_fraction < 1.0) {
            problems.push(format!(
                "top_fraction must lie in (0, 1), got {}",
                self.top_fraction
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            problems.push(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.bucket_edges.first() == Some(&0) || self.bucket_edges.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("bucket_edges must be positive and strictly increasing".to_string());
        }
        problems
    }
}

/// `ceil(fraction × vocab_size)`, at least 1.
pub fn top_percent_cutoff(vocab_size: usize, fraction: f64) -> usize {
    assert!(fraction > 0.0 && fraction < 1.0, "fraction must lie in (0, 1)");
    // the epsilon absorbs products like 0.01 × 100 = 1.0000000000000002
    ((fraction * vocab_size as f64 - 1e-9).ceil() as usize).max(1)
}

/// 1-based rank of `target` after sorting descending with ties broken by
/// index.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > t || (s == t && i < target))
        .count()
}

/// `s_t/T − logsumexp(s/T)`, shifted by the maximum for stability.
pub fn log_softmax(scores: &[f64], target: usize, temperature: f64) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) / temperature;
    let sum: f64 = scores.iter().map(|&s| (s / temperature - max).exp()).sum();
    scores[target] / temperature - max - sum.ln()
}

fn standardize(scores: &mut [f64]) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for s in scores.iter_mut() {
        *s -= mean;
        if sd > 0.0 {
            *s /= sd;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub instance_id: String,
    pub target: String,
    pub rank: usize,
    pub log_softmax: f64,
    pub in_top: bool,
    pub similarity_of_target: f64,
    /// Training document frequency of the target.
    pub target_frequency: u64,
    pub remainder_is_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub min_frequency: u64,
    /// Inclusive upper edge; `None` is unbounded.
    pub max_frequency: Option<u64>,
    pub n_instances: usize,
    pub avg_rank: Option<f64>,
    pub mean_log_softmax: Option<f64>,
    pub top_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Option<SplitKind>,
    pub n_instances: usize,
    pub vocab_size: usize,
    pub top_cutoff: usize,
    pub avg_rank: f64,
    pub mean_log_softmax: f64,
    pub sum_log_softmax: f64,
    /// Fraction of instances ranked within the top cutoff.
    pub top1pct_accuracy: f64,
    pub n_zero_remainders: usize,
    pub buckets: Vec<BucketReport>,
    pub config: PredictConfig,
}

impl EvalReport {
    /// Aggregates per-instance results; order of `results` does not matter.
    pub fn from_results(
        results: &[PredictionResult],
        split: Option<SplitKind>,
        vocab_size: usize,
        config: &PredictConfig,
    ) -> EvalReport {
        let n = results.len();
        let mean = |f: &dyn Fn(&PredictionResult) -> f64, rs: &[&PredictionResult]| {
            if rs.is_empty() {
                None
            } else {
                Some(rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64)
            }
        };
        let all: Vec<&PredictionResult> = results.iter().collect();
        let rank = |r: &PredictionResult| r.rank as f64;
        let lsm = |r: &PredictionResult| r.log_softmax;
        let hit = |r: &PredictionResult| if r.in_top { 1.0 } else { 0.0 };

        let mut lowers = vec![1u64];
        lowers.extend(&config.bucket_edges);
        let buckets = lowers
            .iter()
            .enumerate()
            .map(|(i, &lo)| {
                let hi = lowers.get(i + 1).map(|&next| next - 1);
                let members: Vec<&PredictionResult> = results
                    .iter()
                    .filter(|r| r.target_frequency >= lo && hi.is_none_or(|h| r.target_frequency <= h))
                    .collect();
                BucketReport {
                    min_frequency: lo,
                    max_frequency: hi,
                    n_instances: members.len(),
                    avg_rank: mean(&rank, &members),
                    mean_log_softmax: mean(&lsm, &members),
                    top_accuracy: mean(&hit, &members),
                }
            })
            .collect();

        EvalReport {
            split,
            n_instances: n,
            vocab_size,
            top_cutoff: top_percent_cutoff(vocab_size, config.top_fraction),
            avg_rank: mean(&rank, &all).unwrap_or(f64::NAN),
            mean_log_softmax: mean(&lsm, &all).unwrap_or(f64::NAN),
            sum_log_softmax: results.iter().map(|r| r.log_softmax).sum(),
            top1pct_accuracy: mean(&hit, &all).unwrap_or(f64::NAN),
            n_zero_remainders: results.iter().filter(|r| r.remainder_is_zero).count(),
            buckets,
            config: config.clone(),
        }
    }

    /// Plain-text summary table.
    pub fn to_table(&self) -> String {
        let split = self.split.map_or("-".to_string(), |s| s.to_string());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "split {split}  instances {}  |V| {}  cutoff {}",
            self.n_instances, self.vocab_size, self.top_cutoff
        );
        let _ = writeln!(
            out,
            "{:<18} {:>9} {:>10} {:>12} {:>9}",
            "target freq", "n", "avg rank", "log softmax", "top acc"
        );
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        for b in &self.buckets {
            let range = match b.max_frequency {
                Some(hi) => format!("{}-{}", b.min_frequency, hi),
                None => format!(">={}", b.min_frequency),
            };
            let _ = writeln!(
                out,
                "{:<18} {:>9} {:>10} {:>12} {:>9}",
                range,
                b.n_instances,
                fmt(b.avg_rank),
                fmt(b.mean_log_softmax),
                fmt(b.top_accuracy)
            );
        }
        let _ = writeln!(
            out,
            "{:<18} {:>9} {:>10.4} {:>12.4} {:>9.4}",
            "all", self.n_instances, self.avg_rank, self.mean_log_softmax, self.top1pct_accuracy
        );
        out
    }
}

/// A provider aligned to a vocabulary, ready to score instances.
pub struct Predictor<'a, F> {
    provider: EmbeddingProvider<F>,
    vocabulary: &'a Vocabulary,
    config: PredictConfig,
    cutoff: usize,
}

impl<'a, F: Scalar> Predictor<'a, F> {
    pub fn new(
        provider: &EmbeddingProvider<F>,
        vocabulary: &'a Vocabulary,
        config: PredictConfig,
    ) -> Result<Self, PredictError> {
        let problems = config.validate();
        if !problems.is_empty() {
            return Err(PredictError::InvalidConfig(problems.join("; ")));
        }
        Ok(Predictor {
            provider: provider.aligned_to(vocabulary)?,
            vocabulary,
            cutoff: top_percent_cutoff(vocabulary.len(), config.top_fraction),
            config,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Similarities of the remainder to every vocabulary phrase, by id.
    pub fn scores(&self, instance: &EvalInstance) -> Result<(Vec<f64>, bool), PredictError> {
        let remainder = self
            .provider
            .embed_instance(&instance.instance_id(), &instance.remainder)?;
        Ok((self.provider.similarities(&remainder.vector)?, remainder.is_zero))
    }

    pub fn score(&self, instance: &EvalInstance) -> Result<PredictionResult, PredictError> {
        let target = self
            .vocabulary
            .id(&instance.target)
            .ok_or_else(|| PredictError::TargetNotInVocabulary(instance.target.clone()))?
            as usize;
        let (mut scores, remainder_is_zero) = self.scores(instance)?;
        let similarity_of_target = scores[target];
        if self.config.standardize {
            standardize(&mut scores);
        }
        let rank = rank_of(&scores, target);
        Ok(PredictionResult {
            instance_id: instance.instance_id(),
            target: instance.target.clone(),
            rank,
            log_softmax: log_softmax(&scores, target, self.config.temperature),
            in_top: rank <= self.cutoff,
            similarity_of_target,
            target_frequency: self.vocabulary.doc_frequency(target as u32),
            remainder_is_zero,
        })
    }

    /// Scores instances in parallel; results keep input order.
    pub fn evaluate(
        &self,
        instances: &[EvalInstance],
    ) -> Result<(EvalReport, Vec<PredictionResult>), PredictError> {
        let split = match instances.first() {
            None => None,
            Some(first) => {
                if instances.iter().any(|i| i.split != first.split) {
                    return Err(PredictError::MixedSplits);
                }
                Some(first.split)
            }
        };
        let results: Vec<PredictionResult> = instances
            .par_iter()
            .map(|i| self.score(i))
            .collect::<Result<_, _>>()?;
        let report = EvalReport::from_results(&results, split, self.vocabulary.len(), &self.config);
        Ok((report, results))
    }
}

/// Aligns `provider` to `vocabulary` and evaluates all `instances`.
pub fn evaluate<F: Scalar>(
    provider: &EmbeddingProvider<F>,
    instances: &[EvalInstance],
    vocabulary: &Vocabulary,
    config: &PredictConfig,
) -> Result<(EvalReport, Vec<PredictionResult>), PredictError> {
    Predictor::new(provider, vocabulary, config.clone())?.evaluate(instances)
}

/// Per-instance TSV dump with a header row.
pub fn write_results_tsv<W: Write>(mut w: W, results: &[PredictionResult]) -> Result<(), FormatError> {
    writeln!(
        w,
        "instance_id\ttarget\trank\tlog_softmax\tin_top\tsimilarity\ttarget_frequency\tremainder_is_zero"
    )?;
    for r in results {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.instance_id,
            r.target,
            r.rank,
            r.log_softmax,
            r.in_top,
            r.similarity_of_target,
            r.target_frequency,
            r.remainder_is_zero
        )?;
    }
    Ok(())
}
