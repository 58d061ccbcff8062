use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{SplitCorpus, Vocabulary};
use crate::extraction::Bio;
use crate::io::sha256_hex;
use crate::Scalar;

use super::sgns::{sgd_step, ParamStore, Scratch};
use super::{EmbeddingTable, Mode, Provenance, TrainConfig, TrainError, CONVENTIONAL_DEFAULTS};

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean loss per positive example.
    pub epoch_losses: Vec<f64>,
    pub examples_per_epoch: Vec<u64>,
}

/// Trains on the trainable view of a split.
pub fn train_split<F: Scalar>(
    split: &SplitCorpus,
    config: &TrainConfig,
) -> Result<(EmbeddingTable<F>, TrainReport), TrainError> {
    train(&split.train_view(), &split.vocabulary, config)
}

/// Trains input/output vectors where each bio's in-vocabulary identities form
/// one sentence. Bios with fewer than two such identities contribute nothing.
pub fn train<F: Scalar>(
    bios: &[Bio],
    vocabulary: &Vocabulary,
    config: &TrainConfig,
) -> Result<(EmbeddingTable<F>, TrainReport), TrainError> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(TrainError::InvalidConfig(problems.join("; ")));
    }
    if vocabulary.len() < 2 {
        return Err(TrainError::VocabularyTooSmall(vocabulary.len()));
    }
    let sentences: Vec<Vec<u32>> = bios
        .iter()
        .map(|b| vocabulary.ids_of(b))
        .filter(|ids| ids.len() >= 2)
        .collect();
    if sentences.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }

    let mut counts = vec![0u64; vocabulary.len()];
    for s in &sentences {
        for &id in s {
            counts[id as usize] += 1;
        }
    }
    let noise = NoiseSampler::new(&counts, config.noise_exponent)?;
    let keep_prob = keep_probabilities(&counts, config.subsample_threshold);

    let dim = config.dim;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 0.5 / dim as f64;
    let input: Vec<F> = (0..vocabulary.len() * dim)
        .map(|_| F::from_f64_lossy(init_rng.gen_range(-bound..bound)))
        .collect();
    let output = vec![F::zero(); vocabulary.len() * dim];

    let provenance = Provenance {
        config_hash: config.hash(),
        corpus_hash: corpus_hash(vocabulary, &sentences),
        conventional_defaults: CONVENTIONAL_DEFAULTS.iter().map(|s| s.to_string()).collect(),
        epoch_losses: Vec::new(),
        run_config_hash: None,
    };
    let mut table = EmbeddingTable::new(vocabulary.phrases().to_vec(), dim, input, output, provenance)
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;

    let total_tokens: u64 = counts.iter().sum::<u64>() * config.epochs as u64;
    let job = Job {
        sentences: &sentences,
        noise: &noise,
        keep_prob: &keep_prob,
        config,
        total_tokens,
    };

    let report = if config.deterministic {
        train_serial(&mut table, &job)?
    } else {
        train_parallel(&mut table, &job)?
    };
    table.provenance.epoch_losses = report.epoch_losses.clone();
    Ok((table, report))
}

fn corpus_hash(vocabulary: &Vocabulary, sentences: &[Vec<u32>]) -> String {
    let mut text = String::new();
    for phrase in vocabulary.phrases() {
        text.push_str(phrase);
        text.push('\n');
    }
    for s in sentences {
        text.push('\n');
        for id in s {
            text.push_str(&id.to_string());
            text.push(' ');
        }
    }
    sha256_hex(text.as_bytes())
}

/// Keep probability per id under word2vec's frequent-word subsampling.
fn keep_probabilities(counts: &[u64], threshold: f64) -> Vec<f64> {
    if threshold <= 0.0 {
        return vec![1.0; counts.len()];
    }
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| {
            let f = c as f64 / total as f64;
            ((threshold / f).sqrt() + threshold / f).min(1.0)
        })
        .collect()
}

struct NoiseSampler {
    dist: WeightedIndex<f64>,
}

impl NoiseSampler {
    fn new(counts: &[u64], exponent: f64) -> Result<Self, TrainError> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(exponent)).collect();
        let dist = WeightedIndex::new(weights)
            .map_err(|e| TrainError::InvalidConfig(format!("noise distribution: {e}")))?;
        Ok(NoiseSampler { dist })
    }

    /// Draws `n` ids, redrawing any equal to `positive`.
    fn fill<R: Rng>(&self, rng: &mut R, positive: u32, n: usize, out: &mut Vec<u32>) {
        out.clear();
        while out.len() < n {
            let id = self.dist.sample(rng) as u32;
            if id != positive {
                out.push(id);
            }
        }
    }
}

struct Job<'a> {
    sentences: &'a [Vec<u32>],
    noise: &'a NoiseSampler,
    keep_prob: &'a [f64],
    config: &'a TrainConfig,
    total_tokens: u64,
}

impl Job<'_> {
    fn learning_rate<F: Scalar>(&self, processed: u64) -> F {
        let progress = (processed as f64 / self.total_tokens.max(1) as f64).min(1.0);
        let lr = self.config.learning_rate
            + (self.config.min_learning_rate - self.config.learning_rate) * progress;
        F::from_f64_lossy(lr)
    }
}

#[derive(Default)]
struct EpochTally {
    loss: f64,
    examples: u64,
}

/// Trains one sentence; returns `Err(example_index)` on a non-finite loss.
#[allow(clippy::too_many_arguments)]
fn train_sentence<F: Scalar, S: ParamStore<F>, R: Rng>(
    store: &mut S,
    sentence: &[u32],
    job: &Job<'_>,
    lr: F,
    rng: &mut R,
    scratch: &mut Scratch<F>,
    kept: &mut Vec<u32>,
    negatives: &mut Vec<u32>,
    contexts: &mut Vec<u32>,
    tally: &mut EpochTally,
) -> Result<(), u64> {
    kept.clear();
    for &id in sentence {
        let p = job.keep_prob[id as usize];
        if p >= 1.0 || rng.gen::<f64>() < p {
            kept.push(id);
        }
    }
    let window = job.config.window;
    let k = job.config.negatives_per_positive;
    for i in 0..kept.len() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(kept.len());
        match job.config.mode {
            Mode::SkipGram => {
                for j in (lo..hi).filter(|&j| j != i) {
                    job.noise.fill(rng, kept[j], k, negatives);
                    let loss = sgd_step(store, &kept[i..=i], kept[j], negatives, lr, scratch);
                    record(loss, tally)?;
                }
            }
            Mode::Cbow => {
                contexts.clear();
                contexts.extend((lo..hi).filter(|&j| j != i).map(|j| kept[j]));
                if contexts.is_empty() {
                    continue;
                }
                job.noise.fill(rng, kept[i], k, negatives);
                let loss = sgd_step(store, contexts, kept[i], negatives, lr, scratch);
                record(loss, tally)?;
            }
        }
    }
    Ok(())
}

fn record<F: Scalar>(loss: F, tally: &mut EpochTally) -> Result<(), u64> {
    let loss = loss.to_f64_lossless();
    if !loss.is_finite() {
        return Err(tally.examples);
    }
    tally.loss += loss;
    tally.examples += 1;
    Ok(())
}

fn train_serial<F: Scalar>(table: &mut EmbeddingTable<F>, job: &Job<'_>) -> Result<TrainReport, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(job.config.seed);
    rng.set_stream(1);
    let mut scratch = Scratch::new(job.config.dim);
    let (mut kept, mut negatives, mut contexts) = (Vec::new(), Vec::new(), Vec::new());
    let mut report = TrainReport {
        epoch_losses: Vec::new(),
        examples_per_epoch: Vec::new(),
    };
    let mut processed = 0u64;
    for epoch in 0..job.config.epochs {
        let mut tally = EpochTally::default();
        for sentence in job.sentences {
            let lr = job.learning_rate::<F>(processed);
            train_sentence(
                table,
                sentence,
                job,
                lr,
                &mut rng,
                &mut scratch,
                &mut kept,
                &mut negatives,
                &mut contexts,
                &mut tally,
            )
            .map_err(|step| TrainError::NonFiniteLoss {
                epoch,
                step: tally.examples.max(step),
            })?;
            processed += sentence.len() as u64;
        }
        report
            .epoch_losses
            .push(tally.loss / tally.examples.max(1) as f64);
        report.examples_per_epoch.push(tally.examples);
    }
    Ok(report)
}

/// Matrix shared between workers without locks. Values are stored as `f64`
/// bits; concurrent read-modify-write of the same row may lose updates.
struct SharedRows {
    dim: usize,
    input: Vec<AtomicU64>,
    output: Vec<AtomicU64>,
}

impl SharedRows {
    fn from_table<F: Scalar>(table: &EmbeddingTable<F>) -> Self {
        let pack = |v: &[F]| {
            v.iter()
                .map(|x| AtomicU64::new(x.to_f64_lossless().to_bits()))
                .collect()
        };
        SharedRows {
            dim: table.dim,
            input: pack(&table.input),
            output: pack(&table.output),
        }
    }

    fn write_back<F: Scalar>(&self, table: &mut EmbeddingTable<F>) {
        let unpack = |src: &[AtomicU64], dst: &mut [F]| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = F::from_f64_lossy(f64::from_bits(s.load(Ordering::Relaxed)));
            }
        };
        unpack(&self.input, &mut table.input);
        unpack(&self.output, &mut table.output);
    }
}

struct SharedHandle<'a>(&'a SharedRows);

impl SharedHandle<'_> {
    fn row(cells: &[AtomicU64], dim: usize, id: u32) -> &[AtomicU64] {
        &cells[id as usize * dim..(id as usize + 1) * dim]
    }

    fn read<F: Scalar>(cells: &[AtomicU64], dim: usize, id: u32, out: &mut [F]) {
        for (o, c) in out.iter_mut().zip(Self::row(cells, dim, id)) {
            *o = F::from_f64_lossy(f64::from_bits(c.load(Ordering::Relaxed)));
        }
    }

    fn add<F: Scalar>(cells: &[AtomicU64], dim: usize, id: u32, scale: F, delta: &[F]) {
        for (c, &d) in Self::row(cells, dim, id).iter().zip(delta) {
            let old = f64::from_bits(c.load(Ordering::Relaxed));
            let new = old + (scale * d).to_f64_lossless();
            c.store(new.to_bits(), Ordering::Relaxed);
        }
    }
}

impl<F: Scalar> ParamStore<F> for SharedHandle<'_> {
    fn read_input(&self, id: u32, out: &mut [F]) {
        Self::read(&self.0.input, self.0.dim, id, out)
    }

    fn read_output(&self, id: u32, out: &mut [F]) {
        Self::read(&self.0.output, self.0.dim, id, out)
    }

    fn add_input(&mut self, id: u32, scale: F, delta: &[F]) {
        Self::add(&self.0.input, self.0.dim, id, scale, delta)
    }

    fn add_output(&mut self, id: u32, scale: F, delta: &[F]) {
        Self::add(&self.0.output, self.0.dim, id, scale, delta)
    }
}

fn train_parallel<F: Scalar>(
    table: &mut EmbeddingTable<F>,
    job: &Job<'_>,
) -> Result<TrainReport, TrainError> {
    let threads = match job.config.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(job.sentences.len())
    .max(1);
    let shared = SharedRows::from_table(table);
    let processed = AtomicU64::new(0);
    let failed = AtomicBool::new(false);
    let failed_step = AtomicUsize::new(0);
    let chunk = job.sentences.len().div_ceil(threads);

    let mut report = TrainReport {
        epoch_losses: Vec::new(),
        examples_per_epoch: Vec::new(),
    };
    for epoch in 0..job.config.epochs {
        let tallies: Vec<EpochTally> = std::thread::scope(|scope| {
            let handles: Vec<_> = job
                .sentences
                .chunks(chunk)
                .enumerate()
                .map(|(worker, shard)| {
                    let (shared, processed, failed, failed_step) =
                        (&shared, &processed, &failed, &failed_step);
                    scope.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(job.config.seed);
                        rng.set_stream(((epoch as u64) << 32) | (worker as u64 + 2));
                        let mut store = SharedHandle(shared);
                        let mut scratch = Scratch::new(job.config.dim);
                        let (mut kept, mut negs, mut ctx) = (Vec::new(), Vec::new(), Vec::new());
                        let mut tally = EpochTally::default();
                        for sentence in shard {
                            if failed.load(Ordering::Relaxed) {
                                break;
                            }
                            let lr = job.learning_rate::<F>(processed.load(Ordering::Relaxed));
                            if let Err(step) = train_sentence(
                                &mut store,
                                sentence,
                                job,
                                lr,
                                &mut rng,
                                &mut scratch,
                                &mut kept,
                                &mut negs,
                                &mut ctx,
                                &mut tally,
                            ) {
                                failed.store(true, Ordering::Relaxed);
                                failed_step.store(step as usize, Ordering::Relaxed);
                                break;
                            }
                            processed.fetch_add(sentence.len() as u64, Ordering::Relaxed);
                        }
                        tally
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .collect()
        });
        if failed.load(Ordering::Relaxed) {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                step: failed_step.load(Ordering::Relaxed) as u64,
            });
        }
        let loss: f64 = tallies.iter().map(|t| t.loss).sum();
        let examples: u64 = tallies.iter().map(|t| t.examples).sum();
        report.epoch_losses.push(loss / examples.max(1) as f64);
        report.examples_per_epoch.push(examples);
    }
    shared.write_back(table);
    if !table.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            epoch: job.config.epochs,
            step: 0,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocabulary;
    use crate::extraction::{community_of, generate_synthetic, SizeRange, Source, SyntheticSpec};
    use crate::store::similarity;

    fn repeated(n: usize, ids: &[&str]) -> Vec<Bio> {
        (0..n)
            .map(|i| {
                Bio::new(
                    format!("b{i}"),
                    Source::Synthetic,
                    ids.iter().map(|s| s.to_string()).collect(),
                )
            })
            .collect()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            dim: 16,
            epochs: 20,
            window: 8,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn communities(seed: u64) -> Vec<Bio> {
        generate_synthetic(&SyntheticSpec {
            n_communities: 3,
            identities_per_community: 6,
            n_bios: 600,
            identities_per_bio: SizeRange { min: 3, max: 4 },
            noise_rate: 0.0,
            seed,
            popularity_exponent: 0.0,
        })
        .unwrap()
    }

    /// Mean cosine within communities minus mean cosine across them.
    fn separation<F: Scalar>(table: &EmbeddingTable<F>, vocab: &Vocabulary) -> f64 {
        let (mut within, mut across) = (Vec::new(), Vec::new());
        for a in 0..vocab.len() as u32 {
            for b in a + 1..vocab.len() as u32 {
                let s = similarity(table.input_vector(a), table.input_vector(b)).unwrap();
                if community_of(vocab.phrase(a)) == community_of(vocab.phrase(b)) {
                    within.push(s);
                } else {
                    across.push(s);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        mean(&within) - mean(&across)
    }

    #[test]
    fn skipgram_separates_communities() {
        let bios = communities(1);
        let vocab = build_vocabulary(&bios, 1).unwrap();
        let (table, report) = train::<f32>(&bios, &vocab, &small_config()).unwrap();
        let gap = separation(&table, &vocab);
        assert!(gap > 0.3, "{gap}");
        assert!(report.epoch_losses.last() < report.epoch_losses.first());
        assert_eq!(table.provenance.epoch_losses, report.epoch_losses);
    }

    #[test]
    fn cbow_separates_communities() {
        let bios = communities(2);
        let vocab = build_vocabulary(&bios, 1).unwrap();
        let config = TrainConfig {
            mode: Mode::Cbow,
            ..small_config()
        };
        let (table, report) = train::<f64>(&bios, &vocab, &config).unwrap();
        assert!(report.epoch_losses[19] < report.epoch_losses[0]);
        let gap = separation(&table, &vocab);
        assert!(gap > 0.3, "{gap}");
    }

    #[test]
    fn deterministic_mode_is_bit_identical() {
        let mut bios = repeated(50, &["a", "b", "c"]);
        bios.extend(repeated(50, &["c", "d"]));
        let vocab = build_vocabulary(&bios, 1).unwrap();
        let (t1, _) = train::<f32>(&bios, &vocab, &small_config()).unwrap();
        let (t2, _) = train::<f32>(&bios, &vocab, &small_config()).unwrap();
        assert_eq!(t1, t2);
        let other = TrainConfig {
            seed: 4,
            ..small_config()
        };
        let (t3, _) = train::<f32>(&bios, &vocab, &other).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn parallel_mode_is_finite_and_learns() {
        let bios = communities(3);
        let vocab = build_vocabulary(&bios, 1).unwrap();
        let config = TrainConfig {
            deterministic: false,
            threads: 4,
            ..small_config()
        };
        let (table, report) = train::<f32>(&bios, &vocab, &config).unwrap();
        assert!(table.is_finite());
        assert_eq!(report.epoch_losses.len(), 20);
        let gap = separation(&table, &vocab);
        assert!(gap > 0.3, "{gap}");
    }

    #[test]
    fn divergence_is_reported() {
        let bios = repeated(10, &["a", "b", "c"]);
        let vocab = build_vocabulary(&bios, 1).unwrap();
        let config = TrainConfig {
            learning_rate: 1e300,
            min_learning_rate: 1e300,
            ..small_config()
        };
        let err = train::<f64>(&bios, &vocab, &config).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteLoss { .. }), "{err:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let bios = repeated(3, &["a", "b"]);
        let vocab = build_vocabulary(&bios, 1).unwrap();
        let bad = TrainConfig {
            dim: 1,
            ..small_config()
        };
        assert!(matches!(
            train::<f32>(&bios, &vocab, &bad),
            Err(TrainError::InvalidConfig(_))
        ));
        let lonely = repeated(3, &["a"]);
        assert!(matches!(
            train::<f32>(&lonely, &vocab, &small_config()),
            Err(TrainError::EmptyCorpus)
        ));
    }

    #[test]
    fn subsampling_keeps_rare_ids() {
        let keep = keep_probabilities(&[1000, 1], 1e-3);
        assert!(keep[0] < 0.1);
        assert_eq!(keep[1], 1.0);
        assert_eq!(keep_probabilities(&[5, 5], 0.0), vec![1.0, 1.0]);
    }

    #[test]
    fn init_range() {
        let bios = repeated(2, &["a", "b"]);
        let vocab = build_vocabulary(&bios, 1).unwrap();
        let config = TrainConfig {
            dim: 10,
            epochs: 1,
            learning_rate: 1e-12,
            min_learning_rate: 0.0,
            ..small_config()
        };
        let (table, _) = train::<f64>(&bios, &vocab, &config).unwrap();
        assert!(table.input.iter().all(|v| v.abs() <= 0.05 + 1e-9));
        assert!(table.output.iter().all(|v| v.abs() < 1e-9));
    }
}
