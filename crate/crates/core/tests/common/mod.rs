//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use entvec::corpus::{EvalInstance, SplitKind};
use entvec::dimension::SurveyRating;
use entvec::embed::{cbow_loss_and_gradient, loss_and_gradient, EmbeddingTable, Matrix, Provenance};
use entvec::extraction::{Bio, SizeRange, SyntheticSpec};
use entvec::store::EmbeddingProvider;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn planted_spec(n_bios: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_communities: 10,
        identities_per_community: 50,
        n_bios,
        identities_per_bio: SizeRange { min: 3, max: 6 },
        noise_rate: 0.1,
        seed,
        popularity_exponent: 1.0,
    }
}

pub fn random_provider(phrases: &[String], dim: usize, seed: u64) -> EmbeddingProvider<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..phrases.len() * dim)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    EmbeddingProvider::internal(Matrix::new(phrases.to_vec(), dim, data).unwrap()).unwrap()
}

// ---- corpus ----

/// Document frequencies by direct counting over distinct phrases per bio.
pub fn oracle_doc_freq(bios: &[Bio]) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for bio in bios {
        let distinct: BTreeSet<&String> = bio.identities.iter().collect();
        for p in distinct {
            *out.entry(p.clone()).or_insert(0) += 1;
        }
    }
    out
}

/// Vocabulary as (phrase, df) ordered by descending df, then phrase.
pub fn oracle_vocabulary(bios: &[Bio], min_df: u64) -> Vec<(String, u64)> {
    let mut v: Vec<(String, u64)> = oracle_doc_freq(bios)
        .into_iter()
        .filter(|(_, n)| *n >= min_df)
        .collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

/// Unordered in-vocabulary pairs sharing at least one bio.
pub fn oracle_pairs(bios: &[Bio], vocab: &HashSet<String>) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for bio in bios {
        let known: Vec<&String> = bio.identities.iter().filter(|p| vocab.contains(*p)).collect();
        for a in &known {
            for b in &known {
                if a < b {
                    out.insert(((*a).clone(), (*b).clone()));
                }
            }
        }
    }
    out
}

/// Every instance a test bio yields when all in-vocabulary identities are
/// drawn as targets.
pub fn oracle_all_instances(
    test: &[Bio],
    vocab: &HashSet<String>,
) -> BTreeSet<(String, String, Vec<String>, SplitKind)> {
    let mut out = BTreeSet::new();
    for bio in test {
        let mut seen = HashSet::new();
        let ids: Vec<String> = bio
            .identities
            .iter()
            .filter(|p| seen.insert(p.as_str()))
            .cloned()
            .collect();
        if ids.len() < 2 || !ids.iter().any(|p| vocab.contains(p)) {
            continue;
        }
        for (t, target) in ids.iter().enumerate() {
            if !vocab.contains(target) {
                continue;
            }
            let remainder: Vec<String> = ids
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != t)
                .map(|(_, p)| p.clone())
                .collect();
            let kind = if remainder.iter().any(|p| vocab.contains(p)) {
                SplitKind::Main
            } else {
                SplitKind::General
            };
            out.insert((bio.id.clone(), target.clone(), remainder, kind));
        }
    }
    out
}

pub fn instance_key(i: &EvalInstance) -> (String, String, Vec<String>, SplitKind) {
    (i.bio_id.clone(), i.target.clone(), i.remainder.clone(), i.split)
}

// ---- gradients ----

/// Entries scaled by 1/sqrt(dim) so scores stay O(1) at any dimension.
fn random_table(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> EmbeddingTable<f64> {
    let scale = 1.0 / (dim as f64).sqrt();
    let mut draw = |k: usize| {
        (0..k)
            .map(|_| scale * rng.gen_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let phrases = (0..n).map(|i| format!("p{i}")).collect();
    let (input, output) = (draw(n * dim), draw(n * dim));
    EmbeddingTable::new(phrases, dim, input, output, Provenance::default()).unwrap()
}

/// Relative error with a denominator floor: central differences carry about
/// 1e-10 of absolute rounding noise, so near-zero gradients are compared on
/// an absolute scale.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

#[derive(Clone, Copy)]
pub enum Objective {
    SkipGram,
    Cbow,
}

/// Largest relative error between analytic and central-difference gradients
/// over every touched parameter of one random example.
pub fn gradient_check(objective: Objective, seed: u64, dim: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 12;
    let mut table = random_table(&mut rng, n, dim);
    let negatives: Vec<u32> = (0..5).map(|_| rng.gen_range(0..n as u32)).collect();
    let positive = rng.gen_range(0..n as u32);
    let inputs: Vec<u32> = match objective {
        Objective::SkipGram => vec![rng.gen_range(0..n as u32)],
        Objective::Cbow => (0..rng.gen_range(1..5))
            .map(|_| rng.gen_range(0..n as u32))
            .collect(),
    };

    let eval = |t: &EmbeddingTable<f64>| match objective {
        Objective::SkipGram => loss_and_gradient(inputs[0], positive, &negatives, t),
        Objective::Cbow => cbow_loss_and_gradient(&inputs, positive, &negatives, t),
    };
    let g = eval(&table);

    // Analytic gradients summed per touched row.
    let mut d_in: HashMap<u32, Vec<f64>> = HashMap::new();
    for &i in &inputs {
        let acc = d_in.entry(i).or_insert_with(|| vec![0.0; dim]);
        acc.iter_mut().zip(&g.input).for_each(|(a, x)| *a += x);
    }
    let mut d_out: HashMap<u32, Vec<f64>> = HashMap::new();
    for (id, grad) in
        std::iter::once((positive, &g.positive)).chain(negatives.iter().copied().zip(&g.negatives))
    {
        let acc = d_out.entry(id).or_insert_with(|| vec![0.0; dim]);
        acc.iter_mut().zip(grad).for_each(|(a, x)| *a += x);
    }

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (rows, is_input) in [(&d_in, true), (&d_out, false)] {
        for (&id, analytic) in rows {
            for k in 0..dim {
                let nudge = |t: &mut EmbeddingTable<f64>, delta: f64| {
                    let row = if is_input {
                        t.input_vector_mut(id)
                    } else {
                        t.output_vector_mut(id)
                    };
                    row[k] += delta;
                };
                nudge(&mut table, h);
                let plus = eval(&table).loss;
                nudge(&mut table, -2.0 * h);
                let minus = eval(&table).loss;
                nudge(&mut table, h);
                worst = worst.max(relative_error(analytic[k], (plus - minus) / (2.0 * h)));
            }
        }
    }
    worst
}

// ---- dimension evaluation ----

/// Fraction of valid comparisons ordered the same way by survey and model,
/// averaged over identities, written as a double loop over all ordered pairs.
pub fn oracle_agreement(ratings: &[SurveyRating], projections: &[f64], high_is_a: bool) -> Option<f64> {
    let n = ratings.len();
    let mut per_identity = Vec::new();
    for i in 0..n {
        let mut valid = 0usize;
        let mut agree = 0usize;
        for j in 0..n {
            if i == j {
                continue;
            }
            let gap = (ratings[i].mean - ratings[j].mean).abs();
            let sd = if ratings[i].sd > ratings[j].sd {
                ratings[i].sd
            } else {
                ratings[j].sd
            };
            if gap <= sd {
                continue;
            }
            valid += 1;
            let survey_says_i_higher = ratings[i].mean > ratings[j].mean;
            let model_says_i_towards_a = projections[i] > projections[j];
            let model_says_i_towards_b = projections[i] < projections[j];
            let model_says_i_higher = if high_is_a {
                model_says_i_towards_a
            } else {
                model_says_i_towards_b
            };
            let model_tied = projections[i] == projections[j];
            if !model_tied && model_says_i_higher == survey_says_i_higher {
                agree += 1;
            }
        }
        if valid > 0 {
            per_identity.push(agree as f64 / valid as f64);
        }
    }
    if per_identity.is_empty() {
        None
    } else {
        Some(per_identity.iter().sum::<f64>() / per_identity.len() as f64)
    }
}
