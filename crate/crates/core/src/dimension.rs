//! Projection of identities onto seed-pair dimensions and pairwise ranking
//! agreement with survey ratings.
//!
//! For identities `i`, `j` with survey means `m` and standard deviations `s`,
//! the pair is compared only when `|m_i - m_j|` exceeds the exclusion
//! threshold (by default `max(s_i, s_j)`). The model agrees when its
//! projections order the pair the same way as the survey; equal projections
//! count as disagreement.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{identity_name, SyntheticSpec};
use crate::io::{sha256_hex, FormatError};
use crate::store::EmbeddingProvider;
use crate::Scalar;

/// Seed pairs shipped with the crate.
pub const DEFAULT_DIMENSIONS: &str = include_str!("../data/dimensions.toml");

/// Prefix of race category subdimensions.
pub const RACE_PREFIX: &str = "race:";

#[derive(Debug, Error)]
pub enum DimensionError {
    #[error("dimension {0:?}: seed pairs have zero mean difference")]
    DegenerateDimension(String),
    #[error("dimension {0:?} has no seed pairs")]
    NoSeedPairs(String),
    #[error("unknown phrase {0:?}")]
    UnknownPhrase(String),
    #[error("dimension {0:?}: every comparison is excluded")]
    NoValidComparisons(String),
    #[error("dimension {dimension:?}: {found} resolvable survey identities, at least 2 needed")]
    TooFewIdentities { dimension: String, found: usize },
    #[error("invalid dimension file: {0}")]
    Config(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pole {
    A,
    B,
}

impl Pole {
    fn flipped(self) -> Pole {
        match self {
            Pole::A => Pole::B,
            Pole::B => Pole::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSpec {
    pub name: String,
    /// `(pole a, pole b)` phrases.
    pub pairs: Vec<(String, String)>,
    /// Pole lying at the high end of the survey scale.
    pub high_pole: Pole,
}

impl DimensionSpec {
    /// Same dimension with every pair reversed and the orientation flipped.
    pub fn swapped(&self) -> DimensionSpec {
        DimensionSpec {
            name: self.name.clone(),
            pairs: self.pairs.iter().map(|(a, b)| (b.clone(), a.clone())).collect(),
            high_pole: self.high_pole.flipped(),
        }
    }

    pub fn is_race(&self) -> bool {
        self.name.starts_with(RACE_PREFIX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFile {
    #[serde(rename = "dimension")]
    pub dimensions: Vec<DimensionSpec>,
}

impl DimensionFile {
    pub fn parse(text: &str) -> Result<Self, DimensionError> {
        let file: DimensionFile = toml::from_str(text).map_err(|e| DimensionError::Config(e.to_string()))?;
        let mut seen = HashSet::new();
        for d in &file.dimensions {
            if d.pairs.is_empty() {
                return Err(DimensionError::NoSeedPairs(d.name.clone()));
            }
            if !seen.insert(d.name.as_str()) {
                return Err(DimensionError::Config(format!(
                    "duplicate dimension {:?}",
                    d.name
                )));
            }
        }
        Ok(file)
    }

    pub fn default_file() -> Self {
        Self::parse(DEFAULT_DIMENSIONS).expect("shipped dimension file parses")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("dimension file serializes")
    }
}

/// Hash cited by reports for the dimension file contents.
pub fn dimensions_hash(text: &str) -> String {
    sha256_hex(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRating {
    pub identity: String,
    pub dimension: String,
    pub mean: f64,
    pub sd: f64,
    pub n_raters: u32,
}

const SURVEY_HEADER: &str = "identity\tdimension\tmean\tsd\tn_raters";

/// Reads survey TSV rows; a leading header row is skipped.
pub fn read_survey<R: BufRead>(reader: R) -> Result<Vec<SurveyRating>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() || (i == 0 && line.starts_with("identity\t")) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(FormatError::at(
                n,
                format!("expected 5 fields, found {}", f.len()),
            ));
        }
        let num = |s: &str, what: &str| -> Result<f64, FormatError> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| FormatError::at(n, format!("bad {what} {s:?}")))
        };
        let rating = SurveyRating {
            identity: f[0].to_string(),
            dimension: f[1].to_string(),
            mean: num(f[2], "mean")?,
            sd: num(f[3], "sd")?,
            n_raters: f[4]
                .trim()
                .parse()
                .map_err(|_| FormatError::at(n, format!("bad n_raters {:?}", f[4])))?,
        };
        if rating.sd < 0.0 {
            return Err(FormatError::at(n, "sd must be non-negative"));
        }
        if rating.n_raters < 3 {
            return Err(FormatError::at(n, "at least 3 raters required"));
        }
        out.push(rating);
    }
    Ok(out)
}

pub fn write_survey<W: Write>(mut w: W, ratings: &[SurveyRating]) -> Result<(), FormatError> {
    writeln!(w, "{SURVEY_HEADER}")?;
    for r in ratings {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.identity, r.dimension, r.mean, r.sd, r.n_raters
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    /// Cosine with the unit dimension vector.
    #[default]
    Cosine,
    /// Raw inner product with the unit dimension vector.
    Dot,
}

/// Threshold below which a survey pair is excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exclusion {
    #[default]
    Max,
    Min,
    /// `sqrt((s_i² + s_j²) / 2)`.
    Pooled,
}

impl Exclusion {
    pub fn threshold(self, sd_i: f64, sd_j: f64) -> f64 {
        match self {
            Exclusion::Max => sd_i.max(sd_j),
            Exclusion::Min => sd_i.min(sd_j),
            Exclusion::Pooled => ((sd_i * sd_i + sd_j * sd_j) / 2.0).sqrt(),
        }
    }

    pub fn excludes(self, a: &SurveyRating, b: &SurveyRating) -> bool {
        (a.mean - b.mean).abs() <= self.threshold(a.sd, b.sd)
    }
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Exclusion::Max => "max",
            Exclusion::Min => "min",
            Exclusion::Pooled => "pooled",
        })
    }
}

impl FromStr for Exclusion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(Exclusion::Max),
            "min" => Ok(Exclusion::Min),
            "pooled" => Ok(Exclusion::Pooled),
            other => Err(format!("unknown exclusion rule {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DimensionConfig {
    pub projection: Projection,
    pub exclusion: Exclusion,
    /// Bootstrap resamples over identities; zero disables intervals.
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        DimensionConfig {
            projection: Projection::Cosine,
            exclusion: Exclusion::Max,
            bootstrap_resamples: 1000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

fn resolve<'a, F: Scalar>(
    provider: &'a EmbeddingProvider<F>,
    phrase: &str,
) -> Result<&'a [F], DimensionError> {
    provider
        .vector(phrase)
        .ok_or_else(|| DimensionError::UnknownPhrase(phrase.to_string()))
}

/// Unit vector along the mean of `a - b` over the seed pairs.
pub fn build_dimension<F: Scalar>(
    provider: &EmbeddingProvider<F>,
    spec: &DimensionSpec,
) -> Result<Vec<f64>, DimensionError> {
    if spec.pairs.is_empty() {
        return Err(DimensionError::NoSeedPairs(spec.name.clone()));
    }
    let mut v = vec![0.0; provider.dim()];
    for (a, b) in &spec.pairs {
        let (va, vb) = (resolve(provider, a)?, resolve(provider, b)?);
        for (acc, (x, y)) in v.iter_mut().zip(va.iter().zip(vb)) {
            *acc += x.to_f64_lossless() - y.to_f64_lossless();
        }
    }
    let n = spec.pairs.len() as f64;
    v.iter_mut().for_each(|x| *x /= n);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(DimensionError::DegenerateDimension(spec.name.clone()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Projection of one vector onto a unit dimension vector.
pub fn project_vector<F: Scalar>(vector: &[F], dimension: &[f64], kind: Projection) -> f64 {
    let dot: f64 = vector
        .iter()
        .zip(dimension)
        .map(|(x, d)| x.to_f64_lossless() * d)
        .sum();
    match kind {
        Projection::Dot => dot,
        Projection::Cosine => {
            let norm = vector
                .iter()
                .map(|x| x.to_f64_lossless().powi(2))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                0.0
            } else {
                (dot / norm).clamp(-1.0, 1.0)
            }
        }
    }
}

pub fn project<F: Scalar>(
    provider: &EmbeddingProvider<F>,
    identity: &str,
    dimension: &[f64],
    kind: Projection,
) -> Result<f64, DimensionError> {
    Ok(project_vector(resolve(provider, identity)?, dimension, kind))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityAgreement {
    pub projection: f64,
    pub agreements: usize,
    pub n_comparisons: usize,
    /// `agreements / n_comparisons`, absent without valid comparisons.
    pub fraction: Option<f64>,
}

/// Pairwise agreement of projections with survey ratings.
///
/// `ratings[k]` and `projections[k]` describe the same identity. The survey
/// order is reversed when `high_pole` is [`Pole::B`].
pub fn pairwise_agreement(
    ratings: &[SurveyRating],
    projections: &[f64],
    high_pole: Pole,
    exclusion: Exclusion,
) -> Vec<IdentityAgreement> {
    let orientation = match high_pole {
        Pole::A => 1.0,
        Pole::B => -1.0,
    };
    (0..ratings.len())
        .map(|i| {
            let (mut agreements, mut n) = (0, 0);
            for j in (0..ratings.len()).filter(|&j| j != i) {
                if exclusion.excludes(&ratings[i], &ratings[j]) {
                    continue;
                }
                n += 1;
                let survey = orientation * (ratings[i].mean - ratings[j].mean);
                let model = projections[i] - projections[j];
                if model != 0.0 && (model > 0.0) == (survey > 0.0) {
                    agreements += 1;
                }
            }
            IdentityAgreement {
                projection: projections[i],
                agreements,
                n_comparisons: n,
                fraction: (n > 0).then(|| agreements as f64 / n as f64),
            }
        })
        .collect()
}

/// Mean of the defined per-identity fractions.
pub fn dimension_score(agreement: &[IdentityAgreement]) -> Option<f64> {
    let fractions: Vec<f64> = agreement.iter().filter_map(|a| a.fraction).collect();
    (!fractions.is_empty()).then(|| fractions.iter().sum::<f64>() / fractions.len() as f64)
}

/// Percentile bootstrap of the mean over `values`.
pub fn bootstrap_interval(
    values: &[f64],
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Option<(f64, f64)> {
    if values.is_empty() || resamples == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            (0..values.len())
                .map(|_| values[rng.gen_range(0..values.len())])
                .sum::<f64>()
                / values.len() as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    let pick = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Some((pick(alpha), pick(1.0 - alpha)))
}

/// Unweighted mean of category scores.
pub fn race_aggregate(scores: &[f64]) -> Option<f64> {
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub dimension: String,
    pub score: f64,
    pub interval: Option<(f64, f64)>,
    pub n_identities_scored: usize,
    /// Survey identities the provider cannot embed.
    pub missing_identities: Vec<String>,
    pub per_identity: BTreeMap<String, IdentityAgreement>,
}

pub fn ranking_agreement<F: Scalar>(
    provider: &EmbeddingProvider<F>,
    spec: &DimensionSpec,
    survey: &[SurveyRating],
    config: &DimensionConfig,
) -> Result<DimensionReport, DimensionError> {
    let dimension = build_dimension(provider, spec)?;
    let mut ratings = Vec::new();
    let mut projections = Vec::new();
    let mut missing = Vec::new();
    for r in survey.iter().filter(|r| r.dimension == spec.name) {
        match provider.vector(&r.identity) {
            Some(v) => {
                ratings.push(r.clone());
                projections.push(project_vector(v, &dimension, config.projection));
            }
            None => missing.push(r.identity.clone()),
        }
    }
    if ratings.len() < 2 {
        return Err(DimensionError::TooFewIdentities {
            dimension: spec.name.clone(),
            found: ratings.len(),
        });
    }
    let agreement = pairwise_agreement(&ratings, &projections, spec.high_pole, config.exclusion);
    let score =
        dimension_score(&agreement).ok_or_else(|| DimensionError::NoValidComparisons(spec.name.clone()))?;
    let fractions: Vec<f64> = agreement.iter().filter_map(|a| a.fraction).collect();
    let interval = bootstrap_interval(
        &fractions,
        config.bootstrap_resamples,
        config.confidence,
        config.seed,
    );
    Ok(DimensionReport {
        dimension: spec.name.clone(),
        score,
        interval,
        n_identities_scored: fractions.len(),
        missing_identities: missing,
        per_identity: ratings.into_iter().map(|r| r.identity).zip(agreement).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEvalReport {
    pub dimensions: Vec<DimensionReport>,
    /// Mean over `race:*` dimensions, when any were scored.
    pub race_aggregate: Option<f64>,
    /// Dimensions skipped, with the reason.
    pub skipped: BTreeMap<String, String>,
    pub dimensions_hash: String,
    pub config: DimensionConfig,
}

impl DimensionEvalReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<24} {:>7} {:>17} {:>6}\n",
            "dimension", "score", "interval", "n"
        );
        for d in &self.dimensions {
            let ci = d
                .interval
                .map_or("-".to_string(), |(lo, hi)| format!("[{lo:.3}, {hi:.3}]"));
            out += &format!(
                "{:<24} {:>7.4} {:>17} {:>6}\n",
                d.dimension, d.score, ci, d.n_identities_scored
            );
        }
        if let Some(r) = self.race_aggregate {
            out += &format!("{:<24} {:>7.4}\n", "race (mean)", r);
        }
        for (name, why) in &self.skipped {
            out += &format!("skipped {name}: {why}\n");
        }
        out
    }
}

/// Scores every dimension. Dimensions that cannot be scored are recorded in
/// `skipped` when `skip_failures` is set and are errors otherwise.
pub fn evaluate_dimensions<F: Scalar>(
    provider: &EmbeddingProvider<F>,
    dims: &DimensionFile,
    dims_hash: &str,
    survey: &[SurveyRating],
    config: &DimensionConfig,
    skip_failures: bool,
) -> Result<DimensionEvalReport, DimensionError> {
    let mut dimensions = Vec::new();
    let mut skipped = BTreeMap::new();
    for spec in &dims.dimensions {
        match ranking_agreement(provider, spec, survey, config) {
            Ok(r) => dimensions.push(r),
            Err(e) if skip_failures => {
                skipped.insert(spec.name.clone(), e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    let race: Vec<f64> = dimensions
        .iter()
        .filter(|d| d.dimension.starts_with(RACE_PREFIX))
        .map(|d| d.score)
        .collect();
    Ok(DimensionEvalReport {
        race_aggregate: race_aggregate(&race),
        dimensions,
        skipped,
        dimensions_hash: dims_hash.to_string(),
        config: config.clone(),
    })
}

/// Dimensions and survey planted on a synthetic community corpus.
///
/// Each dimension gives every community a latent position; poles are the two
/// most popular members of the extreme communities, and each identity's
/// survey mean is its community position plus uniform noise.
pub fn synthetic_dimensions(
    spec: &SyntheticSpec,
    names: &[&str],
    seed: u64,
) -> (DimensionFile, Vec<SurveyRating>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = Vec::new();
    let mut survey = Vec::new();
    let c = spec.n_communities;
    for name in names {
        let mut position: Vec<usize> = (0..c).collect();
        position.shuffle(&mut rng);
        let low = position.iter().position(|&p| p == 0).expect("non-empty");
        let high = position.iter().position(|&p| p == c - 1).expect("non-empty");
        let poles = spec.identities_per_community.min(2);
        let high_pole = if rng.gen_bool(0.5) { Pole::A } else { Pole::B };
        let pairs = (0..poles)
            .map(|m| {
                let (hi, lo) = (identity_name(high, m), identity_name(low, m));
                match high_pole {
                    Pole::A => (hi, lo),
                    Pole::B => (lo, hi),
                }
            })
            .collect();
        dims.push(DimensionSpec {
            name: name.to_string(),
            pairs,
            high_pole,
        });
        for (community, &pos) in position.iter().enumerate() {
            for m in 0..spec.identities_per_community {
                survey.push(SurveyRating {
                    identity: identity_name(community, m),
                    dimension: name.to_string(),
                    mean: pos as f64 + rng.gen_range(-0.3..0.3),
                    sd: rng.gen_range(0.1..0.6),
                    n_raters: rng.gen_range(3..12),
                });
            }
        }
    }
    (DimensionFile { dimensions: dims }, survey)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::Matrix;
    use proptest::prelude::*;

    fn provider(rows: &[(&str, [f64; 2])]) -> EmbeddingProvider<f64> {
        let m = Matrix::new(
            rows.iter().map(|(p, _)| p.to_string()).collect(),
            2,
            rows.iter().flat_map(|(_, v)| v.to_vec()).collect(),
        )
        .unwrap();
        EmbeddingProvider::internal(m).unwrap()
    }

    fn spec(pairs: &[(&str, &str)], high: Pole) -> DimensionSpec {
        DimensionSpec {
            name: "d".into(),
            pairs: pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            high_pole: high,
        }
    }

    fn rating(identity: &str, mean: f64, sd: f64) -> SurveyRating {
        SurveyRating {
            identity: identity.into(),
            dimension: "d".into(),
            mean,
            sd,
            n_raters: 5,
        }
    }

    #[test]
    fn dimension_construction() {
        let p = provider(&[
            ("a", [1.0, 0.0]),
            ("b", [-1.0, 0.0]),
            ("c", [0.0, 2.0]),
            ("e", [0.0, 0.0]),
        ]);
        assert_eq!(
            build_dimension(&p, &spec(&[("a", "b")], Pole::A)).unwrap(),
            vec![1.0, 0.0]
        );
        // (a-b + c-e)/2 = (1, 1), normalized
        let v = build_dimension(&p, &spec(&[("a", "b"), ("c", "e")], Pole::A)).unwrap();
        let h = 0.5f64.sqrt();
        assert!((v[0] - h).abs() < 1e-15 && (v[1] - h).abs() < 1e-15);
        assert!(matches!(
            build_dimension(&p, &spec(&[("a", "a")], Pole::A)),
            Err(DimensionError::DegenerateDimension(_))
        ));
        assert!(matches!(
            build_dimension(&p, &spec(&[("a", "zz")], Pole::A)),
            Err(DimensionError::UnknownPhrase(_))
        ));
    }

    #[test]
    fn projections() {
        let p = provider(&[
            ("a", [2.0, 0.0]),
            ("b", [0.0, 3.0]),
            ("c", [-1.0, 0.0]),
            ("z", [0.0, 0.0]),
        ]);
        let d = [1.0, 0.0];
        assert_eq!(project(&p, "a", &d, Projection::Cosine).unwrap(), 1.0);
        assert_eq!(project(&p, "b", &d, Projection::Cosine).unwrap(), 0.0);
        assert_eq!(project(&p, "c", &d, Projection::Cosine).unwrap(), -1.0);
        assert_eq!(project(&p, "z", &d, Projection::Cosine).unwrap(), 0.0);
        assert_eq!(project(&p, "a", &d, Projection::Dot).unwrap(), 2.0);
        assert!(matches!(
            project(&p, "q", &d, Projection::Dot),
            Err(DimensionError::UnknownPhrase(_))
        ));
    }

    #[test]
    fn perfect_agreement_and_ties() {
        let ratings = vec![
            rating("x", 1.0, 0.1),
            rating("y", 2.0, 0.1),
            rating("z", 3.0, 0.1),
        ];
        let agree = pairwise_agreement(&ratings, &[0.1, 0.2, 0.3], Pole::A, Exclusion::Max);
        assert_eq!(dimension_score(&agree), Some(1.0));
        let flipped = pairwise_agreement(&ratings, &[0.1, 0.2, 0.3], Pole::B, Exclusion::Max);
        assert_eq!(dimension_score(&flipped), Some(0.0));
        let tied = pairwise_agreement(&ratings, &[0.5, 0.5, 0.5], Pole::A, Exclusion::Max);
        assert_eq!(dimension_score(&tied), Some(0.0));
    }

    #[test]
    fn exclusion_variants() {
        let a = rating("a", 1.0, 0.5);
        let b = rating("b", 1.6, 0.7);
        assert!(Exclusion::Max.excludes(&a, &b));
        assert!(!Exclusion::Min.excludes(&a, &b));
        // pooled sd = sqrt(0.37) ≈ 0.608 > 0.6
        assert!(Exclusion::Pooled.excludes(&a, &b));
        let all_close = vec![rating("a", 1.0, 1.0), rating("b", 1.5, 1.0)];
        let agree = pairwise_agreement(&all_close, &[0.0, 1.0], Pole::A, Exclusion::Max);
        assert_eq!(dimension_score(&agree), None);
    }

    #[test]
    fn report_and_race_mean() {
        let p = provider(&[
            ("hi", [1.0, 0.0]),
            ("lo", [-1.0, 0.0]),
            ("x", [0.9, 0.1]),
            ("y", [-0.8, 0.3]),
            ("w", [0.1, 1.0]),
        ]);
        let survey = vec![
            rating("x", 5.0, 0.2),
            rating("y", 1.0, 0.2),
            rating("w", 3.0, 0.2),
            rating("gone", 2.0, 0.1),
        ];
        let s = spec(&[("hi", "lo")], Pole::A);
        let config = DimensionConfig::default();
        let r = ranking_agreement(&p, &s, &survey, &config).unwrap();
        assert_eq!(r.score, 1.0);
        assert_eq!(r.missing_identities, vec!["gone".to_string()]);
        assert_eq!(r.per_identity["w"].n_comparisons, 2);
        assert_eq!(r.interval, Some((1.0, 1.0)));
        let swapped = ranking_agreement(&p, &s.swapped(), &survey, &config).unwrap();
        assert_eq!(swapped.score, r.score);

        assert_eq!(race_aggregate(&[0.7; 5]), Some(0.7));
        assert!((race_aggregate(&[0.6, 0.8]).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(race_aggregate(&[]), None);
    }

    #[test]
    fn too_few_identities() {
        let p = provider(&[("hi", [1.0, 0.0]), ("lo", [-1.0, 0.0])]);
        let err = ranking_agreement(
            &p,
            &spec(&[("hi", "lo")], Pole::A),
            &[rating("hi", 1.0, 0.1)],
            &DimensionConfig::default(),
        );
        assert!(matches!(
            err,
            Err(DimensionError::TooFewIdentities { found: 1, .. })
        ));
    }

    #[test]
    fn default_file_parses() {
        let f = DimensionFile::default_file();
        let names: Vec<&str> = f.dimensions.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(&names[..3], ["gender", "age", "partisanship"]);
        assert_eq!(f.dimensions.iter().filter(|d| d.is_race()).count(), 5);
        assert_eq!(DimensionFile::parse(&f.to_toml()).unwrap(), f);
        assert!(
            DimensionFile::parse("[[dimension]]\nname = \"x\"\nhigh_pole = \"a\"\npairs = []\n").is_err()
        );
    }

    #[test]
    fn survey_round_trip_and_checks() {
        let ratings = vec![rating("grad student", 2.5, 0.75)];
        let mut buf = Vec::new();
        write_survey(&mut buf, &ratings).unwrap();
        assert_eq!(read_survey(buf.as_slice()).unwrap(), ratings);
        assert!(read_survey("a\td\t1\t-1\t5\n".as_bytes()).is_err());
        assert!(read_survey("a\td\t1\t1\t2\n".as_bytes()).is_err());
        assert!(read_survey("a\td\tx\t1\t5\n".as_bytes()).is_err());
    }

    #[test]
    fn bootstrap_brackets_mean() {
        let values: Vec<f64> = (0..50).map(|i| (i % 10) as f64 / 10.0).collect();
        let (lo, hi) = bootstrap_interval(&values, 1000, 0.95, 7).unwrap();
        assert!(lo < 0.45 && hi > 0.45 && lo > 0.3 && hi < 0.6);
        assert_eq!(bootstrap_interval(&values, 1000, 0.95, 7), Some((lo, hi)));
    }

    #[test]
    fn synthetic_dimensions_are_consistent() {
        let spec = SyntheticSpec {
            n_communities: 4,
            identities_per_community: 5,
            n_bios: 10,
            identities_per_bio: crate::extraction::SizeRange { min: 2, max: 3 },
            noise_rate: 0.0,
            seed: 0,
            popularity_exponent: 1.0,
        };
        let (dims, survey) = synthetic_dimensions(&spec, &["d0", "race:x"], 3);
        assert_eq!(dims.dimensions.len(), 2);
        assert_eq!(survey.len(), 40);
        assert!(survey.iter().all(|r| r.n_raters >= 3 && r.sd >= 0.0));
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance(proj in prop::collection::vec(-1.0f64..1.0, 6), means in prop::collection::vec(0.0f64..5.0, 6), sds in prop::collection::vec(0.0f64..1.0, 6)) {
            let ratings: Vec<SurveyRating> = (0..6).map(|i| rating(&format!("i{i}"), means[i], sds[i])).collect();
            let mapped: Vec<f64> = proj.iter().map(|x| (2.0 * x).exp() - 3.0).collect();
            let a = pairwise_agreement(&ratings, &proj, Pole::A, Exclusion::Max);
            let b = pairwise_agreement(&ratings, &mapped, Pole::A, Exclusion::Max);
            prop_assert_eq!(dimension_score(&a), dimension_score(&b));
        }

        #[test]
        fn exclusion_is_symmetric(m1 in 0.0f64..5.0, m2 in 0.0f64..5.0, s1 in 0.0f64..2.0, s2 in 0.0f64..2.0) {
            let (a, b) = (rating("a", m1, s1), rating("b", m2, s2));
            for rule in [Exclusion::Max, Exclusion::Min, Exclusion::Pooled] {
                prop_assert_eq!(rule.excludes(&a, &b), rule.excludes(&b, &a));
            }
        }

        #[test]
        fn score_is_a_fraction(proj in prop::collection::vec(-1.0f64..1.0, 5), means in prop::collection::vec(0.0f64..5.0, 5)) {
            let ratings: Vec<SurveyRating> = (0..5).map(|i| rating(&format!("i{i}"), means[i], 0.1)).collect();
            if let Some(s) = dimension_score(&pairwise_agreement(&ratings, &proj, Pole::B, Exclusion::Min)) {
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }
    }
}
