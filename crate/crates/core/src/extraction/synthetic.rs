//! Planted-community corpora for recovery tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bio, ExtractError, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_communities: usize,
    pub identities_per_community: usize,
    pub n_bios: usize,
    pub identities_per_bio: SizeRange,
    pub noise_rate: f64,
    pub seed: u64,
    /// Within-community popularity skew: member `r` (0-based) is drawn with
    /// weight `(r + 1)^-popularity_exponent`. Zero gives uniform draws.
    #[serde(default = "default_popularity_exponent")]
    pub popularity_exponent: f64,
}

fn default_popularity_exponent() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), ExtractError> {
        let SizeRange { min, max } = self.identities_per_bio;
        if self.n_communities == 0 || self.identities_per_community == 0 || self.n_bios == 0 {
            return Err(ExtractError::InvalidSpec(
                "community count, community size and bio count must be positive".into(),
            ));
        }
        if min < 2 || min > max {
            return Err(ExtractError::InvalidSpec(format!(
                "identities_per_bio must satisfy 2 <= min <= max, got {min}..={max}"
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(ExtractError::InvalidSpec(format!(
                "noise_rate {} outside [0, 1]",
                self.noise_rate
            )));
        }
        if !self.popularity_exponent.is_finite() || self.popularity_exponent < 0.0 {
            return Err(ExtractError::InvalidSpec(
                "popularity_exponent must be finite and non-negative".into(),
            ));
        }
        if max > self.identities_per_community {
            return Err(ExtractError::InfeasibleSpec(format!(
                "bios of up to {max} identities cannot be drawn without replacement from communities of {}",
                self.identities_per_community
            )));
        }
        Ok(())
    }
}

/// Phrase naming member `member` of community `community`.
pub fn identity_name(community: usize, member: usize) -> String {
    format!("c{community} m{member}")
}

/// Inverse of [`identity_name`]: the planted community of a phrase.
pub fn community_of(phrase: &str) -> Option<usize> {
    let (community, member) = phrase.split_once(' ')?;
    member.strip_prefix('m')?.parse::<usize>().ok()?;
    community.strip_prefix('c')?.parse().ok()
}

/// Generates `spec.n_bios` bios; identical output for identical specs.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Bio>, ExtractError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights: Vec<f64> = (0..spec.identities_per_community)
        .map(|r| ((r + 1) as f64).powf(-spec.popularity_exponent))
        .collect();
    let total_identities = spec.n_communities * spec.identities_per_community;
    let width = spec.n_bios.to_string().len();

    let mut bios = Vec::with_capacity(spec.n_bios);
    for idx in 0..spec.n_bios {
        let community = rng.gen_range(0..spec.n_communities);
        let size = rng.gen_range(spec.identities_per_bio.min..=spec.identities_per_bio.max);

        let mut remaining = weights.clone();
        let mut members: Vec<(usize, usize)> = Vec::with_capacity(size);
        for _ in 0..size {
            let member = weighted_draw(&mut rng, &remaining);
            remaining[member] = 0.0;
            members.push((community, member));
        }

        for slot in 0..members.len() {
            if rng.gen_bool(spec.noise_rate) {
                loop {
                    let flat = rng.gen_range(0..total_identities);
                    let candidate = (
                        flat / spec.identities_per_community,
                        flat % spec.identities_per_community,
                    );
                    if candidate == members[slot] || !members.contains(&candidate) {
                        members[slot] = candidate;
                        break;
                    }
                }
            }
        }

        let identities = members.into_iter().map(|(c, m)| identity_name(c, m)).collect();
        bios.push(Bio::new(
            format!("syn{idx:0width$}"),
            Source::Synthetic,
            identities,
        ));
    }
    Ok(bios)
}

fn weighted_draw(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last_positive = i;
        if target < w {
            return i;
        }
        target -= w;
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn spec(n_communities: usize, noise: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_communities,
            identities_per_community: 10,
            n_bios: 500,
            identities_per_bio: SizeRange { min: 3, max: 3 },
            noise_rate: noise,
            seed,
            popularity_exponent: 1.0,
        }
    }

    #[test]
    fn zero_noise_is_pure() {
        let bios = generate_synthetic(&spec(2, 0.0, 3)).unwrap();
        for bio in &bios {
            let communities: HashSet<_> = bio.identities.iter().map(|p| community_of(p).unwrap()).collect();
            assert_eq!(communities.len(), 1, "{bio:?}");
            assert_eq!(bio.identities.len(), 3);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_synthetic(&spec(4, 0.2, 11)).unwrap();
        let b = generate_synthetic(&spec(4, 0.2, 11)).unwrap();
        let c = generate_synthetic(&spec(4, 0.2, 12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn identities_unique_within_bio() {
        let bios = generate_synthetic(&spec(1, 0.9, 5)).unwrap();
        for bio in &bios {
            assert_eq!(bio.dedup().identities.len(), bio.identities.len());
        }
    }

    #[test]
    fn infeasible_and_invalid_specs() {
        let mut s = spec(2, 0.0, 1);
        s.identities_per_bio = SizeRange { min: 3, max: 11 };
        assert!(matches!(
            generate_synthetic(&s),
            Err(ExtractError::InfeasibleSpec(_))
        ));
        s.identities_per_bio = SizeRange { min: 1, max: 3 };
        assert!(matches!(
            generate_synthetic(&s),
            Err(ExtractError::InvalidSpec(_))
        ));
        s.identities_per_bio = SizeRange { min: 2, max: 3 };
        s.noise_rate = 1.5;
        assert!(matches!(
            generate_synthetic(&s),
            Err(ExtractError::InvalidSpec(_))
        ));
    }

    #[test]
    fn names_roundtrip() {
        assert_eq!(community_of(&identity_name(7, 42)), Some(7));
        assert_eq!(community_of("wife"), None);
        assert_eq!(community_of("c1 x2"), None);
    }

    #[test]
    fn popularity_skew_orders_frequencies() {
        let mut s = spec(1, 0.0, 9);
        s.n_bios = 4000;
        let bios = generate_synthetic(&s).unwrap();
        let count = |name: String| bios.iter().filter(|b| b.identities.contains(&name)).count();
        assert!(count(identity_name(0, 0)) > count(identity_name(0, 9)));
        s.popularity_exponent = 0.0;
        let uniform = generate_synthetic(&s).unwrap();
        let c0 = uniform
            .iter()
            .filter(|b| b.identities.contains(&identity_name(0, 0)))
            .count();
        // 3 of 10 members per bio: expected 1200 of 4000
        assert!((1100..1300).contains(&c0), "{c0}");
    }
}
