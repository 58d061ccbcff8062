mod common;

use common::{gradient_check, Objective};
use proptest::prelude::*;

#[test]
fn skipgram_matches_finite_differences() {
    for seed in 0..100 {
        let err = gradient_check(Objective::SkipGram, seed, 8);
        assert!(err < 1e-4, "seed {seed}: {err:e}");
    }
}

#[test]
fn cbow_matches_finite_differences() {
    for seed in 0..100 {
        let err = gradient_check(Objective::Cbow, seed, 8);
        assert!(err < 1e-4, "seed {seed}: {err:e}");
    }
}

proptest! {
    #[test]
    fn any_dimension(seed in any::<u64>(), dim in 1usize..64, cbow in any::<bool>()) {
        let objective = if cbow { Objective::Cbow } else { Objective::SkipGram };
        prop_assert!(gradient_check(objective, seed, dim) < 1e-4);
    }
}
