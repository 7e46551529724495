//! Rand index and NMI against brute-force oracles.

mod common;

use common::{brute_rand, random_labels, table_nmi};
use hc_aecs::selection::{nmi, rand_index};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn rand_index_equals_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let m = rng.gen_range(2..=20);
        let a = random_labels(&mut rng, m);
        let b = random_labels(&mut rng, m);
        assert_eq!(rand_index(&a, &b).unwrap(), brute_rand(&a, &b), "{a:?} {b:?}");
    }
}

#[test]
fn nmi_matches_contingency_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let m = rng.gen_range(2..=20);
        let a = random_labels(&mut rng, m);
        let b = random_labels(&mut rng, m);
        let (got, want) = (nmi(&a, &b).unwrap(), table_nmi(&a, &b));
        assert!((got - want).abs() < 1e-9, "{a:?} {b:?}: {got} vs {want}");
    }
}

#[test]
fn identical_partitions_score_one() {
    let a = [0, 0, 1, 1, 2];
    assert_eq!(rand_index(&a, &a).unwrap(), 1.0);
    assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}
