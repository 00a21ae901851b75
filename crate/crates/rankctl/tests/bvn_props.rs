//! Properties of the ranking-distribution decomposition: any doubly
//! stochastic matrix splits into few permutations whose weighted sum
//! reconstructs the input, and sampling follows the component weights.

mod common;

use common::{random_doubly_stochastic, rng};
use proptest::prelude::*;
use rankctl::bvn::{decompose, DEFAULT_EPS};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_reconstructs_doubly_stochastic_matrices(
        seed in 0..10_000u64,
        n in 2..=10usize,
    ) {
        let mut r = rng(seed);
        let policy = random_doubly_stochastic(&mut r, n);
        let dec = decompose(&policy, DEFAULT_EPS).unwrap();

        let total: f64 = dec.components().iter().map(|(w, _)| w).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9, "weights sum to {total}");
        prop_assert!(dec.components().iter().all(|(w, _)| *w > 0.0));
        prop_assert!(
            dec.len() <= (n - 1) * (n - 1) + 1,
            "{} components for n = {n}",
            dec.len()
        );

        // Entrywise reconstruction from the raw component list.
        let mut rebuilt = vec![0.0; n * n];
        for (w, perm) in dec.components() {
            for (pos, item) in perm.items().iter().enumerate() {
                rebuilt[pos * n + item] += w;
            }
        }
        let mut worst = 0.0f64;
        for pos in 0..n {
            for item in 0..n {
                let diff = (rebuilt[pos * n + item] - policy.get(pos, item)).abs();
                worst = worst.max(diff);
            }
        }
        prop_assert!(worst <= 1e-8, "reconstruction error {worst}");

        // `mean()` agrees with the original matrix too.
        let mean = dec.mean().unwrap();
        for pos in 0..n {
            for item in 0..n {
                prop_assert!((mean.get(pos, item) - policy.get(pos, item)).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn sampling_frequencies_match_component_weights() {
    let mut r = rng(7);
    let policy = random_doubly_stochastic(&mut r, 4);
    let dec = decompose(&policy, DEFAULT_EPS).unwrap();
    assert!(dec.len() >= 2, "fixture should be a genuine mixture");

    let draws = 20_000usize;
    let mut counts = vec![0usize; dec.len()];
    for seed in 0..draws {
        let perm = dec.sample(seed as u64);
        let idx = dec
            .components()
            .iter()
            .position(|(_, p)| p.items() == perm.items())
            .expect("sample returns one of the components");
        counts[idx] += 1;
    }
    for (idx, (weight, _)) in dec.components().iter().enumerate() {
        let freq = counts[idx] as f64 / draws as f64;
        assert!(
            (freq - weight).abs() <= 0.02,
            "component {idx}: frequency {freq} vs weight {weight}"
        );
    }
}
