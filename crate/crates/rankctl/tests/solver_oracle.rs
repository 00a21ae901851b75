//! Per-step solvers checked against brute force: the assignment solver
//! against full permutation enumeration, the hinged program against every
//! pure ranking plus a dense two-ranking mixture grid, and the claimed
//! objective against an independent evaluation of the returned policy.

mod common;

use common::{enumerate_assignment, enumerate_hinge, rng, HingeInstance};
use proptest::prelude::*;
use rand::Rng;
use rankctl::solver::{solve_assignment, ScoreMatrix};

#[test]
fn assignment_matches_enumeration_on_random_matrices() {
    for seed in 0..60u64 {
        let mut r = rng(seed);
        let n = r.gen_range(2..=6usize);
        let entries: Vec<f64> = (0..n * n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let score = ScoreMatrix::new(n, entries).unwrap();
        let best = enumerate_assignment(&score);
        let sol = solve_assignment(&score).unwrap();
        assert!(
            (sol.value - best).abs() <= 1e-9,
            "seed {seed}: solver {} vs enumeration {best}",
            sol.value
        );
        // The reported ranking realizes the reported value.
        let realized: f64 = (0..n).map(|k| score.get(k, sol.ranking.item_at(k))).sum();
        assert!((realized - sol.value).abs() <= 1e-9);
    }
}

#[test]
fn hinge_lp_dominates_enumeration_and_realizes_its_claim() {
    for seed in 0..60u64 {
        let mut r = rng(1000 + seed);
        let inst = HingeInstance::random(&mut r);
        let sol = inst.solve();

        let realized = inst.policy_objective(&sol.policy);
        assert!(
            (sol.objective - realized).abs() <= 1e-8,
            "seed {seed}: claims {} but the policy evaluates to {realized}",
            sol.objective
        );

        let reference = enumerate_hinge(&inst, 24);
        assert!(
            sol.objective >= reference.pure - 1e-8,
            "seed {seed}: lp {} below best pure ranking {}",
            sol.objective,
            reference.pure
        );
        assert!(
            sol.objective >= reference.mixed - 1e-8,
            "seed {seed}: lp {} below best grid mixture {}",
            sol.objective,
            reference.mixed
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// No pure ranking beats the LP, and the reported shortfall matches the
    /// returned policy's own credit.
    #[test]
    fn hinge_lp_is_consistent_on_random_instances(seed in 0..5000u64) {
        let mut r = rng(seed);
        let inst = HingeInstance::random(&mut r);
        let sol = inst.solve();

        let reference = enumerate_hinge(&inst, 1);
        prop_assert!(sol.objective >= reference.pure - 1e-8);

        let mut credit = vec![0.0; inst.m];
        for k in 0..inst.n {
            for j in 0..inst.n {
                for (i, c) in credit.iter_mut().enumerate() {
                    *c += sol.policy.get(k, j) * inst.exposure_w[k] * inst.assoc.get(i, j);
                }
            }
        }
        for i in 0..inst.m {
            let expect = (inst.targets[i] - credit[i]).max(0.0);
            prop_assert!(
                (sol.shortfall[i] - expect).abs() <= 1e-8,
                "coordinate {i}: reported {} vs recomputed {expect}",
                sol.shortfall[i]
            );
        }
    }
}
