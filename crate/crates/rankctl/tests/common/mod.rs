//! Shared fixtures for the integration suites: seeded random matrices and
//! instances, plus brute-force reference evaluations that never touch the
//! solvers under test.

#![allow(dead_code)]

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rankctl::solver::{solve_hinge_lp, HingeProgram, HingeSolution, ScoreMatrix};
use rankctl::types::{Association, RankingPolicy};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random doubly stochastic matrix: positive entries balanced by Sinkhorn
/// scaling until both margins sit well inside the library's tolerance.
pub fn random_doubly_stochastic(rng: &mut impl Rng, n: usize) -> RankingPolicy {
    let mut a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.1..1.1)).collect();
    for _ in 0..20_000 {
        for i in 0..n {
            let s: f64 = a[i * n..(i + 1) * n].iter().sum();
            for j in 0..n {
                a[i * n + j] /= s;
            }
        }
        let mut col = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                col[j] += a[i * n + j];
            }
        }
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] /= col[j];
            }
        }
        let worst = (0..n)
            .map(|i| ((0..n).map(|j| a[i * n + j]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        if worst < 1e-13 {
            break;
        }
    }
    RankingPolicy::new(n, a).expect("sinkhorn output is doubly stochastic")
}

/// One random per-step program: ranking scores from an outer product plus a
/// priced hinge over random budget coordinates.
#[derive(Clone)]
pub struct HingeInstance {
    pub n: usize,
    pub m: usize,
    pub relevance: Vec<f64>,
    pub utility_w: Vec<f64>,
    pub exposure_w: Vec<f64>,
    pub assoc: Association,
    pub targets: Vec<f64>,
    pub costs: Vec<f64>,
}

impl HingeInstance {
    /// Draws an instance with `n` in 2..=6 and `m` in 1..=2. Targets scale
    /// against the largest single-coordinate credit so the hinge is
    /// sometimes slack, sometimes binding, sometimes out of reach.
    pub fn random(rng: &mut impl Rng) -> Self {
        let n = rng.gen_range(2..=6usize);
        let m = rng.gen_range(1..=2usize);
        let relevance: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let utility_w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let exposure_w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let weights: Vec<f64> = (0..m * n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    rng.gen_range(0.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let assoc = Association::new(m, n, weights).expect("nonnegative weights");
        let max_e = exposure_w.iter().cloned().fold(0.0, f64::max);
        let targets: Vec<f64> = (0..m)
            .map(|i| {
                let peak = assoc.row(i).iter().cloned().fold(0.0, f64::max) * max_e;
                rng.gen_range(0.0..1.2) * peak
            })
            .collect();
        let costs: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..5.0)).collect();
        HingeInstance {
            n,
            m,
            relevance,
            utility_w,
            exposure_w,
            assoc,
            targets,
            costs,
        }
    }

    pub fn solve(&self) -> HingeSolution {
        let score =
            ScoreMatrix::from_outer(&self.utility_w, &self.relevance).expect("matching lengths");
        let program = HingeProgram {
            score: &score,
            assoc: &self.assoc,
            exposure: &self.exposure_w,
            hinge_targets: &self.targets,
            hinge_costs: &self.costs,
        };
        solve_hinge_lp(&program).expect("random instances are well posed")
    }

    /// Score and per-budget credit of a pure ranking, by direct summation.
    pub fn ranking_stats(&self, items: &[usize]) -> (f64, Vec<f64>) {
        let mut score = 0.0;
        let mut credit = vec![0.0; self.m];
        for (k, &j) in items.iter().enumerate() {
            score += self.utility_w[k] * self.relevance[j];
            for (i, c) in credit.iter_mut().enumerate() {
                *c += self.exposure_w[k] * self.assoc.get(i, j);
            }
        }
        (score, credit)
    }

    pub fn hinge_value(&self, score: f64, credit: &[f64]) -> f64 {
        let penalty: f64 = self
            .targets
            .iter()
            .zip(&self.costs)
            .zip(credit)
            .map(|((t, c), s)| c * (t - s).max(0.0))
            .sum();
        score - penalty
    }

    /// Objective of an arbitrary ranking distribution, evaluated directly
    /// from the matrix without any solver code.
    pub fn policy_objective(&self, policy: &RankingPolicy) -> f64 {
        let n = self.n;
        let mut score = 0.0;
        let mut credit = vec![0.0; self.m];
        for k in 0..n {
            for j in 0..n {
                let p = policy.get(k, j);
                score += p * self.utility_w[k] * self.relevance[j];
                for (i, c) in credit.iter_mut().enumerate() {
                    *c += p * self.exposure_w[k] * self.assoc.get(i, j);
                }
            }
        }
        self.hinge_value(score, &credit)
    }
}

/// Brute-force reference values for a hinge instance: the best pure ranking
/// and the best two-ranking mixture on a 100-point grid. Pairs are formed
/// from the `pair_pool` best pure rankings (all of them when `n! <= pool`).
pub struct EnumeratedBest {
    pub pure: f64,
    pub mixed: f64,
}

pub fn enumerate_hinge(inst: &HingeInstance, pair_pool: usize) -> EnumeratedBest {
    let stats: Vec<(f64, Vec<f64>)> = (0..inst.n)
        .permutations(inst.n)
        .map(|p| inst.ranking_stats(&p))
        .collect();
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| {
        let va = inst.hinge_value(stats[a].0, &stats[a].1);
        let vb = inst.hinge_value(stats[b].0, &stats[b].1);
        vb.partial_cmp(&va).expect("finite objectives")
    });
    let pure = inst.hinge_value(stats[order[0]].0, &stats[order[0]].1);

    let pool = &order[..order.len().min(pair_pool)];
    let mut mixed = pure;
    for (ai, &a) in pool.iter().enumerate() {
        for &b in &pool[ai + 1..] {
            let (sa, ca) = &stats[a];
            let (sb, cb) = &stats[b];
            for g in 0..100 {
                let alpha = g as f64 / 99.0;
                let score = alpha * sa + (1.0 - alpha) * sb;
                let credit: Vec<f64> = ca
                    .iter()
                    .zip(cb)
                    .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
                    .collect();
                mixed = mixed.max(inst.hinge_value(score, &credit));
            }
        }
    }
    EnumeratedBest { pure, mixed }
}

/// Best pure-assignment value of a score matrix by full enumeration.
pub fn enumerate_assignment(score: &ScoreMatrix) -> f64 {
    let n = score.n();
    (0..n)
        .permutations(n)
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(k, &j)| score.get(k, j))
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
