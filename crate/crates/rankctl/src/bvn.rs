//! Expressing a ranking distribution as a lottery over rankings.
//!
//! Every doubly stochastic matrix is a convex combination of permutation
//! matrices (Birkhoff's theorem), so a fractional solution from the solvers
//! can be served by sampling a deterministic ranking whose expectation
//! matches the matrix. The decomposition peels one permutation at a time,
//! each chosen to maximize its peelable weight (a maximum-bottleneck perfect
//! matching over the remaining entries), which keeps the number of
//! components small; each peel zeroes at least one entry, so at most
//! `(n-1)^2 + 1` components appear.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{Permutation, RankingPolicy};

/// Entries below this threshold are treated as zero mass by default.
pub const DEFAULT_EPS: f64 = 1e-9;

/// A lottery over rankings: weights are positive and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct BvnDecomposition {
    components: Vec<(f64, Permutation)>,
}

impl BvnDecomposition {
    pub fn components(&self) -> &[(f64, Permutation)] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Draws one ranking by inverting the cumulative weights with a single
    /// uniform variate from `rng`.
    pub fn sample_with<R: Rng>(&self, rng: &mut R) -> &Permutation {
        // 53-bit mantissa uniform in [0, 1); bit-stable across platforms.
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let mut acc = 0.0;
        for (w, p) in &self.components {
            acc += w;
            if u < acc {
                return p;
            }
        }
        &self.components.last().expect("non-empty lottery").1
    }

    /// [`Self::sample_with`] on a fresh seeded generator.
    pub fn sample(&self, seed: u64) -> &Permutation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    /// The expected ranking distribution of the lottery.
    pub fn mean(&self) -> Result<RankingPolicy> {
        let n = self.components[0].1.len();
        let mut entries = vec![0.0; n * n];
        for (w, p) in &self.components {
            for k in 0..n {
                entries[k * n + p.item_at(k)] += w;
            }
        }
        RankingPolicy::new(n, entries)
    }
}

/// Decomposes `policy` into a lottery over rankings. Entries below `eps` are
/// ignored; once no perfect matching remains on the surviving entries the
/// leftover mass (at most `n * eps` per coordinate, for a valid input) is
/// discarded and the weights renormalized to sum to one.
pub fn decompose(policy: &RankingPolicy, eps: f64) -> Result<BvnDecomposition> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let n = policy.n();
    if n == 0 {
        return Err(Error::invalid("cannot decompose an empty distribution"));
    }
    let mut residual: Vec<f64> = policy.entries().iter().map(|v| v.max(0.0)).collect();
    let mut components: Vec<(f64, Permutation)> = Vec::new();
    let cap = (n - 1) * (n - 1) + 1;

    while let Some((item_at, weight)) = peel(&residual, n, eps) {
        for (k, &j) in item_at.iter().enumerate() {
            let cell = &mut residual[k * n + j];
            *cell = (*cell - weight).max(0.0);
        }
        components.push((weight, Permutation::new(item_at)?));
        if components.len() > cap {
            return Err(Error::solver(format!(
                "decomposition exceeded {cap} components; input is not doubly stochastic"
            )));
        }
    }

    if components.is_empty() {
        return Err(Error::invalid(
            "distribution has no peelable mass above eps",
        ));
    }
    let total: f64 = components.iter().map(|(w, _)| w).sum();
    for (w, _) in components.iter_mut() {
        *w /= total;
    }
    Ok(BvnDecomposition { components })
}

/// One peel: the perfect matching over entries `>= eps` maximizing its
/// minimum entry, which is the weight removed. Returns `None` when no
/// perfect matching survives the threshold.
fn peel(residual: &[f64], n: usize, eps: f64) -> Option<(Vec<usize>, f64)> {
    let mut levels: Vec<f64> = residual.iter().copied().filter(|v| *v >= eps).collect();
    if levels.is_empty() {
        return None;
    }
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite residual"));
    levels.dedup();

    matching_at(residual, n, levels[0])?;
    // Largest threshold still admitting a perfect matching.
    let (mut lo, mut hi) = (0usize, levels.len() - 1);
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if matching_at(residual, n, levels[mid]).is_some() {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let item_at = matching_at(residual, n, levels[lo])?;
    let weight = item_at
        .iter()
        .enumerate()
        .map(|(k, &j)| residual[k * n + j])
        .fold(f64::INFINITY, f64::min);
    Some((item_at, weight))
}

/// Deterministic augmenting-path matching on entries `>= threshold`;
/// positions and items are scanned in ascending order, so ties resolve
/// toward lower item indices.
fn matching_at(residual: &[f64], n: usize, threshold: f64) -> Option<Vec<usize>> {
    const FREE: usize = usize::MAX;
    let mut pos_of_item = vec![FREE; n];
    let mut item_of_pos = vec![FREE; n];
    let mut visited = vec![false; n];

    fn augment(
        k: usize,
        n: usize,
        residual: &[f64],
        threshold: f64,
        pos_of_item: &mut [usize],
        item_of_pos: &mut [usize],
        visited: &mut [bool],
    ) -> bool {
        for j in 0..n {
            if visited[j] || residual[k * n + j] < threshold {
                continue;
            }
            visited[j] = true;
            let holder = pos_of_item[j];
            if holder == usize::MAX
                || augment(
                    holder,
                    n,
                    residual,
                    threshold,
                    pos_of_item,
                    item_of_pos,
                    visited,
                )
            {
                pos_of_item[j] = k;
                item_of_pos[k] = j;
                return true;
            }
        }
        false
    }

    for k in 0..n {
        visited.iter_mut().for_each(|v| *v = false);
        if !augment(
            k,
            n,
            residual,
            threshold,
            &mut pos_of_item,
            &mut item_of_pos,
            &mut visited,
        ) {
            return None;
        }
    }
    Some(item_of_pos)
}
