//! Core value types shared by the solvers, controllers, and simulator.
//!
//! Conventions used throughout the crate:
//!
//! * Items and positions are 0-based in memory; file formats and reports use
//!   1-based ids.
//! * A ranking distribution is stored position-major: row `k` holds the
//!   probability of each item appearing at position `k`.
//! * Budget bookkeeping is a length-`m` vector, one entry per tracked
//!   quantity, and accumulates additively over an episode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row/column sums when validating a ranking distribution.
pub const STOCHASTIC_TOL: f64 = 1e-9;

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::invalid(format!("{name}[{i}] is not finite: {v}")));
        }
    }
    Ok(())
}

fn check_non_negative(name: &str, values: &[f64]) -> Result<()> {
    check_finite(name, values)?;
    for (i, v) in values.iter().enumerate() {
        if *v < 0.0 {
            return Err(Error::invalid(format!("{name}[{i}] is negative: {v}")));
        }
    }
    Ok(())
}

/// Weights tying each item to the budgeted quantities: entry `(i, j)` is the
/// amount item `j` contributes to budget coordinate `i` when it receives one
/// unit of position weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Association {
    n_budgets: usize,
    n_items: usize,
    weights: Vec<f64>,
}

impl Association {
    /// Builds an `n_budgets x n_items` matrix from row-major weights.
    /// Weights must be finite and non-negative.
    pub fn new(n_budgets: usize, n_items: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n_budgets * n_items {
            return Err(Error::dim(format!(
                "association matrix expects {} weights ({} x {}), got {}",
                n_budgets * n_items,
                n_budgets,
                n_items,
                weights.len()
            )));
        }
        check_non_negative("association weight", &weights)?;
        Ok(Association {
            n_budgets,
            n_items,
            weights,
        })
    }

    /// Indicator matrix for disjoint item groups: `groups[i]` lists the items
    /// counted by budget coordinate `i` with weight 1.
    pub fn from_groups(n_items: usize, groups: &[Vec<usize>]) -> Result<Self> {
        let mut weights = vec![0.0; groups.len() * n_items];
        for (i, members) in groups.iter().enumerate() {
            for &j in members {
                if j >= n_items {
                    return Err(Error::invalid(format!(
                        "group {i} refers to item {j}, but there are only {n_items} items"
                    )));
                }
                weights[i * n_items + j] = 1.0;
            }
        }
        Association::new(groups.len(), n_items, weights)
    }

    pub fn n_budgets(&self) -> usize {
        self.n_budgets
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    pub fn get(&self, budget: usize, item: usize) -> f64 {
        self.weights[budget * self.n_items + item]
    }

    /// Row `i` as a slice over items.
    #[inline]
    pub fn row(&self, budget: usize) -> &[f64] {
        &self.weights[budget * self.n_items..(budget + 1) * self.n_items]
    }

    /// Multiplies the transpose against a length-`m` vector, producing one
    /// scalar per item: `out[j] = sum_i v[i] * w[i][j]`.
    pub fn transpose_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_budgets {
            return Err(Error::dim(format!(
                "expected {} budget coordinates, got {}",
                self.n_budgets,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.n_items];
        for i in 0..self.n_budgets {
            let row = self.row(i);
            for j in 0..self.n_items {
                out[j] += v[i] * row[j];
            }
        }
        Ok(out)
    }

    /// Multiplies against a per-item vector, producing one scalar per budget
    /// coordinate: `out[i] = sum_j w[i][j] * x[j]`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_items {
            return Err(Error::dim(format!(
                "expected {} items, got {}",
                self.n_items,
                x.len()
            )));
        }
        Ok((0..self.n_budgets)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .map(|(w, xj)| w * xj)
                    .sum::<f64>()
            })
            .collect())
    }
}

/// One request: per-item relevance plus the item-to-budget weights in force
/// at that step. Relevance is clamped to `[0, 1]` on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Context {
    /// 1-based step index within the episode.
    pub t: usize,
    relevance: Vec<f64>,
    assoc: Association,
}

impl Context {
    pub fn new(t: usize, relevance: Vec<f64>, assoc: Association) -> Result<Self> {
        if t == 0 {
            return Err(Error::invalid("step index t is 1-based and must be >= 1"));
        }
        check_finite("relevance", &relevance)?;
        if relevance.len() != assoc.n_items() {
            return Err(Error::dim(format!(
                "relevance has {} entries but association matrix covers {} items",
                relevance.len(),
                assoc.n_items()
            )));
        }
        let relevance = relevance.into_iter().map(|r| r.clamp(0.0, 1.0)).collect();
        Ok(Context {
            t,
            relevance,
            assoc,
        })
    }

    pub fn n_items(&self) -> usize {
        self.relevance.len()
    }

    pub fn relevance(&self) -> &[f64] {
        &self.relevance
    }

    pub fn assoc(&self) -> &Association {
        &self.assoc
    }
}

/// Computes the standard position-discount vector `1 / log2(k + 1)` for
/// 1-based positions `k`, zeroed beyond `cutoff` when one is given.
pub fn dcg_weights(n: usize, cutoff: Option<usize>) -> Vec<f64> {
    apply_cutoff(
        (1..=n).map(|k| 1.0 / ((k + 1) as f64).log2()).collect(),
        cutoff,
    )
}

/// Computes the reciprocal-rank vector `1 / k` for 1-based positions `k`,
/// zeroed beyond `cutoff` when one is given.
pub fn rr_weights(n: usize, cutoff: Option<usize>) -> Vec<f64> {
    apply_cutoff((1..=n).map(|k| 1.0 / k as f64).collect(), cutoff)
}

fn apply_cutoff(mut w: Vec<f64>, cutoff: Option<usize>) -> Vec<f64> {
    if let Some(k) = cutoff {
        for entry in w.iter_mut().skip(k) {
            *entry = 0.0;
        }
    }
    w
}

/// Position weight profiles: `utility[k]` scores relevance shown at position
/// `k`, `exposure[k]` is the attention credited toward budgets at position
/// `k`. Both are indexed by 0-based position and have one entry per slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionWeights {
    utility: Vec<f64>,
    exposure: Vec<f64>,
    cutoff: Option<usize>,
}

impl PositionWeights {
    /// Validates and stores explicit weight vectors. Utility weights must be
    /// non-negative and non-increasing (several solver shortcuts rely on the
    /// top positions being the valuable ones); exposure weights only need to
    /// be non-negative. A cutoff zeroes both vectors past the given depth.
    pub fn new(utility: Vec<f64>, exposure: Vec<f64>, cutoff: Option<usize>) -> Result<Self> {
        if utility.len() != exposure.len() {
            return Err(Error::dim(format!(
                "utility weights cover {} positions, exposure weights {}",
                utility.len(),
                exposure.len()
            )));
        }
        check_non_negative("utility weight", &utility)?;
        check_non_negative("exposure weight", &exposure)?;
        for k in 1..utility.len() {
            if utility[k] > utility[k - 1] {
                return Err(Error::invalid(format!(
                    "utility weights must be non-increasing; position {} has {} > {}",
                    k + 1,
                    utility[k],
                    utility[k - 1]
                )));
            }
        }
        let utility = apply_cutoff(utility, cutoff);
        let exposure = apply_cutoff(exposure, cutoff);
        Ok(PositionWeights {
            utility,
            exposure,
            cutoff,
        })
    }

    /// The default profile: log-discounted utility and reciprocal-rank
    /// exposure over `n` positions.
    pub fn dcg_rr(n: usize, cutoff: Option<usize>) -> Self {
        PositionWeights::new(dcg_weights(n, None), rr_weights(n, None), cutoff)
            .expect("built-in weight profiles are valid")
    }

    pub fn n_positions(&self) -> usize {
        self.utility.len()
    }

    pub fn utility(&self) -> &[f64] {
        &self.utility
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    pub fn cutoff(&self) -> Option<usize> {
        self.cutoff
    }
}

/// A full ranking as the item shown at each position.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    item_at: Vec<usize>,
}

impl Permutation {
    /// `item_at[k]` is the 0-based item placed at 0-based position `k`.
    /// The mapping must be a bijection.
    pub fn new(item_at: Vec<usize>) -> Result<Self> {
        let n = item_at.len();
        let mut seen = vec![false; n];
        for &j in &item_at {
            if j >= n {
                return Err(Error::invalid(format!(
                    "permutation places item {j} but only {n} items exist"
                )));
            }
            if seen[j] {
                return Err(Error::invalid(format!(
                    "permutation places item {j} at two positions"
                )));
            }
            seen[j] = true;
        }
        Ok(Permutation { item_at })
    }

    /// The identity ranking: item `k` at position `k`.
    pub fn identity(n: usize) -> Self {
        Permutation {
            item_at: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.item_at.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_at.is_empty()
    }

    /// Item displayed at 0-based `position`.
    #[inline]
    pub fn item_at(&self, position: usize) -> usize {
        self.item_at[position]
    }

    pub fn items(&self) -> &[usize] {
        &self.item_at
    }

    /// 0-based position of `item`.
    pub fn position_of(&self, item: usize) -> usize {
        self.item_at
            .iter()
            .position(|&j| j == item)
            .expect("permutation is a bijection")
    }

    /// Ranks items by score, highest first, breaking ties toward the lowest
    /// item index. Scores must be finite.
    pub fn from_scores_desc(scores: &[f64]) -> Result<Self> {
        check_finite("score", scores)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        // Stable sort on descending score keeps the index order inside ties.
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
        Ok(Permutation { item_at: order })
    }
}

/// A distribution over rankings in matrix form: entry `(k, j)` is the
/// probability that item `j` occupies position `k`. Rows and columns each sum
/// to one, so the matrix is a convex combination of permutations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingPolicy {
    n: usize,
    rows: Vec<f64>,
}

impl RankingPolicy {
    /// Validates a row-major `n x n` matrix: entries in `[0, 1]` and row and
    /// column sums equal to one, all within [`STOCHASTIC_TOL`].
    pub fn new(n: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != n * n {
            return Err(Error::dim(format!(
                "ranking distribution expects {} entries ({n} x {n}), got {}",
                n * n,
                rows.len()
            )));
        }
        check_finite("ranking distribution entry", &rows)?;
        for (idx, v) in rows.iter().enumerate() {
            if *v < -STOCHASTIC_TOL || *v > 1.0 + STOCHASTIC_TOL {
                return Err(Error::invalid(format!(
                    "ranking distribution entry ({}, {}) out of [0, 1]: {v}",
                    idx / n,
                    idx % n
                )));
            }
        }
        for k in 0..n {
            let sum: f64 = rows[k * n..(k + 1) * n].iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!(
                    "row {k} of ranking distribution sums to {sum}, expected 1"
                )));
            }
        }
        for j in 0..n {
            let sum: f64 = (0..n).map(|k| rows[k * n + j]).sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!(
                    "column {j} of ranking distribution sums to {sum}, expected 1"
                )));
            }
        }
        Ok(RankingPolicy { n, rows })
    }

    pub fn from_permutation(p: &Permutation) -> Self {
        let n = p.len();
        let mut rows = vec![0.0; n * n];
        for k in 0..n {
            rows[k * n + p.item_at(k)] = 1.0;
        }
        RankingPolicy { n, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, position: usize, item: usize) -> f64 {
        self.rows[position * self.n + item]
    }

    #[inline]
    pub fn row(&self, position: usize) -> &[f64] {
        &self.rows[position * self.n..(position + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.rows
    }

    /// Expected position weight landing on each item: `out[j] = sum_k
    /// w[k] * p(k, j)`.
    pub fn item_weight(&self, position_weights: &[f64]) -> Result<Vec<f64>> {
        if position_weights.len() != self.n {
            return Err(Error::dim(format!(
                "expected {} position weights, got {}",
                self.n,
                position_weights.len()
            )));
        }
        let mut out = vec![0.0; self.n];
        for k in 0..self.n {
            let w = position_weights[k];
            if w == 0.0 {
                continue;
            }
            for (j, out_j) in out.iter_mut().enumerate() {
                *out_j += w * self.get(k, j);
            }
        }
        Ok(out)
    }

    /// Exactly one entry per row equal to 1?  Returns the ranking if so.
    pub fn as_permutation(&self) -> Option<Permutation> {
        let mut item_at = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let row = self.row(k);
            let mut hit = None;
            for (j, &v) in row.iter().enumerate() {
                if (v - 1.0).abs() <= STOCHASTIC_TOL {
                    hit = Some(j);
                } else if v.abs() > STOCHASTIC_TOL {
                    return None;
                }
            }
            item_at.push(hit?);
        }
        Permutation::new(item_at).ok()
    }
}

/// Episode-level budget contract: the floor `target[i]` each budget
/// coordinate should reach by the end of `horizon` steps, and the per-unit
/// price `shortfall_cost[i]` paid on any terminal shortfall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    targets: Vec<f64>,
    shortfall_costs: Vec<f64>,
    horizon: usize,
    weights: PositionWeights,
}

impl InterventionSpec {
    pub fn new(
        targets: Vec<f64>,
        shortfall_costs: Vec<f64>,
        horizon: usize,
        weights: PositionWeights,
    ) -> Result<Self> {
        if targets.len() != shortfall_costs.len() {
            return Err(Error::dim(format!(
                "{} targets but {} shortfall costs",
                targets.len(),
                shortfall_costs.len()
            )));
        }
        check_non_negative("target", &targets)?;
        check_non_negative("shortfall cost", &shortfall_costs)?;
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1 step"));
        }
        Ok(InterventionSpec {
            targets,
            shortfall_costs,
            horizon,
            weights,
        })
    }

    pub fn n_budgets(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn shortfall_costs(&self) -> &[f64] {
        &self.shortfall_costs
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn weights(&self) -> &PositionWeights {
        &self.weights
    }

    /// Same contract with a different price vector.
    pub fn with_shortfall_costs(&self, costs: Vec<f64>) -> Result<Self> {
        InterventionSpec::new(
            self.targets.clone(),
            costs,
            self.horizon,
            self.weights.clone(),
        )
    }

    /// Same contract with different targets.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        InterventionSpec::new(
            targets,
            self.shortfall_costs.clone(),
            self.horizon,
            self.weights.clone(),
        )
    }

    /// Same contract over a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        InterventionSpec::new(
            self.targets.clone(),
            self.shortfall_costs.clone(),
            horizon,
            self.weights.clone(),
        )
    }
}

/// Running totals of budget credit across an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressState {
    sum: Vec<f64>,
    steps: usize,
}

impl ProgressState {
    pub fn new(n_budgets: usize) -> Self {
        ProgressState {
            sum: vec![0.0; n_budgets],
            steps: 0,
        }
    }

    /// Adds one step's credit vector. Replaying the same deltas in the same
    /// order reproduces the state exactly.
    pub fn observe(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.sum.len() {
            return Err(Error::dim(format!(
                "progress delta has {} entries, state tracks {}",
                delta.len(),
                self.sum.len()
            )));
        }
        for (s, d) in self.sum.iter_mut().zip(delta) {
            *s += d;
        }
        self.steps += 1;
        Ok(())
    }

    pub fn totals(&self) -> &[f64] {
        &self.sum
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dcg_weights_match_log_discounts() {
        let w = dcg_weights(3, None);
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 0.630_929_753_571_457_4).abs() < 1e-15);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn rr_weights_are_reciprocal_ranks() {
        assert_eq!(rr_weights(4, None), vec![1.0, 0.5, 1.0 / 3.0, 0.25]);
    }

    #[test]
    fn cutoff_zeroes_tail_positions() {
        let w = rr_weights(4, Some(2));
        assert_eq!(w, vec![1.0, 0.5, 0.0, 0.0]);
        let p = PositionWeights::dcg_rr(4, Some(2));
        assert_eq!(p.utility()[2], 0.0);
        assert_eq!(p.utility()[3], 0.0);
        assert_eq!(p.exposure()[2], 0.0);
        assert!(p.utility()[1] > 0.0);
    }

    #[test]
    fn cutoff_of_zero_zeroes_everything() {
        assert_eq!(dcg_weights(2, Some(0)), vec![0.0, 0.0]);
    }

    #[test]
    fn cutoff_beyond_length_is_a_no_op() {
        assert_eq!(rr_weights(2, Some(10)), rr_weights(2, None));
    }

    #[test]
    fn position_weights_reject_increasing_utility() {
        let err = PositionWeights::new(vec![0.5, 1.0], vec![1.0, 0.5], None);
        assert!(err.is_err());
    }

    #[test]
    fn position_weights_allow_non_monotone_exposure() {
        assert!(PositionWeights::new(vec![1.0, 0.5], vec![0.2, 0.7], None).is_ok());
    }

    #[test]
    fn relevance_is_clamped_on_construction() {
        let assoc = Association::new(1, 2, vec![1.0, 0.0]).unwrap();
        let ctx = Context::new(1, vec![-0.5, 1.5], assoc).unwrap();
        assert_eq!(ctx.relevance(), &[0.0, 1.0]);
    }

    #[test]
    fn context_rejects_nan_relevance() {
        let assoc = Association::new(1, 1, vec![1.0]).unwrap();
        assert!(Context::new(1, vec![f64::NAN], assoc).is_err());
    }

    #[test]
    fn permutation_rejects_duplicates_and_out_of_range() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
        assert!(Permutation::new(vec![1, 0, 2]).is_ok());
    }

    #[test]
    fn permutation_round_trips_through_matrix_form() {
        let p = Permutation::new(vec![2, 0, 1]).unwrap();
        let m = RankingPolicy::from_permutation(&p);
        assert_eq!(m.as_permutation().unwrap(), p);
        assert_eq!(p.position_of(2), 0);
        assert_eq!(p.position_of(1), 2);
    }

    #[test]
    fn argsort_breaks_ties_toward_lower_item_index() {
        let p = Permutation::from_scores_desc(&[0.3, 0.9, 0.3, 0.9]).unwrap();
        assert_eq!(p.items(), &[1, 3, 0, 2]);
    }

    #[test]
    fn ranking_policy_rejects_bad_sums() {
        let rows = vec![0.6, 0.4, 0.6, 0.4];
        assert!(RankingPolicy::new(2, rows).is_err());
        let ok = vec![0.6, 0.4, 0.4, 0.6];
        assert!(RankingPolicy::new(2, ok).is_ok());
    }

    #[test]
    fn uniform_mixture_is_not_reported_as_permutation() {
        let m = RankingPolicy::new(2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(m.as_permutation().is_none());
    }

    #[test]
    fn item_weight_aggregates_position_mass() {
        let m = RankingPolicy::new(2, vec![0.25, 0.75, 0.75, 0.25]).unwrap();
        let w = m.item_weight(&[1.0, 0.5]).unwrap();
        assert!((w[0] - (0.25 + 0.375)).abs() < 1e-15);
        assert!((w[1] - (0.75 + 0.125)).abs() < 1e-15);
    }

    #[test]
    fn progress_replay_is_exact() {
        let deltas = vec![vec![0.1, 0.7], vec![0.25, 0.0], vec![1.0 / 3.0, 0.9]];
        let mut a = ProgressState::new(2);
        for d in &deltas {
            a.observe(d).unwrap();
        }
        let mut b = ProgressState::new(2);
        for d in &deltas {
            b.observe(d).unwrap();
        }
        assert_eq!(a.totals(), b.totals());
        assert_eq!(a.steps(), 3);
    }

    #[test]
    fn intervention_spec_validates_shapes() {
        let w = PositionWeights::dcg_rr(3, None);
        assert!(InterventionSpec::new(vec![1.0], vec![1.0, 2.0], 5, w.clone()).is_err());
        assert!(InterventionSpec::new(vec![1.0], vec![1.0], 0, w.clone()).is_err());
        assert!(InterventionSpec::new(vec![1.0, 2.0], vec![0.5, 0.5], 5, w).is_ok());
    }

    #[test]
    fn association_group_constructor_builds_indicators() {
        let a = Association::from_groups(4, &[vec![0, 2], vec![3]]).unwrap();
        assert_eq!(a.row(0), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(a.row(1), &[0.0, 0.0, 0.0, 1.0]);
        let boost = a.transpose_apply(&[2.0, 5.0]).unwrap();
        assert_eq!(boost, vec![2.0, 0.0, 2.0, 5.0]);
        let totals = a.apply(&[1.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(totals, vec![4.0, 2.0]);
    }
}
