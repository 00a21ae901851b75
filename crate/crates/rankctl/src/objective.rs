//! Scoring a single step and a whole episode.
//!
//! One step contributes two linear quantities, both driven by position
//! weights: short-term utility (relevance weighted by the utility profile)
//! and budget credit (exposure weighted by the item-to-budget matrix). The
//! episode objective is total utility minus the price of any terminal budget
//! shortfall.

use crate::error::{Error, Result};
use crate::types::{Context, InterventionSpec, Permutation, PositionWeights, RankingPolicy};

fn check_shapes(ctx: &Context, n: usize, weights: &PositionWeights) -> Result<()> {
    if ctx.n_items() != n {
        return Err(Error::dim(format!(
            "context covers {} items, ranking covers {}",
            ctx.n_items(),
            n
        )));
    }
    if weights.n_positions() != n {
        return Err(Error::dim(format!(
            "position weights cover {} slots, ranking covers {}",
            weights.n_positions(),
            n
        )));
    }
    Ok(())
}

/// Expected utility of showing `policy` for `ctx`:
/// `sum_k u[k] * sum_j p(k, j) * relevance[j]`.
pub fn utility(ctx: &Context, policy: &RankingPolicy, weights: &PositionWeights) -> Result<f64> {
    check_shapes(ctx, policy.n(), weights)?;
    let r = ctx.relevance();
    let mut total = 0.0;
    for (k, &u) in weights.utility().iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        let row = policy.row(k);
        let mut slot = 0.0;
        for (p, rj) in row.iter().zip(r) {
            slot += p * rj;
        }
        total += u * slot;
    }
    Ok(total)
}

/// Utility of a deterministic ranking: `sum_k u[k] * relevance[item_at(k)]`.
pub fn utility_of_ranking(
    ctx: &Context,
    ranking: &Permutation,
    weights: &PositionWeights,
) -> Result<f64> {
    check_shapes(ctx, ranking.len(), weights)?;
    let r = ctx.relevance();
    Ok(weights
        .utility()
        .iter()
        .enumerate()
        .map(|(k, &u)| u * r[ranking.item_at(k)])
        .sum())
}

/// Expected budget credit of one step: coordinate `i` receives
/// `sum_j w[i][j] * sum_k p(k, j) * e[k]`.
pub fn progress(
    ctx: &Context,
    policy: &RankingPolicy,
    weights: &PositionWeights,
) -> Result<Vec<f64>> {
    check_shapes(ctx, policy.n(), weights)?;
    let item_exposure = policy.item_weight(weights.exposure())?;
    ctx.assoc().apply(&item_exposure)
}

/// Budget credit of a deterministic ranking.
pub fn progress_of_ranking(
    ctx: &Context,
    ranking: &Permutation,
    weights: &PositionWeights,
) -> Result<Vec<f64>> {
    check_shapes(ctx, ranking.len(), weights)?;
    let n = ranking.len();
    let mut item_exposure = vec![0.0; n];
    for (k, &e) in weights.exposure().iter().enumerate() {
        item_exposure[ranking.item_at(k)] = e;
    }
    ctx.assoc().apply(&item_exposure)
}

/// Price paid at the end of an episode: each budget coordinate is charged
/// `cost[i] * max(0, target[i] - terminal[i])`. Overshoot is free.
pub fn shortfall_cost(spec: &InterventionSpec, terminal: &[f64]) -> Result<f64> {
    if terminal.len() != spec.n_budgets() {
        return Err(Error::dim(format!(
            "terminal progress has {} entries, contract tracks {}",
            terminal.len(),
            spec.n_budgets()
        )));
    }
    Ok(spec
        .targets()
        .iter()
        .zip(spec.shortfall_costs())
        .zip(terminal)
        .map(|((tau, phi), s)| phi * (tau - s).max(0.0))
        .sum())
}

/// Episode score: utilities summed in order, minus the terminal shortfall
/// price. Recomputing over a recorded trace reproduces the score exactly.
pub fn episode_objective(
    utilities: &[f64],
    spec: &InterventionSpec,
    terminal: &[f64],
) -> Result<f64> {
    let total: f64 = utilities.iter().sum();
    Ok(total - shortfall_cost(spec, terminal)?)
}
