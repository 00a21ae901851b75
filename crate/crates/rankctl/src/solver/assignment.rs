//! Exact maximum-score assignment of items to positions.
//!
//! The solver runs shortest augmenting paths with dual potentials in
//! O(n^3), then refines the answer so that among all maximizers the returned
//! ranking is lexicographically smallest by position (position 1 gets the
//! lowest-indexed item that some maximizer uses there, and so on). The
//! refinement walks only edges that are tight against the optimal duals, so
//! every ranking it can reach attains the optimal value.

use crate::error::{Error, Result};
use crate::types::Permutation;

use super::ScoreMatrix;

/// An optimal ranking and the score it attains.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentSolution {
    pub ranking: Permutation,
    pub value: f64,
}

/// Finds a ranking maximizing `sum_k score(k, item_at(k))`. Ties resolve
/// toward the lowest item index, position by position.
pub fn solve_assignment(score: &ScoreMatrix) -> Result<AssignmentSolution> {
    let n = score.n();
    if n == 0 {
        return Ok(AssignmentSolution {
            ranking: Permutation::identity(0),
            value: 0.0,
        });
    }
    // Minimize negated scores.
    let cost: Vec<f64> = score.entries().iter().map(|s| -s).collect();
    let (pos_to_item, duals) = min_cost_assignment(n, &cost)?;
    let scale = score
        .entries()
        .iter()
        .fold(1.0f64, |acc, s| acc.max(s.abs()));
    let tol = 1e-9 * scale;

    // Dual feasibility certifies optimality of the matching.
    for k in 0..n {
        for j in 0..n {
            let rc = cost[k * n + j] - duals.row[k] - duals.col[j];
            if rc < -100.0 * tol {
                return Err(Error::solver(format!(
                    "assignment duals infeasible at ({k}, {j}): reduced cost {rc}"
                )));
            }
        }
    }

    let item_at = lexicographic_refine(n, &cost, &duals, tol, pos_to_item);
    let value = item_at
        .iter()
        .enumerate()
        .map(|(k, &j)| score.get(k, j))
        .sum();
    Ok(AssignmentSolution {
        ranking: Permutation::new(item_at)?,
        value,
    })
}

struct Duals {
    row: Vec<f64>,
    col: Vec<f64>,
}

/// Shortest-augmenting-path minimum-cost perfect matching. Returns the
/// column matched to each row plus optimal dual potentials satisfying
/// `cost[i][j] - row[i] - col[j] >= 0` with equality on matched edges.
fn min_cost_assignment(n: usize, cost: &[f64]) -> Result<(Vec<usize>, Duals)> {
    const FREE: usize = usize::MAX;
    let mut row_to_col = vec![FREE; n];
    let mut col_to_row = vec![FREE; n];
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];

    let mut shortest = vec![0.0f64; n];
    let mut path = vec![FREE; n];
    let mut in_tree_row = vec![false; n];
    let mut in_tree_col = vec![false; n];
    let mut remaining: Vec<usize> = Vec::with_capacity(n);

    for cur_row in 0..n {
        shortest.fill(f64::INFINITY);
        path.fill(FREE);
        in_tree_row.fill(false);
        in_tree_col.fill(false);
        remaining.clear();
        remaining.extend(0..n);

        let mut min_val = 0.0f64;
        let mut i = cur_row;
        let sink;
        loop {
            in_tree_row[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = FREE;
            for (it, &j) in remaining.iter().enumerate() {
                let r = min_val + cost[i * n + j] - u[i] - v[j];
                if r < shortest[j] {
                    shortest[j] = r;
                    path[j] = i;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && col_to_row[j] == FREE) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            if !lowest.is_finite() {
                return Err(Error::solver(
                    "assignment search exhausted without an augmenting path",
                ));
            }
            min_val = lowest;
            let j = remaining.swap_remove(index);
            in_tree_col[j] = true;
            if col_to_row[j] == FREE {
                sink = j;
                break;
            }
            i = col_to_row[j];
        }

        u[cur_row] += min_val;
        for i2 in 0..n {
            if in_tree_row[i2] && i2 != cur_row {
                u[i2] += min_val - shortest[row_to_col[i2]];
            }
        }
        for j in 0..n {
            if in_tree_col[j] {
                v[j] -= min_val - shortest[j];
            }
        }

        let mut j = sink;
        loop {
            let i2 = path[j];
            col_to_row[j] = i2;
            std::mem::swap(&mut row_to_col[i2], &mut j);
            if i2 == cur_row {
                break;
            }
        }
    }

    Ok((row_to_col, Duals { row: u, col: v }))
}

/// Rewrites an optimal matching into the lexicographically smallest optimal
/// one: scanning positions in order, each position takes the lowest-indexed
/// item that still leaves the remaining positions completable along tight
/// edges. Tight edges (zero reduced cost against the optimal duals) are
/// exactly the edges optimal matchings may use.
fn lexicographic_refine(
    n: usize,
    cost: &[f64],
    duals: &Duals,
    tol: f64,
    pos_to_item: Vec<usize>,
) -> Vec<usize> {
    const FREE: usize = usize::MAX;
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|k| {
            (0..n)
                .filter(|&j| cost[k * n + j] - duals.row[k] - duals.col[j] <= tol)
                .collect()
        })
        .collect();

    let mut pos_of_item = vec![FREE; n];
    let mut item_at = pos_to_item;
    for (k, &j) in item_at.iter().enumerate() {
        pos_of_item[j] = k;
    }
    let mut fixed_item = vec![false; n];

    for k in 0..n {
        let current = item_at[k];
        for &j in &tight[k] {
            if fixed_item[j] {
                continue;
            }
            if j == current {
                break;
            }
            if j > current {
                // Candidates are ascending, so the current item is already
                // the best remaining choice.
                break;
            }
            // Try moving item j to position k; its old position must rematch.
            let displaced = pos_of_item[j];
            item_at[k] = j;
            pos_of_item[j] = k;
            pos_of_item[current] = FREE;
            let mut item_seen = vec![false; n];
            item_seen[j] = true;
            if rematch(
                displaced,
                &tight,
                &fixed_item,
                &mut item_at,
                &mut pos_of_item,
                &mut item_seen,
            ) {
                break;
            }
            // Revert.
            pos_of_item[current] = k;
            pos_of_item[j] = displaced;
            item_at[k] = current;
        }
        fixed_item[item_at[k]] = true;
    }
    item_at
}

/// Augmenting search: finds a new tight item for `pos`, displacing further
/// positions recursively. Items already fixed or seen this attempt are
/// skipped.
fn rematch(
    pos: usize,
    tight: &[Vec<usize>],
    fixed_item: &[bool],
    item_at: &mut [usize],
    pos_of_item: &mut [usize],
    item_seen: &mut [bool],
) -> bool {
    const FREE: usize = usize::MAX;
    for &x in &tight[pos] {
        if fixed_item[x] || item_seen[x] {
            continue;
        }
        item_seen[x] = true;
        let holder = pos_of_item[x];
        if holder == FREE
            || rematch(holder, tight, fixed_item, item_at, pos_of_item, item_seen)
        {
            item_at[pos] = x;
            pos_of_item[x] = pos;
            return true;
        }
    }
    false
}
