//! Optimization routines over rankings.
//!
//! Three entry points, in increasing scope:
//!
//! * [`solve_assignment`]: one step, no budget terms. Exact permutation
//!   maximizing a position-by-item score matrix.
//! * [`solve_hinge_lp`]: one step with budget shortfall prices. A linear
//!   program over ranking distributions whose optimum may mix rankings.
//! * [`solve_horizon_lp`]: a whole episode (or several weighted scenarios) at
//!   once, used for hindsight plans and offline forecasts.

mod assignment;
mod horizon;
mod simplex;

pub use assignment::{solve_assignment, AssignmentSolution};
pub use horizon::{
    solve_horizon_lp, HorizonMethod, HorizonProblem, HorizonSolution, HorizonStep, HorizonStream,
};

use crate::error::{Error, Result};
use crate::types::{Association, RankingPolicy};

/// Row-major position-by-item score matrix: entry `(k, j)` is the payoff of
/// showing item `j` at position `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::dim(format!(
                "score matrix expects {} entries ({n} x {n}), got {}",
                n * n,
                entries.len()
            )));
        }
        for (i, v) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "score ({}, {}) is not finite: {v}",
                    i / n,
                    i % n
                )));
            }
        }
        Ok(ScoreMatrix { n, entries })
    }

    pub fn zeros(n: usize) -> Self {
        ScoreMatrix {
            n,
            entries: vec![0.0; n * n],
        }
    }

    /// Rank-one score `position_weights[k] * item_values[j]`.
    pub fn from_outer(position_weights: &[f64], item_values: &[f64]) -> Result<Self> {
        let n = position_weights.len();
        if item_values.len() != n {
            return Err(Error::dim(format!(
                "{} position weights vs {} item values",
                n,
                item_values.len()
            )));
        }
        let mut m = ScoreMatrix::zeros(n);
        m.add_outer(position_weights, item_values)?;
        for v in &m.entries {
            if !v.is_finite() {
                return Err(Error::invalid("non-finite score entry"));
            }
        }
        Ok(m)
    }

    /// Adds `position_weights[k] * item_values[j]` to each entry.
    pub fn add_outer(&mut self, position_weights: &[f64], item_values: &[f64]) -> Result<()> {
        if position_weights.len() != self.n || item_values.len() != self.n {
            return Err(Error::dim(format!(
                "outer product shapes {} x {} do not fit a {} x {} score matrix",
                position_weights.len(),
                item_values.len(),
                self.n,
                self.n
            )));
        }
        for (k, &w) in position_weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = &mut self.entries[k * self.n..(k + 1) * self.n];
            for (cell, &v) in row.iter_mut().zip(item_values) {
                *cell += w * v;
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, position: usize, item: usize) -> f64 {
        self.entries[position * self.n + item]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// One step's program: maximize score minus priced shortfall below the hinge
/// targets. `hinge_targets` may be negative (already-met budgets); those
/// coordinates, and coordinates with zero cost, cannot bind.
#[derive(Clone, Debug)]
pub struct HingeProgram<'a> {
    pub score: &'a ScoreMatrix,
    pub assoc: &'a Association,
    /// Exposure credited per position, length n.
    pub exposure: &'a [f64],
    /// Hinge target per budget coordinate.
    pub hinge_targets: &'a [f64],
    /// Price per unit of shortfall, non-negative.
    pub hinge_costs: &'a [f64],
}

/// Optimal ranking distribution plus the value it attains.
#[derive(Clone, Debug)]
pub struct HingeSolution {
    pub policy: RankingPolicy,
    /// Score minus priced shortfall, evaluated at `policy`.
    pub objective: f64,
    /// `(target - credit)+` per budget coordinate at `policy`.
    pub shortfall: Vec<f64>,
}

/// Solves `max_P score(P) - costs . (targets - credit(P))+` over ranking
/// distributions. When no hinge can bind the problem reduces to a pure
/// assignment and the answer is a single ranking; otherwise the optimum may
/// be a mixture and is found by linear programming.
pub fn solve_hinge_lp(program: &HingeProgram<'_>) -> Result<HingeSolution> {
    let n = program.score.n();
    let m = program.assoc.n_budgets();
    if program.assoc.n_items() != n {
        return Err(Error::dim(format!(
            "association matrix covers {} items, score matrix {}",
            program.assoc.n_items(),
            n
        )));
    }
    if program.exposure.len() != n {
        return Err(Error::dim(format!(
            "exposure weights cover {} positions, score matrix {}",
            program.exposure.len(),
            n
        )));
    }
    if program.hinge_targets.len() != m || program.hinge_costs.len() != m {
        return Err(Error::dim(format!(
            "hinge shapes ({} targets, {} costs) do not match {} budget coordinates",
            program.hinge_targets.len(),
            program.hinge_costs.len(),
            m
        )));
    }
    for (i, c) in program.hinge_costs.iter().enumerate() {
        if !c.is_finite() || *c < 0.0 {
            return Err(Error::invalid(format!("hinge cost [{i}] invalid: {c}")));
        }
    }
    for (i, h) in program.hinge_targets.iter().enumerate() {
        if !h.is_finite() {
            return Err(Error::invalid(format!("hinge target [{i}] invalid: {h}")));
        }
    }

    // Credit is non-negative, so a hinge binds only with positive target and
    // positive price.
    let active: Vec<usize> = (0..m)
        .filter(|&i| program.hinge_costs[i] > 0.0 && program.hinge_targets[i] > 0.0)
        .collect();

    if active.is_empty() {
        let sol = solve_assignment(program.score)?;
        let policy = RankingPolicy::from_permutation(&sol.ranking);
        return finish(program, policy, n);
    }

    // Variables: x(k, j) column block, then (z_i, t_i) per active hinge.
    let nx = n * n;
    let n_vars = nx + 2 * active.len();
    let mut objective = program.score.entries().to_vec();
    objective.resize(n_vars, 0.0);
    for (a, &i) in active.iter().enumerate() {
        objective[nx + 2 * a] = -program.hinge_costs[i];
    }

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(2 * n + active.len());
    for k in 0..n {
        let mut row = vec![0.0; n_vars];
        for j in 0..n {
            row[k * n + j] = 1.0;
        }
        rows.push((row, 1.0));
    }
    for j in 0..n {
        let mut row = vec![0.0; n_vars];
        for k in 0..n {
            row[k * n + j] = 1.0;
        }
        rows.push((row, 1.0));
    }
    // credit_i + z_i - t_i = target_i encodes z_i >= target_i - credit_i.
    for (a, &i) in active.iter().enumerate() {
        let mut row = vec![0.0; n_vars];
        for k in 0..n {
            let e = program.exposure[k];
            if e == 0.0 {
                continue;
            }
            for j in 0..n {
                row[k * n + j] = e * program.assoc.get(i, j);
            }
        }
        row[nx + 2 * a] = 1.0;
        row[nx + 2 * a + 1] = -1.0;
        rows.push((row, program.hinge_targets[i]));
    }

    let lp = simplex::DenseLp {
        n_vars,
        objective,
        rows,
    };
    let sol = simplex::maximize(&lp)?;
    let entries: Vec<f64> = sol.x[..nx].iter().map(|&v| v.max(0.0)).collect();
    let policy = RankingPolicy::new(n, entries)?;
    finish(program, policy, n)
}

/// Evaluates the true objective and shortfall of `policy` so the reported
/// numbers always describe the returned distribution.
fn finish(program: &HingeProgram<'_>, policy: RankingPolicy, n: usize) -> Result<HingeSolution> {
    let item_weight = policy.item_weight(program.exposure)?;
    let credit = program.assoc.apply(&item_weight)?;
    let shortfall: Vec<f64> = program
        .hinge_targets
        .iter()
        .zip(&credit)
        .map(|(h, c)| (h - c).max(0.0))
        .collect();
    let mut objective = 0.0;
    for k in 0..n {
        let row = policy.row(k);
        for j in 0..n {
            objective += program.score.get(k, j) * row[j];
        }
    }
    for (i, z) in shortfall.iter().enumerate() {
        objective -= program.hinge_costs[i] * z;
    }
    Ok(HingeSolution {
        policy,
        objective,
        shortfall,
    })
}
