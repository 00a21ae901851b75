//! Planning a whole episode (or several weighted scenarios) in one program.
//!
//! The program chooses one ranking distribution per *slot* to maximize total
//! weighted utility minus each scenario's priced terminal shortfall. A slot
//! is a decision variable that several steps may share: a hindsight plan uses
//! one slot per step, while offline fits reuse one slot per distinct dataset
//! row so that every scenario passing through that row sees the same
//! distribution.
//!
//! Two routes produce the same answer:
//!
//! * a monolithic LP over all slot distributions at once, used when
//!   `slots * n^2` stays small;
//! * Lagrangian decomposition otherwise: dualizing the hinge terms splits the
//!   problem into independent per-slot assignments. The dual is a convex
//!   piecewise-linear function over a box, minimized by coordinate bisection
//!   in one or two dimensions and projected subgradient descent above that.
//!   A primal solution is then recovered by mixing the rankings encountered
//!   during the dual search (small LP), and the run fails hard unless the
//!   duality gap certifies the answer.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::objective;
use crate::types::{Context, InterventionSpec, Permutation, RankingPolicy};

use super::simplex::{maximize, DenseLp};
use super::{solve_assignment, ScoreMatrix};

/// One request inside a scenario: its context, the slot whose distribution
/// serves it, and a multiplicity weight.
#[derive(Clone, Debug)]
pub struct HorizonStep {
    pub weight: f64,
    pub slot: usize,
    pub context: Context,
}

/// One scenario: a weighted sequence of steps sharing a single terminal
/// shortfall account.
#[derive(Clone, Debug)]
pub struct HorizonStream {
    pub weight: f64,
    pub steps: Vec<HorizonStep>,
}

/// The full planning instance.
#[derive(Clone, Debug)]
pub struct HorizonProblem {
    pub n_slots: usize,
    pub streams: Vec<HorizonStream>,
}

impl HorizonProblem {
    /// A single scenario with one slot per step, in order. This is the
    /// hindsight-plan shape: every step gets its own distribution.
    pub fn per_step(contexts: Vec<Context>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::invalid("horizon problem needs at least one step"));
        }
        let steps = contexts
            .into_iter()
            .enumerate()
            .map(|(s, context)| HorizonStep {
                weight: 1.0,
                slot: s,
                context,
            })
            .collect::<Vec<_>>();
        Ok(HorizonProblem {
            n_slots: steps.len(),
            streams: vec![HorizonStream {
                weight: 1.0,
                steps,
            }],
        })
    }

    pub fn n_items(&self) -> usize {
        self.streams
            .first()
            .and_then(|s| s.steps.first())
            .map(|s| s.context.n_items())
            .unwrap_or(0)
    }
}

/// Which solution route to take. `Auto` uses the monolithic LP while
/// `slots * n^2 <= 5000` and decomposition beyond that.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HorizonMethod {
    Auto,
    Monolithic,
    DualDecomposition,
}

#[derive(Clone, Debug)]
pub struct HorizonSolution {
    /// One ranking distribution per slot.
    pub policies: Vec<RankingPolicy>,
    /// Total weighted utility minus priced shortfalls, evaluated at
    /// `policies`.
    pub objective: f64,
}

const MONOLITHIC_BUDGET: usize = 5000;
const GAP_TOL: f64 = 1e-6;

pub fn solve_horizon_lp(
    problem: &HorizonProblem,
    spec: &InterventionSpec,
    method: HorizonMethod,
) -> Result<HorizonSolution> {
    validate(problem, spec)?;
    let streams = merge_streams(&problem.streams);
    let prep = Prepared::build(problem.n_slots, &streams, spec)?;

    // Without a bindable hinge every slot solves independently.
    if prep.active.is_empty() {
        let mut policies = Vec::with_capacity(prep.n_slots);
        for slot in &prep.slots {
            let score = ScoreMatrix::from_outer(prep.u, &slot.util)?;
            let sol = solve_assignment(&score)?;
            policies.push(RankingPolicy::from_permutation(&sol.ranking));
        }
        let objective = scenario_value(&streams, spec, &policies)?;
        return Ok(HorizonSolution {
            policies,
            objective,
        });
    }

    let monolithic = match method {
        HorizonMethod::Monolithic => true,
        HorizonMethod::DualDecomposition => false,
        HorizonMethod::Auto => prep.n_slots * prep.n * prep.n <= MONOLITHIC_BUDGET,
    };
    let policies = if monolithic {
        solve_monolithic(&prep)?
    } else {
        solve_dual(&prep)?
    };
    let objective = scenario_value(&streams, spec, &policies)?;
    Ok(HorizonSolution {
        policies,
        objective,
    })
}

fn validate(problem: &HorizonProblem, spec: &InterventionSpec) -> Result<()> {
    if problem.streams.is_empty() {
        return Err(Error::invalid("horizon problem has no scenarios"));
    }
    let n = problem.n_items();
    if spec.weights().n_positions() != n {
        return Err(Error::dim(format!(
            "position weights cover {} slots, contexts have {} items",
            spec.weights().n_positions(),
            n
        )));
    }
    let mut slot_seen = vec![false; problem.n_slots];
    for (b, stream) in problem.streams.iter().enumerate() {
        if !(stream.weight.is_finite() && stream.weight > 0.0) {
            return Err(Error::invalid(format!(
                "scenario {b} has non-positive weight {}",
                stream.weight
            )));
        }
        if stream.steps.is_empty() {
            return Err(Error::invalid(format!("scenario {b} has no steps")));
        }
        for (t, step) in stream.steps.iter().enumerate() {
            if !(step.weight.is_finite() && step.weight > 0.0) {
                return Err(Error::invalid(format!(
                    "scenario {b} step {t} has non-positive weight {}",
                    step.weight
                )));
            }
            if step.slot >= problem.n_slots {
                return Err(Error::invalid(format!(
                    "scenario {b} step {t} uses slot {} of {}",
                    step.slot, problem.n_slots
                )));
            }
            if step.context.n_items() != n {
                return Err(Error::dim(format!(
                    "scenario {b} step {t} has {} items, expected {n}",
                    step.context.n_items()
                )));
            }
            if step.context.assoc().n_budgets() != spec.n_budgets() {
                return Err(Error::dim(format!(
                    "scenario {b} step {t} tracks {} budget coordinates, contract has {}",
                    step.context.assoc().n_budgets(),
                    spec.n_budgets()
                )));
            }
            slot_seen[step.slot] = true;
        }
    }
    if let Some(s) = slot_seen.iter().position(|seen| !seen) {
        return Err(Error::invalid(format!("slot {s} is never used by any step")));
    }
    Ok(())
}

/// Scenarios with identical step sequences pool their weight; the exact
/// forecast configuration produces many copies of one scenario, which then
/// solves as a single one.
fn merge_streams(streams: &[HorizonStream]) -> Vec<HorizonStream> {
    let mut merged: Vec<HorizonStream> = Vec::new();
    'next: for s in streams {
        for m in merged.iter_mut() {
            if m.steps.len() == s.steps.len()
                && m.steps.iter().zip(&s.steps).all(|(a, b)| {
                    a.slot == b.slot && a.weight == b.weight && a.context == b.context
                })
            {
                m.weight += s.weight;
                continue 'next;
            }
        }
        merged.push(s.clone());
    }
    merged
}

/// Per-slot aggregates. `util[j]` carries scenario and step weights folded
/// into the relevance sums; `per_stream` holds, for each scenario touching
/// the slot, the step-weighted association rows restricted to active budget
/// coordinates (no scenario weight: the dual box carries it).
struct SlotData {
    util: Vec<f64>,
    per_stream: Vec<(usize, Vec<f64>)>,
}

struct Prepared<'a> {
    n: usize,
    n_slots: usize,
    active: Vec<usize>,
    stream_weights: Vec<f64>,
    slots: Vec<SlotData>,
    u: &'a [f64],
    e: &'a [f64],
    targets_active: Vec<f64>,
    costs_active: Vec<f64>,
    /// Flattened per (scenario, active coordinate): `w_b * cost_i`.
    box_ub: Vec<f64>,
    streams: &'a [HorizonStream],
    spec: &'a InterventionSpec,
}

impl<'a> Prepared<'a> {
    fn build(
        n_slots: usize,
        streams: &'a [HorizonStream],
        spec: &'a InterventionSpec,
    ) -> Result<Self> {
        let n = streams[0].steps[0].context.n_items();
        let active: Vec<usize> = (0..spec.n_budgets())
            .filter(|&i| spec.shortfall_costs()[i] > 0.0 && spec.targets()[i] > 0.0)
            .collect();
        let a = active.len();

        let mut slots: Vec<SlotData> = (0..n_slots)
            .map(|_| SlotData {
                util: vec![0.0; n],
                per_stream: Vec::new(),
            })
            .collect();
        for (b, stream) in streams.iter().enumerate() {
            for step in &stream.steps {
                let slot = &mut slots[step.slot];
                for (acc, r) in slot.util.iter_mut().zip(step.context.relevance()) {
                    *acc += stream.weight * step.weight * r;
                }
                if a == 0 {
                    continue;
                }
                let w = match slot.per_stream.iter_mut().find(|(sb, _)| *sb == b) {
                    Some((_, w)) => w,
                    None => {
                        slot.per_stream.push((b, vec![0.0; a * n]));
                        &mut slot.per_stream.last_mut().unwrap().1
                    }
                };
                for (ai, &i) in active.iter().enumerate() {
                    let row = step.context.assoc().row(i);
                    for j in 0..n {
                        w[ai * n + j] += step.weight * row[j];
                    }
                }
            }
        }

        let stream_weights: Vec<f64> = streams.iter().map(|s| s.weight).collect();
        let targets_active: Vec<f64> = active.iter().map(|&i| spec.targets()[i]).collect();
        let costs_active: Vec<f64> = active.iter().map(|&i| spec.shortfall_costs()[i]).collect();
        let mut box_ub = Vec::with_capacity(stream_weights.len() * a);
        for w in &stream_weights {
            for c in &costs_active {
                box_ub.push(w * c);
            }
        }
        Ok(Prepared {
            n,
            n_slots,
            active,
            stream_weights,
            slots,
            u: spec.weights().utility(),
            e: spec.weights().exposure(),
            targets_active,
            costs_active,
            box_ub,
            streams,
            spec,
        })
    }
}

/// Evaluates the plan definitionally: weighted utility minus priced
/// shortfall per scenario, summed with scenario weights.
fn scenario_value(
    streams: &[HorizonStream],
    spec: &InterventionSpec,
    policies: &[RankingPolicy],
) -> Result<f64> {
    let mut total = 0.0;
    for stream in streams {
        let mut util = 0.0;
        let mut credit = vec![0.0; spec.n_budgets()];
        for step in &stream.steps {
            let policy = &policies[step.slot];
            util += step.weight * objective::utility(&step.context, policy, spec.weights())?;
            let c = objective::progress(&step.context, policy, spec.weights())?;
            for (acc, ci) in credit.iter_mut().zip(&c) {
                *acc += step.weight * ci;
            }
        }
        let mut shortfall = 0.0;
        for i in 0..spec.n_budgets() {
            shortfall += spec.shortfall_costs()[i] * (spec.targets()[i] - credit[i]).max(0.0);
        }
        total += stream.weight * (util - shortfall);
    }
    Ok(total)
}

fn solve_monolithic(prep: &Prepared<'_>) -> Result<Vec<RankingPolicy>> {
    let n = prep.n;
    let nx = prep.n_slots * n * n;
    let n_streams = prep.stream_weights.len();
    let a = prep.active.len();
    let n_vars = nx + 2 * n_streams * a;
    let var_x = |s: usize, k: usize, j: usize| s * n * n + k * n + j;
    let var_z = |b: usize, ai: usize| nx + 2 * (b * a + ai);

    let mut objective = vec![0.0; n_vars];
    for (s, slot) in prep.slots.iter().enumerate() {
        for k in 0..n {
            let uk = prep.u[k];
            for j in 0..n {
                objective[var_x(s, k, j)] = uk * slot.util[j];
            }
        }
    }
    for b in 0..n_streams {
        for ai in 0..a {
            objective[var_z(b, ai)] = -prep.stream_weights[b] * prep.costs_active[ai];
        }
    }

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for s in 0..prep.n_slots {
        for k in 0..n {
            let mut row = vec![0.0; n_vars];
            for j in 0..n {
                row[var_x(s, k, j)] = 1.0;
            }
            rows.push((row, 1.0));
        }
        for j in 0..n {
            let mut row = vec![0.0; n_vars];
            for k in 0..n {
                row[var_x(s, k, j)] = 1.0;
            }
            rows.push((row, 1.0));
        }
    }
    for b in 0..n_streams {
        for ai in 0..a {
            let mut row = vec![0.0; n_vars];
            for (s, slot) in prep.slots.iter().enumerate() {
                let Some((_, w)) = slot.per_stream.iter().find(|(sb, _)| *sb == b) else {
                    continue;
                };
                for k in 0..n {
                    let ek = prep.e[k];
                    if ek == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        row[var_x(s, k, j)] += ek * w[ai * n + j];
                    }
                }
            }
            row[var_z(b, ai)] = 1.0;
            row[var_z(b, ai) + 1] = -1.0;
            rows.push((row, prep.targets_active[ai]));
        }
    }

    let sol = maximize(&DenseLp {
        n_vars,
        objective,
        rows,
    })?;
    let mut policies = Vec::with_capacity(prep.n_slots);
    for s in 0..prep.n_slots {
        let entries: Vec<f64> = sol.x[s * n * n..(s + 1) * n * n]
            .iter()
            .map(|&v| v.max(0.0))
            .collect();
        policies.push(RankingPolicy::new(n, entries)?);
    }
    Ok(policies)
}

// ---------------------------------------------------------------------------
// Dual decomposition.

struct DualSolver<'p, 'a> {
    prep: &'p Prepared<'a>,
    pool: Vec<Vec<Permutation>>,
    pool_index: Vec<HashMap<Vec<usize>, usize>>,
    best_value: f64,
    best_lambda: Vec<f64>,
}

impl<'p, 'a> DualSolver<'p, 'a> {
    fn new(prep: &'p Prepared<'a>) -> Self {
        DualSolver {
            prep,
            pool: vec![Vec::new(); prep.n_slots],
            pool_index: vec![HashMap::new(); prep.n_slots],
            best_value: f64::INFINITY,
            best_lambda: vec![0.0; prep.box_ub.len()],
        }
    }

    /// Dual value and subgradient at `lambda`. Every per-slot maximizer is
    /// remembered for primal recovery.
    fn eval(&mut self, lambda: &[f64]) -> Result<(f64, Vec<f64>)> {
        let prep = self.prep;
        let n = prep.n;
        let a = prep.active.len();
        let mut value = 0.0;
        let mut credit = vec![0.0; lambda.len()];
        let mut boost = vec![0.0; n];
        for (s, slot) in prep.slots.iter().enumerate() {
            boost.iter_mut().for_each(|x| *x = 0.0);
            for (b, w) in &slot.per_stream {
                for ai in 0..a {
                    let lam = lambda[b * a + ai];
                    if lam == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        boost[j] += lam * w[ai * n + j];
                    }
                }
            }
            let mut score = ScoreMatrix::from_outer(prep.u, &slot.util)?;
            score.add_outer(prep.e, &boost)?;
            let sol = solve_assignment(&score)?;
            value += sol.value;
            for (b, w) in &slot.per_stream {
                for ai in 0..a {
                    let mut ci = 0.0;
                    for (k, &ek) in prep.e.iter().enumerate() {
                        if ek != 0.0 {
                            ci += ek * w[ai * n + sol.ranking.item_at(k)];
                        }
                    }
                    credit[b * a + ai] += ci;
                }
            }
            let key = sol.ranking.items().to_vec();
            if !self.pool_index[s].contains_key(&key) {
                self.pool_index[s].insert(key, self.pool[s].len());
                self.pool[s].push(sol.ranking);
            }
        }
        let mut subgrad = vec![0.0; lambda.len()];
        let n_streams = prep.stream_weights.len();
        for b in 0..n_streams {
            for ai in 0..a {
                let idx = b * a + ai;
                value -= lambda[idx] * prep.targets_active[ai];
                subgrad[idx] = credit[idx] - prep.targets_active[ai];
            }
        }
        if value < self.best_value {
            self.best_value = value;
            self.best_lambda = lambda.to_vec();
        }
        Ok((value, subgrad))
    }

    /// Minimizes the dual along coordinate `c`, holding the rest of `lambda`
    /// fixed. Returns the subgradient seen at the line minimum.
    fn bisect_coord(
        &mut self,
        lambda: &mut [f64],
        c: usize,
        iters: usize,
    ) -> Result<(f64, Vec<f64>)> {
        let mut lo = 0.0;
        let mut hi = self.prep.box_ub[c];
        lambda[c] = lo;
        let (v_lo, g_lo) = self.eval(lambda)?;
        if g_lo[c] >= 0.0 || hi <= 0.0 {
            return Ok((v_lo, g_lo));
        }
        lambda[c] = hi;
        let (v_hi, g_hi) = self.eval(lambda)?;
        if g_hi[c] <= 0.0 {
            return Ok((v_hi, g_hi));
        }
        let mut best = if v_lo <= v_hi {
            lambda[c] = lo;
            (v_lo, g_lo)
        } else {
            (v_hi, g_hi)
        };
        let mut best_pos = if v_lo <= v_hi { lo } else { hi };
        for _ in 0..iters {
            let mid = 0.5 * (lo + hi);
            lambda[c] = mid;
            let (v, g) = self.eval(lambda)?;
            if v < best.0 {
                best = (v, g.clone());
                best_pos = mid;
            }
            if g[c] > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lambda[c] = best_pos;
        Ok(best)
    }

    fn minimize(&mut self) -> Result<()> {
        let dim = self.prep.box_ub.len();
        match dim {
            1 => {
                let mut lambda = vec![0.0];
                self.bisect_coord(&mut lambda, 0, 60)?;
            }
            2 if self.prep.stream_weights.len() == 1 => {
                // Nested bisection: the partial minimum over the second
                // coordinate is convex in the first, and the subgradient at
                // the inner optimum drives the outer search.
                let mut lo = 0.0;
                let mut hi = self.prep.box_ub[0];
                let mut lambda = vec![0.0, 0.0];
                let (_, g) = self.bisect_coord(&mut lambda, 1, 48)?;
                if g[0] < 0.0 && hi > 0.0 {
                    lambda = vec![hi, 0.0];
                    let (_, g) = self.bisect_coord(&mut lambda, 1, 48)?;
                    if g[0] > 0.0 {
                        for _ in 0..48 {
                            let mid = 0.5 * (lo + hi);
                            lambda = vec![mid, 0.0];
                            let (_, g) = self.bisect_coord(&mut lambda, 1, 48)?;
                            if g[0] > 0.0 {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                    }
                }
            }
            _ => {
                self.subgradient(dim)?;
                // Coordinate polish from the best point found.
                for _ in 0..2 {
                    let mut lambda = self.best_lambda.clone();
                    for c in 0..dim {
                        self.bisect_coord(&mut lambda, c, 30)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn subgradient(&mut self, dim: usize) -> Result<()> {
        let radius = self
            .prep
            .box_ub
            .iter()
            .map(|b| b * b)
            .sum::<f64>()
            .sqrt()
            .max(1e-9);
        let mut lambda = vec![0.0; dim];
        let cap = 600 + 150 * dim;
        for k in 0..cap {
            let (_, g) = self.eval(&lambda)?;
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                break;
            }
            let step = radius / (2.0 * ((k + 1) as f64).sqrt());
            for (i, l) in lambda.iter_mut().enumerate() {
                *l = (*l - step * g[i] / norm).clamp(0.0, self.prep.box_ub[i]);
            }
        }
        Ok(())
    }

    /// Extra evaluations around the dual minimizer so the pool holds the
    /// vertices of every linear piece meeting there.
    fn probe(&mut self) -> Result<()> {
        let base = self.best_lambda.clone();
        self.eval(&vec![0.0; base.len()])?;
        for c in 0..base.len() {
            for scale in [1e-7, 1e-4, 1e-2] {
                let delta = scale * (1.0 + self.prep.box_ub[c]);
                for sign in [-1.0, 1.0] {
                    let mut lambda = base.clone();
                    lambda[c] = (lambda[c] + sign * delta).clamp(0.0, self.prep.box_ub[c]);
                    self.eval(&lambda)?;
                }
            }
        }
        Ok(())
    }

    /// Mixes pooled rankings per slot to maximize the true objective, then
    /// checks the duality gap.
    fn recover(&self) -> Result<Vec<RankingPolicy>> {
        let prep = self.prep;
        let n = prep.n;
        let a = prep.active.len();
        let n_streams = prep.stream_weights.len();
        let mut offset = Vec::with_capacity(prep.n_slots);
        let mut n_alpha = 0usize;
        for s in 0..prep.n_slots {
            offset.push(n_alpha);
            n_alpha += self.pool[s].len();
        }
        let n_vars = n_alpha + 2 * n_streams * a;
        let var_z = |b: usize, ai: usize| n_alpha + 2 * (b * a + ai);

        let mut objective = vec![0.0; n_vars];
        for (s, slot) in prep.slots.iter().enumerate() {
            for (v, ranking) in self.pool[s].iter().enumerate() {
                let mut util = 0.0;
                for (k, &uk) in prep.u.iter().enumerate() {
                    util += uk * slot.util[ranking.item_at(k)];
                }
                objective[offset[s] + v] = util;
            }
        }
        for b in 0..n_streams {
            for ai in 0..a {
                objective[var_z(b, ai)] = -prep.stream_weights[b] * prep.costs_active[ai];
            }
        }

        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for s in 0..prep.n_slots {
            let mut row = vec![0.0; n_vars];
            for v in 0..self.pool[s].len() {
                row[offset[s] + v] = 1.0;
            }
            rows.push((row, 1.0));
        }
        for b in 0..n_streams {
            for ai in 0..a {
                let mut row = vec![0.0; n_vars];
                for (s, slot) in prep.slots.iter().enumerate() {
                    let Some((_, w)) = slot.per_stream.iter().find(|(sb, _)| *sb == b) else {
                        continue;
                    };
                    for (v, ranking) in self.pool[s].iter().enumerate() {
                        let mut credit = 0.0;
                        for (k, &ek) in prep.e.iter().enumerate() {
                            if ek != 0.0 {
                                credit += ek * w[ai * n + ranking.item_at(k)];
                            }
                        }
                        row[offset[s] + v] += credit;
                    }
                }
                row[var_z(b, ai)] = 1.0;
                row[var_z(b, ai) + 1] = -1.0;
                rows.push((row, prep.targets_active[ai]));
            }
        }

        let sol = maximize(&DenseLp {
            n_vars,
            objective,
            rows,
        })?;

        let mut policies = Vec::with_capacity(prep.n_slots);
        for s in 0..prep.n_slots {
            let mut entries = vec![0.0; n * n];
            for (v, ranking) in self.pool[s].iter().enumerate() {
                let alpha = sol.x[offset[s] + v];
                if alpha <= 0.0 {
                    continue;
                }
                for k in 0..n {
                    entries[k * n + ranking.item_at(k)] += alpha;
                }
            }
            policies.push(RankingPolicy::new(n, entries)?);
        }

        let primal = scenario_value(prep.streams, prep.spec, &policies)?;
        let gap = self.best_value - primal;
        let tol = GAP_TOL * primal.abs().max(1.0);
        if gap > tol {
            return Err(Error::solver(format!(
                "duality gap {gap} exceeds tolerance {tol} (dual {}, primal {primal})",
                self.best_value
            )));
        }
        Ok(policies)
    }
}

fn solve_dual(prep: &Prepared<'_>) -> Result<Vec<RankingPolicy>> {
    let mut solver = DualSolver::new(prep);
    solver.minimize()?;
    solver.probe()?;
    solver.recover()
}
