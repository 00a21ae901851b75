//! Per-step ranking rules that bridge an episode-level budget contract to
//! individual requests.
//!
//! Every rule sees the current request (relevance scores plus the item-to-
//! budget association) and the progress accumulated so far, and must commit
//! to a ranking distribution before the next request arrives. They differ in
//! how much of the future they model:
//!
//! * [`unconstrained_select`] ignores the contract and sorts by relevance.
//! * [`myopic_select`] solves one step's hinge program against a pro-rated
//!   share of the target.
//! * [`p_control_select`] adds a proportional boost for the current tracking
//!   deficit and sorts.
//! * [`stationary_select`] prices budgets with a multiplier state updated by
//!   feedback toward the per-step target rate.
//! * [`predictive_select`] keeps one multiplier state per forecast scenario
//!   and nets each scenario's expected remaining credit out of the deficit.
//! * [`oracle_plan`] sees the whole episode up front and plans globally; it
//!   exists as an upper reference point.
//!
//! The [`Controller`] enum wraps all six behind one `select` call so the
//! episode runner and CLI can treat them uniformly, and snapshots its
//! multiplier state to JSON for post-run inspection.

mod optim;

pub use optim::{adam_update, ogd_update, MultiplierState};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::ProgressToGoTable;
use crate::objective::progress_of_ranking;
use crate::solver::{
    solve_assignment, solve_hinge_lp, solve_horizon_lp, HingeProgram, HorizonMethod,
    HorizonProblem, ScoreMatrix,
};
use crate::types::{Context, InterventionSpec, Permutation, RankingPolicy};

/// First-order rule used to move multiplier states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain gradient descent.
    Ogd,
    /// Moment-averaged descent with a single shared decay.
    Adam { beta: f64, epsilon: f64 },
}

impl Optimizer {
    /// Applies one update of this rule to `state`.
    pub fn update(&self, state: &mut MultiplierState, grad: &[f64], gain: f64) -> Result<()> {
        match *self {
            Optimizer::Ogd => ogd_update(state, grad, gain),
            Optimizer::Adam { beta, epsilon } => adam_update(state, grad, gain, beta, epsilon),
        }
    }
}

/// The six selection rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Unconstrained,
    Myopic,
    PControl,
    Stationary,
    Predictive,
    Oracle,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 6] = [
        ControllerKind::Unconstrained,
        ControllerKind::Myopic,
        ControllerKind::PControl,
        ControllerKind::Stationary,
        ControllerKind::Predictive,
        ControllerKind::Oracle,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::Unconstrained => "unconstrained",
            ControllerKind::Myopic => "myopic",
            ControllerKind::PControl => "p_control",
            ControllerKind::Stationary => "stationary",
            ControllerKind::Predictive => "predictive",
            ControllerKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .iter()
            .copied()
            .find(|k| k.label() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown controller '{s}' (expected one of: unconstrained, myopic, \
                     p_control, stationary, predictive, oracle)"
                ))
            })
    }
}

/// Declarative controller description, the unit of configuration and tuning.
/// `gain` is ignored by kinds without feedback; `optimizer` only matters for
/// the multiplier-carrying kinds; `forecasts` only for the predictive rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub gain: f64,
    pub optimizer: Optimizer,
    pub forecasts: usize,
}

impl ControllerConfig {
    pub fn new(kind: ControllerKind) -> Self {
        ControllerConfig {
            kind,
            gain: 1.0,
            optimizer: Optimizer::Ogd,
            forecasts: 20,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_optimizer(mut self, optimizer: Optimizer) -> Self {
        self.optimizer = optimizer;
        self
    }

    pub fn with_forecasts(mut self, forecasts: usize) -> Self {
        self.forecasts = forecasts;
        self
    }
}

fn check_gain(gain: f64) -> Result<f64> {
    if !gain.is_finite() || gain < 0.0 {
        return Err(Error::invalid(format!(
            "gain must be finite and non-negative, got {gain}"
        )));
    }
    Ok(gain)
}

/// Request-vs-contract shape checks shared by every rule.
fn check_request(ctx: &Context, spec: &InterventionSpec) -> Result<()> {
    let n = spec.weights().n_positions();
    if ctx.n_items() != n {
        return Err(Error::dim(format!(
            "request has {} items, contract covers {n}",
            ctx.n_items()
        )));
    }
    if ctx.assoc().n_budgets() != spec.n_budgets() {
        return Err(Error::dim(format!(
            "request associates {} budgets, contract has {}",
            ctx.assoc().n_budgets(),
            spec.n_budgets()
        )));
    }
    Ok(())
}

/// Shape checks for rules that also read the running progress total and the
/// 1-based step index.
fn check_step(ctx: &Context, progress: &[f64], t: usize, spec: &InterventionSpec) -> Result<()> {
    check_request(ctx, spec)?;
    if progress.len() != spec.n_budgets() {
        return Err(Error::dim(format!(
            "progress has {} coordinates, contract has {}",
            progress.len(),
            spec.n_budgets()
        )));
    }
    if t == 0 || t > spec.horizon() {
        return Err(Error::invalid(format!(
            "step {t} outside the horizon 1..={}",
            spec.horizon()
        )));
    }
    Ok(())
}

/// Sorts by relevance, highest first, lowest item index on ties.
pub fn unconstrained_select(ctx: &Context) -> Result<Permutation> {
    Permutation::from_scores_desc(ctx.relevance())
}

/// Solves this step's hinge program against the pro-rated targets
/// `(t / T) * tau - s`, pricing shortfall at the contract costs. The optimum
/// may be a genuine mixture of rankings.
pub fn myopic_select(
    ctx: &Context,
    progress: &[f64],
    t: usize,
    spec: &InterventionSpec,
) -> Result<RankingPolicy> {
    check_step(ctx, progress, t, spec)?;
    let frac = t as f64 / spec.horizon() as f64;
    let targets: Vec<f64> = spec
        .targets()
        .iter()
        .zip(progress)
        .map(|(&tau, &s)| frac * tau - s)
        .collect();
    let score = ScoreMatrix::from_outer(spec.weights().utility(), ctx.relevance())?;
    let program = HingeProgram {
        score: &score,
        assoc: ctx.assoc(),
        exposure: spec.weights().exposure(),
        hinge_targets: &targets,
        hinge_costs: spec.shortfall_costs(),
    };
    Ok(solve_hinge_lp(&program)?.policy)
}

/// Sorts by relevance plus a proportional boost for the clipped tracking
/// deficit: `r + gain * W^T clip((t-1)/T * tau - s, [0, phi])`.
pub fn p_control_select(
    ctx: &Context,
    progress: &[f64],
    t: usize,
    spec: &InterventionSpec,
    gain: f64,
) -> Result<Permutation> {
    check_step(ctx, progress, t, spec)?;
    check_gain(gain)?;
    let frac = (t - 1) as f64 / spec.horizon() as f64;
    let deficit: Vec<f64> = spec
        .targets()
        .iter()
        .zip(progress)
        .zip(spec.shortfall_costs())
        .map(|((&tau, &s), &phi)| (frac * tau - s).clamp(0.0, phi))
        .collect();
    let boost = ctx.assoc().transpose_apply(&deficit)?;
    let scores: Vec<f64> = ctx
        .relevance()
        .iter()
        .zip(&boost)
        .map(|(&r, &b)| r + gain * b)
        .collect();
    Permutation::from_scores_desc(&scores)
}

/// Assignment on `u x r + e x (W^T clip(lambda, [0, phi]))`, then one
/// feedback update of the price toward the stationary per-step rate:
/// the stored gradient is `credit(chosen) - tau / T`.
pub fn stationary_select(
    ctx: &Context,
    state: &mut MultiplierState,
    spec: &InterventionSpec,
    gain: f64,
    optimizer: Optimizer,
) -> Result<Permutation> {
    check_request(ctx, spec)?;
    check_gain(gain)?;
    if state.len() != spec.n_budgets() {
        return Err(Error::dim(format!(
            "multiplier state has {} coordinates, contract has {}",
            state.len(),
            spec.n_budgets()
        )));
    }
    let clipped = state.clipped(spec.shortfall_costs());
    let boost = ctx.assoc().transpose_apply(&clipped)?;
    let mut score = ScoreMatrix::from_outer(spec.weights().utility(), ctx.relevance())?;
    score.add_outer(spec.weights().exposure(), &boost)?;
    let ranking = solve_assignment(&score)?.ranking;

    let credit = progress_of_ranking(ctx, &ranking, spec.weights())?;
    let horizon = spec.horizon() as f64;
    let grad: Vec<f64> = credit
        .iter()
        .zip(spec.targets())
        .map(|(&c, &tau)| c - tau / horizon)
        .collect();
    optimizer.update(state, &grad, gain)?;
    Ok(ranking)
}

/// Assignment on `u x r + e x (W^T mean_b clip(lambda_b, [0, phi]))`, then
/// one feedback update per scenario with that scenario's remaining forecast
/// credit netted out: the stored gradient is
/// `-(tau - s - credit(chosen) - to_go_b(t))`.
#[allow(clippy::too_many_arguments)]
pub fn predictive_select(
    ctx: &Context,
    states: &mut [MultiplierState],
    progress: &[f64],
    t: usize,
    spec: &InterventionSpec,
    to_go: &ProgressToGoTable,
    gain: f64,
    optimizer: Optimizer,
) -> Result<Permutation> {
    check_step(ctx, progress, t, spec)?;
    check_gain(gain)?;
    let m = spec.n_budgets();
    if states.is_empty() {
        return Err(Error::invalid("predictive rule needs at least one scenario"));
    }
    if states.len() > to_go.n_scenarios() {
        return Err(Error::dim(format!(
            "{} multiplier states but only {} forecast scenarios",
            states.len(),
            to_go.n_scenarios()
        )));
    }
    if to_go.horizon() != spec.horizon() || to_go.n_budgets() != m {
        return Err(Error::dim(format!(
            "forecast table is {} steps x {} budgets, contract is {} x {}",
            to_go.horizon(),
            to_go.n_budgets(),
            spec.horizon(),
            m
        )));
    }
    for state in states.iter() {
        if state.len() != m {
            return Err(Error::dim(format!(
                "multiplier state has {} coordinates, contract has {m}",
                state.len()
            )));
        }
    }

    let scale = 1.0 / states.len() as f64;
    let mut mean_clipped = vec![0.0; m];
    for state in states.iter() {
        for (acc, v) in mean_clipped
            .iter_mut()
            .zip(state.clipped(spec.shortfall_costs()))
        {
            *acc += scale * v;
        }
    }
    let boost = ctx.assoc().transpose_apply(&mean_clipped)?;
    let mut score = ScoreMatrix::from_outer(spec.weights().utility(), ctx.relevance())?;
    score.add_outer(spec.weights().exposure(), &boost)?;
    let ranking = solve_assignment(&score)?.ranking;

    let credit = progress_of_ranking(ctx, &ranking, spec.weights())?;
    let mut grad = vec![0.0; m];
    for (b, state) in states.iter_mut().enumerate() {
        let remaining = to_go.get(b, t);
        for i in 0..m {
            grad[i] = progress[i] + credit[i] + remaining[i] - spec.targets()[i];
        }
        optimizer.update(state, &grad, gain)?;
    }
    Ok(ranking)
}

/// Plans the whole episode against the true request sequence: one ranking
/// distribution per step, jointly maximizing utility minus priced terminal
/// shortfall. `contexts.len()` must equal the contract horizon.
pub fn oracle_plan(contexts: &[Context], spec: &InterventionSpec) -> Result<Vec<RankingPolicy>> {
    if contexts.len() != spec.horizon() {
        return Err(Error::dim(format!(
            "{} requests but the contract horizon is {}",
            contexts.len(),
            spec.horizon()
        )));
    }
    let problem = HorizonProblem::per_step(contexts.to_vec())?;
    Ok(solve_horizon_lp(&problem, spec, HorizonMethod::Auto)?.policies)
}

/// What a controller committed to for one step: always a ranking
/// distribution, and the concrete ranking when the rule itself picked one
/// (every rule except the hinge and oracle plans, whose optima may be real
/// mixtures).
#[derive(Clone, Debug)]
pub struct Decision {
    pub policy: RankingPolicy,
    pub ranking: Option<Permutation>,
}

impl Decision {
    fn from_ranking(ranking: Permutation) -> Self {
        Decision {
            policy: RankingPolicy::from_permutation(&ranking),
            ranking: Some(ranking),
        }
    }

    fn from_policy(policy: RankingPolicy) -> Self {
        let ranking = policy.as_permutation();
        Decision { policy, ranking }
    }
}

/// Serializable view of a controller's adaptive state: the price vectors
/// with their optimizer moments and step counters. Stateless rules have no
/// multipliers; the stationary rule has one; the predictive rule has one per
/// scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerSnapshot {
    pub kind: ControllerKind,
    pub multipliers: Vec<MultiplierState>,
}

/// A selection rule plus whatever state it carries across steps.
#[derive(Clone, Debug)]
pub enum Controller {
    Unconstrained,
    Myopic,
    PControl {
        gain: f64,
    },
    Stationary {
        gain: f64,
        optimizer: Optimizer,
        state: MultiplierState,
    },
    Predictive {
        gain: f64,
        optimizer: Optimizer,
        states: Vec<MultiplierState>,
        to_go: ProgressToGoTable,
    },
    Oracle {
        policies: Vec<RankingPolicy>,
    },
}

impl Controller {
    pub fn unconstrained() -> Self {
        Controller::Unconstrained
    }

    pub fn myopic() -> Self {
        Controller::Myopic
    }

    pub fn p_control(gain: f64) -> Result<Self> {
        Ok(Controller::PControl {
            gain: check_gain(gain)?,
        })
    }

    pub fn stationary(gain: f64, optimizer: Optimizer, n_budgets: usize) -> Result<Self> {
        Ok(Controller::Stationary {
            gain: check_gain(gain)?,
            optimizer,
            state: MultiplierState::new(n_budgets),
        })
    }

    /// Keeps `scenarios` multiplier states and the matching prefix of the
    /// forecast table (`scenarios` may be at most the table's scenario
    /// count).
    pub fn predictive(
        gain: f64,
        optimizer: Optimizer,
        to_go: &ProgressToGoTable,
        scenarios: usize,
    ) -> Result<Self> {
        let to_go = to_go.first_scenarios(scenarios)?;
        Ok(Controller::Predictive {
            gain: check_gain(gain)?,
            optimizer,
            states: vec![MultiplierState::new(to_go.n_budgets()); scenarios],
            to_go,
        })
    }

    /// Plans against the given request sequence up front.
    pub fn oracle(contexts: &[Context], spec: &InterventionSpec) -> Result<Self> {
        Ok(Controller::Oracle {
            policies: oracle_plan(contexts, spec)?,
        })
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::Unconstrained => ControllerKind::Unconstrained,
            Controller::Myopic => ControllerKind::Myopic,
            Controller::PControl { .. } => ControllerKind::PControl,
            Controller::Stationary { .. } => ControllerKind::Stationary,
            Controller::Predictive { .. } => ControllerKind::Predictive,
            Controller::Oracle { .. } => ControllerKind::Oracle,
        }
    }

    /// Commits to this step's ranking distribution and advances any internal
    /// state. `progress` is the running total before the step, `t` 1-based.
    pub fn select(
        &mut self,
        ctx: &Context,
        progress: &[f64],
        t: usize,
        spec: &InterventionSpec,
    ) -> Result<Decision> {
        match self {
            Controller::Unconstrained => {
                check_step(ctx, progress, t, spec)?;
                Ok(Decision::from_ranking(unconstrained_select(ctx)?))
            }
            Controller::Myopic => Ok(Decision::from_policy(myopic_select(
                ctx, progress, t, spec,
            )?)),
            Controller::PControl { gain } => Ok(Decision::from_ranking(p_control_select(
                ctx, progress, t, spec, *gain,
            )?)),
            Controller::Stationary {
                gain,
                optimizer,
                state,
            } => Ok(Decision::from_ranking(stationary_select(
                ctx, state, spec, *gain, *optimizer,
            )?)),
            Controller::Predictive {
                gain,
                optimizer,
                states,
                to_go,
            } => Ok(Decision::from_ranking(predictive_select(
                ctx, states, progress, t, spec, to_go, *gain, *optimizer,
            )?)),
            Controller::Oracle { policies } => {
                check_step(ctx, progress, t, spec)?;
                if policies.len() != spec.horizon() {
                    return Err(Error::dim(format!(
                        "oracle planned {} steps, contract horizon is {}",
                        policies.len(),
                        spec.horizon()
                    )));
                }
                Ok(Decision::from_policy(policies[t - 1].clone()))
            }
        }
    }

    pub fn snapshot(&self) -> ControllerSnapshot {
        let multipliers = match self {
            Controller::Stationary { state, .. } => vec![state.clone()],
            Controller::Predictive { states, .. } => states.clone(),
            _ => Vec::new(),
        };
        ControllerSnapshot {
            kind: self.kind(),
            multipliers,
        }
    }
}
