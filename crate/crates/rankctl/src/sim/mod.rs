//! Closed-loop episode simulation.
//!
//! A [`ContextStream`] is the request sequence an episode consumes.
//! [`run_episode`] walks it step by step: the controller commits to a
//! ranking distribution, the step is scored, progress accumulates, and the
//! terminal shortfall is priced. Accounting runs in one of two modes:
//!
//! * [`ProgressMode::Expected`] credits each step with the distribution's
//!   expected utility and progress — deterministic, the mode used for
//!   tuning and comparisons.
//! * [`ProgressMode::Realized`] draws a concrete ranking per step (via the
//!   doubly-stochastic decomposition when the controller returned a genuine
//!   mixture) and credits what that ranking actually earned, reproducibly
//!   in the seed.
//!
//! The module also hosts the deterministic synthetic generator, CSV
//! ingestion/reporting, baseline-derived targets, and the shortfall-price
//! sweep used to trace the utility/violation trade-off.

pub mod csvio;
pub mod synthetic;

pub use synthetic::{generate_synthetic, SyntheticSpec};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvn;
use crate::controllers::{Controller, ControllerConfig, ControllerKind, ControllerSnapshot};
use crate::error::{Error, Result};
use crate::forecast::{
    exact_sequences, fit_offline_policy, progress_to_go, stratified_bootstrap, tune_gain,
    ProgressToGoTable, TuneGrid,
};
use crate::objective::{
    episode_objective, progress, progress_of_ranking, shortfall_cost, utility, utility_of_ranking,
};
use crate::types::{Context, InterventionSpec, Permutation, ProgressState};

/// A finite request sequence with uniform dimensions, optionally labeled
/// with one stratum per step (labels drive stratified resampling).
#[derive(Clone, Debug)]
pub struct ContextStream {
    contexts: Vec<Context>,
    strata: Option<Vec<String>>,
}

impl ContextStream {
    pub fn new(contexts: Vec<Context>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::invalid("a request stream cannot be empty"));
        }
        let n = contexts[0].n_items();
        let m = contexts[0].assoc().n_budgets();
        for (i, ctx) in contexts.iter().enumerate() {
            if ctx.n_items() != n || ctx.assoc().n_budgets() != m {
                return Err(Error::dim(format!(
                    "request {i} is {} items x {} budgets, stream started as {n} x {m}",
                    ctx.n_items(),
                    ctx.assoc().n_budgets()
                )));
            }
        }
        Ok(ContextStream {
            contexts,
            strata: None,
        })
    }

    pub fn with_strata(contexts: Vec<Context>, strata: Vec<String>) -> Result<Self> {
        if strata.len() != contexts.len() {
            return Err(Error::dim(format!(
                "{} strata labels for {} requests",
                strata.len(),
                contexts.len()
            )));
        }
        let mut stream = ContextStream::new(contexts)?;
        stream.strata = Some(strata);
        Ok(stream)
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn n_items(&self) -> usize {
        self.contexts[0].n_items()
    }

    pub fn n_budgets(&self) -> usize {
        self.contexts[0].assoc().n_budgets()
    }

    pub fn get(&self, idx: usize) -> &Context {
        &self.contexts[idx]
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn strata(&self) -> Option<&[String]> {
        self.strata.as_deref()
    }

    /// A contiguous sub-stream (request metadata kept as is).
    pub fn slice(&self, start: usize, len: usize) -> Result<ContextStream> {
        if len == 0 || start + len > self.contexts.len() {
            return Err(Error::invalid(format!(
                "slice {start}..{} outside a stream of {} requests",
                start + len,
                self.contexts.len()
            )));
        }
        Ok(ContextStream {
            contexts: self.contexts[start..start + len].to_vec(),
            strata: self
                .strata
                .as_ref()
                .map(|s| s[start..start + len].to_vec()),
        })
    }
}

/// How episode accounting treats a step's ranking distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgressMode {
    /// Credit the expectation under the distribution.
    Expected,
    /// Sample one ranking per step and credit what it earned.
    Realized,
}

impl fmt::Display for ProgressMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProgressMode::Expected => "expected",
            ProgressMode::Realized => "realized",
        })
    }
}

impl FromStr for ProgressMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expected" => Ok(ProgressMode::Expected),
            "realized" => Ok(ProgressMode::Realized),
            other => Err(Error::invalid(format!(
                "unknown progress mode '{other}' (expected 'expected' or 'realized')"
            ))),
        }
    }
}

/// Everything one closed-loop episode produced. `terminal` equals the
/// coordinate-wise sum of `step_progress`, and `objective` equals total
/// utility minus the priced shortfall at `terminal`, by construction.
#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub utilities: Vec<f64>,
    pub step_progress: Vec<Vec<f64>>,
    /// The concrete ranking per step: always present in realized mode; in
    /// expected mode only when the controller itself committed to one.
    pub rankings: Vec<Option<Permutation>>,
    pub terminal: Vec<f64>,
    /// Unpriced missing progress `sum_i (tau_i - s_i)+`.
    pub violation: f64,
    /// Priced missing progress `sum_i phi_i (tau_i - s_i)+`.
    pub violation_cost: f64,
    pub objective: f64,
    /// Controller state after each step (empty multipliers for stateless
    /// rules).
    pub state_trace: Vec<ControllerSnapshot>,
}

impl EpisodeResult {
    pub fn total_utility(&self) -> f64 {
        self.utilities.iter().sum()
    }

    /// Controller state at episode end.
    pub fn final_state(&self) -> &ControllerSnapshot {
        self.state_trace.last().expect("episodes have at least one step")
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Decorrelates per-step (or per-cell) randomness from one run seed.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    splitmix64(seed ^ splitmix64(salt))
}

/// Tags a failure with the episode step it happened at.
fn at_step(err: Error, t: usize) -> Error {
    match err {
        Error::Dimension(m) => Error::Dimension(format!("step {t}: {m}")),
        Error::Invalid(m) => Error::Invalid(format!("step {t}: {m}")),
        Error::Solver(m) => Error::Solver(format!("step {t}: {m}")),
        other => other,
    }
}

/// Runs one closed-loop episode of `stream` under `spec`. The stream length
/// must equal the contract horizon. `seed` only matters in realized mode,
/// where step `t` samples with the decorrelated seed `mix_seed(seed, t)`.
pub fn run_episode(
    mut controller: Controller,
    stream: &ContextStream,
    spec: &InterventionSpec,
    mode: ProgressMode,
    seed: u64,
) -> Result<EpisodeResult> {
    if stream.len() != spec.horizon() {
        return Err(Error::dim(format!(
            "stream has {} requests, contract horizon is {}",
            stream.len(),
            spec.horizon()
        )));
    }
    let horizon = spec.horizon();
    let weights = spec.weights();
    let mut state = ProgressState::new(spec.n_budgets());
    let mut utilities = Vec::with_capacity(horizon);
    let mut step_progress = Vec::with_capacity(horizon);
    let mut rankings = Vec::with_capacity(horizon);
    let mut state_trace = Vec::with_capacity(horizon);

    for t in 1..=horizon {
        let ctx = stream.get(t - 1);
        let decision = controller
            .select(ctx, state.totals(), t, spec)
            .map_err(|e| at_step(e, t))?;
        let (u, c, action) = match mode {
            ProgressMode::Expected => (
                utility(ctx, &decision.policy, weights)?,
                progress(ctx, &decision.policy, weights)?,
                decision.ranking,
            ),
            ProgressMode::Realized => {
                let ranking = match decision.ranking {
                    Some(r) => r,
                    None => bvn::decompose(&decision.policy, bvn::DEFAULT_EPS)
                        .map_err(|e| at_step(e, t))?
                        .sample(mix_seed(seed, t as u64))
                        .clone(),
                };
                (
                    utility_of_ranking(ctx, &ranking, weights)?,
                    progress_of_ranking(ctx, &ranking, weights)?,
                    Some(ranking),
                )
            }
        };
        state.observe(&c)?;
        utilities.push(u);
        step_progress.push(c);
        rankings.push(action);
        state_trace.push(controller.snapshot());
    }

    let terminal = state.totals().to_vec();
    let violation = spec
        .targets()
        .iter()
        .zip(&terminal)
        .map(|(&tau, &s)| (tau - s).max(0.0))
        .sum();
    let cost = shortfall_cost(spec, &terminal)?;
    let objective = episode_objective(&utilities, spec, &terminal)?;
    Ok(EpisodeResult {
        utilities,
        step_progress,
        rankings,
        terminal,
        violation,
        violation_cost: cost,
        objective,
        state_trace,
    })
}

/// Instantiates a controller for `spec` and `stream`. The predictive kind
/// requires a forecast table with at least `config.forecasts` scenarios;
/// the oracle plans against the stream itself.
pub fn build_controller(
    config: &ControllerConfig,
    spec: &InterventionSpec,
    stream: &ContextStream,
    to_go: Option<&ProgressToGoTable>,
) -> Result<Controller> {
    match config.kind {
        ControllerKind::Unconstrained => Ok(Controller::unconstrained()),
        ControllerKind::Myopic => Ok(Controller::myopic()),
        ControllerKind::PControl => Controller::p_control(config.gain),
        ControllerKind::Stationary => {
            Controller::stationary(config.gain, config.optimizer, spec.n_budgets())
        }
        ControllerKind::Predictive => {
            let table = to_go.ok_or_else(|| {
                Error::invalid("the predictive controller needs a progress-to-go table")
            })?;
            Controller::predictive(config.gain, config.optimizer, table, config.forecasts)
        }
        ControllerKind::Oracle => Controller::oracle(stream.contexts(), spec),
    }
}

/// Scales an unconstrained run's terminal progress into targets:
/// `tau_i = factors_i * baseline_i`. Returns the targets and the baseline
/// they were scaled from.
pub fn target_from_baseline(
    stream: &ContextStream,
    spec: &InterventionSpec,
    factors: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if factors.len() != spec.n_budgets() {
        return Err(Error::dim(format!(
            "{} factors for {} budgets",
            factors.len(),
            spec.n_budgets()
        )));
    }
    if factors.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::invalid("factors must be finite and non-negative"));
    }
    let result = run_episode(
        Controller::unconstrained(),
        stream,
        spec,
        ProgressMode::Expected,
        0,
    )?;
    let baseline = result.terminal;
    let targets: Vec<f64> = factors.iter().zip(&baseline).map(|(f, b)| f * b).collect();
    Ok((targets, baseline))
}

/// One sweep cell: a controller evaluated at one shortfall price.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub controller: String,
    pub phi: f64,
    pub objective: f64,
    pub utility: f64,
    pub violation: f64,
    pub terminal: Vec<f64>,
}

/// Opt-in per-cell hyperparameter tuning: every tunable `(controller, phi)`
/// cell grid-searches on `stream` (typically the dev split) before the
/// evaluation episode runs. The tuning contract reuses the sweep's targets
/// and the cell price, re-scoped to the tuning stream's length.
#[derive(Clone, Copy, Debug)]
pub struct SweepTuning<'a> {
    pub grid: &'a TuneGrid,
    pub stream: &'a ContextStream,
}

/// Sweep accounting knobs.
#[derive(Clone, Debug, Default)]
pub struct SweepOptions<'a> {
    pub mode: ProgressMode,
    pub seed: u64,
    /// Forecast scenarios replay the evaluation stream itself instead of
    /// bootstrap resamples (an exact-forecast study).
    pub exact_forecasts: bool,
    /// Extra scenarios for fitting the offline plan beyond what the
    /// controller consumes (0 = fit exactly as many as configured).
    pub fit_scenarios: usize,
    /// Re-tune gain-bearing controllers per cell when set.
    pub tuning: Option<SweepTuning<'a>>,
}

impl Default for ProgressMode {
    fn default() -> Self {
        ProgressMode::Expected
    }
}

fn fit_table(
    stream: &ContextStream,
    spec: &InterventionSpec,
    scenarios: usize,
    exact: bool,
    seed: u64,
) -> Result<ProgressToGoTable> {
    let sequences = if exact {
        exact_sequences(stream, scenarios)?
    } else {
        stratified_bootstrap(stream, scenarios, seed)?
    };
    let plan = fit_offline_policy(stream, &sequences, spec)?;
    progress_to_go(&plan, stream, spec)
}

/// Evaluates every `(controller, phi)` cell: the contract's shortfall costs
/// are replaced by the uniform price `phi`, predictive cells refit their
/// forecast plan under that price, and one episode runs per cell. Rows come
/// back config-major then price-major. Cells evaluate in parallel and the
/// output is deterministic for a fixed seed.
pub fn sweep_phi(
    stream: &ContextStream,
    spec: &InterventionSpec,
    configs: &[ControllerConfig],
    phi_grid: &[f64],
    opts: &SweepOptions<'_>,
) -> Result<Vec<SweepRow>> {
    if configs.is_empty() || phi_grid.is_empty() {
        return Err(Error::invalid("sweep needs at least one controller and one price"));
    }
    if phi_grid.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid("prices must be finite and non-negative"));
    }

    let cells: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..phi_grid.len()).map(move |p| (c, p)))
        .collect();

    cells
        .into_par_iter()
        .map(|(ci, pi)| -> Result<SweepRow> {
            let config = &configs[ci];
            let phi = phi_grid[pi];
            let cell_spec = spec.with_shortfall_costs(vec![phi; spec.n_budgets()])?;

            let tunable = !matches!(
                config.kind,
                ControllerKind::Unconstrained | ControllerKind::Myopic | ControllerKind::Oracle
            );
            let tuned = match (&opts.tuning, tunable) {
                (Some(tuning), true) => {
                    let tune_spec = cell_spec.with_horizon(tuning.stream.len())?;
                    let table = if config.kind == ControllerKind::Predictive {
                        let most = tuning
                            .grid
                            .forecasts
                            .iter()
                            .copied()
                            .max()
                            .unwrap_or(config.forecasts)
                            .max(config.forecasts)
                            .max(opts.fit_scenarios);
                        Some(fit_table(
                            tuning.stream,
                            &tune_spec,
                            most,
                            opts.exact_forecasts,
                            opts.seed,
                        )?)
                    } else {
                        None
                    };
                    tune_gain(
                        tuning.stream,
                        &tune_spec,
                        config,
                        tuning.grid,
                        table.as_ref(),
                        opts.mode,
                        opts.seed,
                    )?
                    .best
                }
                _ => config.clone(),
            };

            let table = if tuned.kind == ControllerKind::Predictive {
                let scenarios = opts.fit_scenarios.max(tuned.forecasts);
                Some(fit_table(
                    stream,
                    &cell_spec,
                    scenarios,
                    opts.exact_forecasts,
                    opts.seed,
                )?)
            } else {
                None
            };
            let controller = build_controller(&tuned, &cell_spec, stream, table.as_ref())?;
            let cell_seed = mix_seed(opts.seed, (ci * phi_grid.len() + pi) as u64);
            let result = run_episode(controller, stream, &cell_spec, opts.mode, cell_seed)?;
            Ok(SweepRow {
                controller: config.kind.label().to_string(),
                phi,
                objective: result.objective,
                utility: result.total_utility(),
                violation: result.violation,
                terminal: result.terminal,
            })
        })
        .collect()
}
