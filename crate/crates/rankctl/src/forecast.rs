//! Offline forecasting and hyperparameter tuning.
//!
//! The forward-looking controller wants to know how much budget credit the
//! rest of the episode is likely to deliver on its own. That estimate comes
//! from resampled scenarios: bootstrap index sequences drawn from a dataset
//! (stratified when the dataset labels its rows), a single offline plan fit
//! across all scenarios at once with one ranking distribution per distinct
//! dataset row, and per-scenario suffix sums of the plan's credit, the
//! progress-to-go table.
//!
//! Gain tuning is a plain grid search: every candidate runs one full
//! closed-loop episode on the tuning stream and the best episode score wins,
//! with ties kept by the later grid entry.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerConfig, ControllerKind, Optimizer};
use crate::error::{Error, Result};
use crate::sim::{build_controller, run_episode, ContextStream, ProgressMode};
use crate::solver::{
    solve_horizon_lp, HorizonMethod, HorizonProblem, HorizonStep, HorizonStream,
};
use crate::types::{InterventionSpec, RankingPolicy};

/// Draws `scenarios` index sequences of the stream's length. With strata
/// present, step `t` resamples only rows sharing step `t`'s stratum, so each
/// scenario preserves the stream's seasonal layout; otherwise every step
/// draws from the whole stream. Sequences are deterministic in `seed` and
/// drawn in `(scenario, step)` order.
pub fn stratified_bootstrap(
    stream: &ContextStream,
    scenarios: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    stratified_bootstrap_onto(stream, stream, scenarios, seed)
}

/// Like [`stratified_bootstrap`], but the draw pool and the target timeline
/// are separate streams: sequences have `timeline.len()` steps and index into
/// `dataset` rows, with step `t` drawing from the dataset rows whose stratum
/// matches the timeline's stratum at `t`. This is how forecasts fitted on a
/// training slice apply to a later evaluation slice. A timeline without
/// stratum labels draws every step from the whole dataset; a labeled
/// timeline requires a labeled dataset covering every label it uses.
pub fn stratified_bootstrap_onto(
    dataset: &ContextStream,
    timeline: &ContextStream,
    scenarios: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if scenarios == 0 {
        return Err(Error::invalid("bootstrap needs at least one scenario"));
    }
    let n_rows = dataset.len();
    let t_len = timeline.len();
    if n_rows == 0 || t_len == 0 {
        return Err(Error::invalid("cannot bootstrap an empty stream"));
    }

    // Pool of candidate dataset rows per timeline step.
    let pools: Vec<Vec<usize>> = match timeline.strata() {
        None => {
            let all: Vec<usize> = (0..n_rows).collect();
            vec![all; t_len]
        }
        Some(labels) => {
            let row_labels = dataset.strata().ok_or_else(|| {
                Error::invalid(
                    "timeline has stratum labels but the dataset has none to match",
                )
            })?;
            labels
                .iter()
                .enumerate()
                .map(|(t, label)| {
                    let pool: Vec<usize> = (0..n_rows)
                        .filter(|&r| row_labels[r] == *label)
                        .collect();
                    if pool.is_empty() {
                        Err(Error::invalid(format!(
                            "no dataset rows carry stratum {label:?} needed at step {}",
                            t + 1
                        )))
                    } else {
                        Ok(pool)
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Vec::with_capacity(scenarios);
    for _ in 0..scenarios {
        let mut seq = Vec::with_capacity(t_len);
        for pool in &pools {
            seq.push(pool[rng.gen_range(0..pool.len())]);
        }
        sequences.push(seq);
    }
    Ok(sequences)
}

/// Index sequences that replay the stream itself, used when forecasts should
/// be exact rather than resampled.
pub fn exact_sequences(stream: &ContextStream, scenarios: usize) -> Result<Vec<Vec<usize>>> {
    if scenarios == 0 {
        return Err(Error::invalid("need at least one scenario"));
    }
    let seq: Vec<usize> = (0..stream.len()).collect();
    Ok(vec![seq; scenarios])
}

/// An offline plan fitted jointly over bootstrap scenarios: one ranking
/// distribution per distinct dataset row, shared by every scenario step that
/// resampled that row.
#[derive(Clone, Debug)]
pub struct ForecastPlan {
    sequences: Vec<Vec<usize>>,
    /// Distinct dataset rows in ascending order; `policies[i]` serves
    /// `slot_rows[i]`.
    slot_rows: Vec<usize>,
    policies: Vec<RankingPolicy>,
    objective: f64,
}

impl ForecastPlan {
    pub fn sequences(&self) -> &[Vec<usize>] {
        &self.sequences
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn policy_for_row(&self, row: usize) -> Option<&RankingPolicy> {
        self.slot_rows
            .binary_search(&row)
            .ok()
            .map(|i| &self.policies[i])
    }
}

/// Fits the offline plan: maximizes the average scenario score (utility
/// minus priced shortfall) with slot distributions tied by dataset row.
/// Every sequence must have exactly `spec.horizon()` steps.
pub fn fit_offline_policy(
    stream: &ContextStream,
    sequences: &[Vec<usize>],
    spec: &InterventionSpec,
) -> Result<ForecastPlan> {
    if sequences.is_empty() {
        return Err(Error::invalid("offline fit needs at least one scenario"));
    }
    for (b, seq) in sequences.iter().enumerate() {
        if seq.len() != spec.horizon() {
            return Err(Error::dim(format!(
                "scenario {b} has {} steps, contract horizon is {}",
                seq.len(),
                spec.horizon()
            )));
        }
        if let Some(&bad) = seq.iter().find(|&&r| r >= stream.len()) {
            return Err(Error::invalid(format!(
                "scenario {b} resamples row {bad}, stream has {} rows",
                stream.len()
            )));
        }
    }

    let used: BTreeSet<usize> = sequences.iter().flatten().copied().collect();
    let slot_rows: Vec<usize> = used.into_iter().collect();
    let slot_of_row = |row: usize| slot_rows.binary_search(&row).expect("row is used");

    let weight = 1.0 / sequences.len() as f64;
    let streams: Vec<HorizonStream> = sequences
        .iter()
        .map(|seq| HorizonStream {
            weight,
            steps: seq
                .iter()
                .map(|&row| HorizonStep {
                    weight: 1.0,
                    slot: slot_of_row(row),
                    context: stream.get(row).clone(),
                })
                .collect(),
        })
        .collect();
    let problem = HorizonProblem {
        n_slots: slot_rows.len(),
        streams,
    };
    let solution = solve_horizon_lp(&problem, spec, HorizonMethod::Auto)?;
    Ok(ForecastPlan {
        sequences: sequences.to_vec(),
        slot_rows,
        policies: solution.policies,
        objective: solution.objective,
    })
}

/// Per-scenario suffix credit of an offline plan: entry `(b, t)` is the
/// credit scenario `b` expects strictly after step `t`, so the final step
/// holds zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressToGoTable {
    scenarios: usize,
    horizon: usize,
    n_budgets: usize,
    /// Row-major `(scenario, step, budget)`.
    data: Vec<f64>,
}

impl ProgressToGoTable {
    /// Assembles a table from row-major `(scenario, step, budget)` data.
    pub(crate) fn from_parts(
        scenarios: usize,
        horizon: usize,
        n_budgets: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != scenarios * horizon * n_budgets {
            return Err(Error::dim(format!(
                "{} values cannot fill a {scenarios} x {horizon} x {n_budgets} table",
                data.len()
            )));
        }
        Ok(ProgressToGoTable {
            scenarios,
            horizon,
            n_budgets,
            data,
        })
    }

    pub fn n_scenarios(&self) -> usize {
        self.scenarios
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_budgets(&self) -> usize {
        self.n_budgets
    }

    /// Remaining credit for scenario `b` strictly after step `t` (1-based).
    pub fn get(&self, scenario: usize, t: usize) -> &[f64] {
        let base = (scenario * self.horizon + (t - 1)) * self.n_budgets;
        &self.data[base..base + self.n_budgets]
    }

    /// The first `scenarios` rows as their own table.
    pub fn first_scenarios(&self, scenarios: usize) -> Result<Self> {
        if scenarios == 0 || scenarios > self.scenarios {
            return Err(Error::invalid(format!(
                "requested {scenarios} scenarios, table has {}",
                self.scenarios
            )));
        }
        Ok(ProgressToGoTable {
            scenarios,
            horizon: self.horizon,
            n_budgets: self.n_budgets,
            data: self.data[..scenarios * self.horizon * self.n_budgets].to_vec(),
        })
    }

    /// Writes `b,t,constraint_index,value` rows, all ids 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "b,t,constraint_index,value")?;
        for b in 0..self.scenarios {
            for t in 1..=self.horizon {
                let row = self.get(b, t);
                for (i, v) in row.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", b + 1, t, i + 1, v)?;
                }
            }
        }
        Ok(())
    }

    /// Reads a table written by [`Self::write_csv`].
    pub fn read_csv<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
        let mut lines = r.lines().enumerate();
        let header = lines
            .next()
            .ok_or_else(|| Error::Csv {
                path: path.to_string(),
                line: 1,
                msg: "empty file".to_string(),
            })?
            .1?;
        if header.trim() != "b,t,constraint_index,value" {
            return Err(Error::Csv {
                path: path.to_string(),
                line: 1,
                msg: format!("unexpected header '{}'", header.trim()),
            });
        }
        for (idx, line) in lines {
            let line = line?;
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Csv {
                    path: path.to_string(),
                    line: line_no,
                    msg: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let parse_usize = |s: &str, what: &str| {
                s.trim().parse::<usize>().map_err(|_| Error::Csv {
                    path: path.to_string(),
                    line: line_no,
                    msg: format!("bad {what} '{s}'"),
                })
            };
            let b = parse_usize(fields[0], "scenario id")?;
            let t = parse_usize(fields[1], "step")?;
            let c = parse_usize(fields[2], "constraint index")?;
            let v: f64 = fields[3].trim().parse().map_err(|_| Error::Csv {
                path: path.to_string(),
                line: line_no,
                msg: format!("bad value '{}'", fields[3]),
            })?;
            if b == 0 || t == 0 || c == 0 {
                return Err(Error::Csv {
                    path: path.to_string(),
                    line: line_no,
                    msg: "ids are 1-based".to_string(),
                });
            }
            rows.push((b - 1, t - 1, c - 1, v));
        }
        let scenarios = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let horizon = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let n_budgets = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
        let expected = scenarios * horizon * n_budgets;
        if expected == 0 || rows.len() != expected {
            return Err(Error::Csv {
                path: path.to_string(),
                line: 1,
                msg: format!(
                    "expected {expected} value rows for a {scenarios} x {horizon} x {n_budgets} table, got {}",
                    rows.len()
                ),
            });
        }
        let mut data = vec![f64::NAN; expected];
        for (b, t, c, v) in rows {
            data[(b * horizon + t) * n_budgets + c] = v;
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::Csv {
                path: path.to_string(),
                line: 1,
                msg: "table has missing cells".to_string(),
            });
        }
        ProgressToGoTable::from_parts(scenarios, horizon, n_budgets, data)
    }
}

/// Builds the progress-to-go table of `plan` against the stream it was
/// fitted on.
pub fn progress_to_go(
    plan: &ForecastPlan,
    stream: &ContextStream,
    spec: &InterventionSpec,
) -> Result<ProgressToGoTable> {
    let horizon = spec.horizon();
    let m = spec.n_budgets();
    let scenarios = plan.sequences.len();
    let mut data = vec![0.0; scenarios * horizon * m];
    for (b, seq) in plan.sequences.iter().enumerate() {
        // Suffix sums, back to front; the last step stays zero.
        let mut acc = vec![0.0; m];
        for t in (1..=horizon).rev() {
            let base = (b * horizon + (t - 1)) * m;
            data[base..base + m].copy_from_slice(&acc);
            let row = seq[t - 1];
            let policy = plan
                .policy_for_row(row)
                .ok_or_else(|| Error::invalid(format!("plan has no policy for row {row}")))?;
            let ctx = stream.get(row);
            let c = crate::objective::progress(ctx, policy, spec.weights())?;
            for (a, ci) in acc.iter_mut().zip(&c) {
                *a += ci;
            }
        }
    }
    Ok(ProgressToGoTable {
        scenarios,
        horizon,
        n_budgets: m,
        data,
    })
}

/// Hyperparameter grid. The optimizer axes apply only when the tuned
/// controller uses the adaptive optimizer, and the forecast axis only to
/// the forward-looking kind; an empty forecast axis keeps the template's
/// scenario count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub gains: Vec<f64>,
    pub betas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub forecasts: Vec<usize>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        TuneGrid {
            gains: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
            betas: vec![0.5, 0.9, 0.98],
            epsilons: vec![1e-5, 1e-8],
            forecasts: vec![20, 50],
        }
    }
}

#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub best: ControllerConfig,
    pub best_objective: f64,
    /// Every candidate with its episode score, in grid order.
    pub evaluated: Vec<(ControllerConfig, f64)>,
}

/// Grid-searches gain (and Adam parameters where applicable) by running one
/// full closed-loop episode per candidate on `stream` and scoring it by the
/// episode objective. Candidates are enumerated gain-major; on ties the
/// later candidate wins. Controllers without tunable parameters evaluate
/// once and win trivially.
pub fn tune_gain(
    stream: &ContextStream,
    spec: &InterventionSpec,
    template: &ControllerConfig,
    grid: &TuneGrid,
    to_go: Option<&ProgressToGoTable>,
    mode: ProgressMode,
    seed: u64,
) -> Result<TuneOutcome> {
    let candidates: Vec<ControllerConfig> = match template.kind {
        ControllerKind::Unconstrained | ControllerKind::Myopic | ControllerKind::Oracle => {
            vec![template.clone()]
        }
        _ => {
            if grid.gains.is_empty() {
                return Err(Error::invalid("tuning grid has no gains"));
            }
            let forecast_axis: Vec<usize> =
                if template.kind == ControllerKind::Predictive && !grid.forecasts.is_empty() {
                    grid.forecasts.clone()
                } else {
                    vec![template.forecasts]
                };
            let mut out = Vec::new();
            for &gain in &grid.gains {
                for &forecasts in &forecast_axis {
                    match template.optimizer {
                        Optimizer::Ogd => {
                            let mut c = template.clone();
                            c.gain = gain;
                            c.forecasts = forecasts;
                            out.push(c);
                        }
                        Optimizer::Adam { .. } => {
                            if grid.betas.is_empty() || grid.epsilons.is_empty() {
                                return Err(Error::invalid(
                                    "tuning grid needs betas and epsilons for the adaptive optimizer",
                                ));
                            }
                            for &beta in &grid.betas {
                                for &epsilon in &grid.epsilons {
                                    let mut c = template.clone();
                                    c.gain = gain;
                                    c.forecasts = forecasts;
                                    c.optimizer = Optimizer::Adam { beta, epsilon };
                                    out.push(c);
                                }
                            }
                        }
                    }
                }
            }
            out
        }
    };

    let evaluated: Vec<(ControllerConfig, f64)> = candidates
        .into_par_iter()
        .map(|cfg| -> Result<(ControllerConfig, f64)> {
            let controller = build_controller(&cfg, spec, stream, to_go)?;
            let result = run_episode(controller, stream, spec, mode, seed)?;
            Ok((cfg, result.objective))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best_idx = 0usize;
    for (i, (_, obj)) in evaluated.iter().enumerate() {
        if *obj >= evaluated[best_idx].1 {
            best_idx = i;
        }
    }
    Ok(TuneOutcome {
        best: evaluated[best_idx].0.clone(),
        best_objective: evaluated[best_idx].1,
        evaluated,
    })
}
