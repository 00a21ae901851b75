//! The five subcommands. Each loads what it needs, runs, writes tidy CSVs
//! into the output directory, and drops a `manifest_<command>.json` carrying
//! the config hash, effective seed, and crate version so a run can be
//! replayed exactly.

use std::fs;

use anyhow::{Context as _, Result};
use serde::Serialize;
use serde_json::json;

use rankctl::controllers::{ControllerConfig, ControllerKind};
use rankctl::forecast::{
    exact_sequences, fit_offline_policy, progress_to_go, stratified_bootstrap_onto,
    tune_gain, ProgressToGoTable,
};
use rankctl::sim::csvio::{save_results, save_stream, save_trace};
use rankctl::sim::synthetic::generate_synthetic;
use rankctl::sim::{
    build_controller, run_episode, sweep_phi, target_from_baseline, ContextStream,
    SweepOptions, SweepRow, SweepTuning,
};
use rankctl::types::{InterventionSpec, PositionWeights};

use crate::config::{
    apply_strata, split_stream, ConfigError, DatasetSource, Experiment, Split, Splits,
    TargetSpec,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: &'a str,
    seed: u64,
    progress_mode: String,
    workers: usize,
    outputs: Vec<String>,
    details: serde_json::Value,
}

fn write_manifest(
    exp: &Experiment,
    command: &str,
    outputs: &[String],
    details: serde_json::Value,
) -> Result<()> {
    let manifest = Manifest {
        command,
        version: VERSION,
        config_sha256: &exp.config_sha256,
        seed: exp.seed,
        progress_mode: exp.mode.to_string(),
        workers: exp.workers,
        outputs: outputs.to_vec(),
        details,
    };
    let path = exp.out_dir.join(format!("manifest_{command}.json"));
    let body = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_dataset(exp: &Experiment) -> Result<ContextStream> {
    match &exp.dataset {
        DatasetSource::Synthetic(spec) => Ok(generate_synthetic(spec, exp.seed)?),
        DatasetSource::Csv { contexts, groups } => {
            Ok(rankctl::sim::csvio::load_stream(contexts, groups)?)
        }
    }
}

/// Builds the episode contract for `stream`: targets resolved on this very
/// stream (explicit values as given; factors scaled by an unconstrained
/// run's terminal progress here), uniform shortfall price, horizon equal to
/// the stream length. Returns the baseline when factors were used.
fn resolve_spec(
    exp: &Experiment,
    stream: &ContextStream,
) -> Result<(InterventionSpec, Option<Vec<f64>>)> {
    let m = stream.n_budgets();
    let weights = PositionWeights::dcg_rr(stream.n_items(), exp.cutoff);
    let base = InterventionSpec::new(
        vec![0.0; m],
        vec![exp.shortfall_cost; m],
        stream.len(),
        weights,
    )?;
    match &exp.targets {
        None => Err(ConfigError(
            "this command needs spec.targets or spec.baseline_factors".to_string(),
        )
        .into()),
        Some(TargetSpec::Explicit(t)) => {
            if t.len() != m {
                return Err(ConfigError(format!(
                    "spec.targets has {} entries but the dataset defines {m} budgets",
                    t.len()
                ))
                .into());
            }
            Ok((base.with_targets(t.clone())?, None))
        }
        Some(TargetSpec::Factors(f)) => {
            if f.len() != m {
                return Err(ConfigError(format!(
                    "spec.baseline_factors has {} entries but the dataset defines {m} budgets",
                    f.len()
                ))
                .into());
            }
            let (targets, baseline) = target_from_baseline(stream, &base, f)?;
            Ok((base.with_targets(targets)?, Some(baseline)))
        }
    }
}

/// Fits a progress-to-go table whose steps follow `timeline` under `spec`
/// (the spec's horizon must equal the timeline length). Exact forecasts
/// replay the timeline itself; bootstrap forecasts resample rows from the
/// train split, stratum-matched to the timeline.
fn fit_forecast_table(
    exp: &Experiment,
    splits: &Splits,
    timeline: &ContextStream,
    spec: &InterventionSpec,
    scenarios: usize,
) -> Result<ProgressToGoTable> {
    let full_horizon = splits.full.len();
    let (pool, sequences) = if exp.forecast.exact {
        let pool = timeline.clone();
        let seqs = exact_sequences(&pool, scenarios)?;
        (pool, seqs)
    } else {
        let pool = apply_strata(splits.pick(Split::Train)?, exp.forecast.strata, full_horizon)?;
        let tl = apply_strata(timeline, exp.forecast.strata, full_horizon)?;
        let seqs = stratified_bootstrap_onto(&pool, &tl, scenarios, exp.seed)?;
        (pool, seqs)
    };
    let plan = fit_offline_policy(&pool, &sequences, spec)?;
    Ok(progress_to_go(&plan, &pool, spec)?)
}

fn controller_labels(configs: &[ControllerConfig]) -> Vec<String> {
    configs.iter().map(|c| c.kind.label().to_string()).collect()
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn cmd_synth(exp: &Experiment) -> Result<()> {
    let spec = match &exp.dataset {
        DatasetSource::Synthetic(s) => s.clone(),
        DatasetSource::Csv { .. } => {
            return Err(ConfigError(
                "synth writes the synthetic dataset; set dataset.source = \"synthetic\""
                    .to_string(),
            )
            .into())
        }
    };
    let stream = generate_synthetic(&spec, exp.seed)?;
    save_stream(
        &exp.out_dir.join("contexts.csv"),
        &exp.out_dir.join("groups.csv"),
        &stream,
    )?;
    let outputs = vec!["contexts.csv".to_string(), "groups.csv".to_string()];
    write_manifest(
        exp,
        "synth",
        &outputs,
        json!({
            "items": spec.n_items,
            "horizon": spec.horizon,
            "budgets": spec.n_budgets(),
        }),
    )
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

pub fn cmd_run(exp: &Experiment) -> Result<()> {
    let full = load_dataset(exp)?;
    let splits = split_stream(&full, exp.ratios);
    let eval = splits.pick(exp.eval_split)?;
    let (spec, baseline) = resolve_spec(exp, eval)?;

    let needs_table = exp
        .controllers
        .iter()
        .any(|c| c.kind == ControllerKind::Predictive);
    let table = if needs_table {
        let most = exp
            .controllers
            .iter()
            .filter(|c| c.kind == ControllerKind::Predictive)
            .map(|c| c.forecasts)
            .max()
            .expect("at least one predictive controller");
        if most > exp.forecast.offline_scenarios {
            return Err(ConfigError(format!(
                "a predictive controller wants {most} forecast scenarios but \
                 forecast.offline_scenarios is {}",
                exp.forecast.offline_scenarios
            ))
            .into());
        }
        Some(fit_forecast_table(
            exp,
            &splits,
            eval,
            &spec,
            exp.forecast.offline_scenarios,
        )?)
    } else {
        None
    };

    let mut rows: Vec<SweepRow> = Vec::with_capacity(exp.controllers.len());
    let mut outputs = vec!["results.csv".to_string()];
    for (i, config) in exp.controllers.iter().enumerate() {
        let controller = build_controller(config, &spec, eval, table.as_ref())?;
        let result = run_episode(controller, eval, &spec, exp.mode, exp.seed)?;
        let trace_name = format!("trace_{}_{}.csv", i + 1, config.kind.label());
        save_trace(&exp.out_dir.join(&trace_name), &result)?;
        outputs.push(trace_name);
        rows.push(SweepRow {
            controller: config.kind.label().to_string(),
            phi: exp.shortfall_cost,
            objective: result.objective,
            utility: result.total_utility(),
            violation: result.violation,
            terminal: result.terminal.clone(),
        });
    }
    save_results(&exp.out_dir.join("results.csv"), &rows)?;

    write_manifest(
        exp,
        "run",
        &outputs,
        json!({
            "eval_split": exp.eval_split.label(),
            "horizon": eval.len(),
            "targets": spec.targets(),
            "baseline": baseline,
            "shortfall_cost": exp.shortfall_cost,
            "controllers": controller_labels(&exp.controllers),
        }),
    )
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

pub fn cmd_sweep(exp: &Experiment) -> Result<()> {
    let full = load_dataset(exp)?;
    let splits = split_stream(&full, exp.ratios);
    let eval = splits.pick(exp.eval_split)?;
    let (spec, baseline) = resolve_spec(exp, eval)?;

    let dev = if exp.sweep_tune {
        Some(splits.pick(Split::Dev)?.clone())
    } else {
        None
    };
    let opts = SweepOptions {
        mode: exp.mode,
        seed: exp.seed,
        exact_forecasts: exp.forecast.exact,
        fit_scenarios: exp.forecast.offline_scenarios,
        tuning: dev.as_ref().map(|stream| SweepTuning {
            grid: &exp.grid,
            stream,
        }),
    };
    let rows = sweep_phi(eval, &spec, &exp.controllers, &exp.phi_grid, &opts)?;
    save_results(&exp.out_dir.join("sweep.csv"), &rows)?;

    write_manifest(
        exp,
        "sweep",
        &["sweep.csv".to_string()],
        json!({
            "eval_split": exp.eval_split.label(),
            "horizon": eval.len(),
            "targets": spec.targets(),
            "baseline": baseline,
            "phi_grid": exp.phi_grid,
            "tuned": exp.sweep_tune,
            "controllers": controller_labels(&exp.controllers),
        }),
    )
}

// ---------------------------------------------------------------------------
// forecast
// ---------------------------------------------------------------------------

pub fn cmd_forecast(exp: &Experiment) -> Result<()> {
    let full = load_dataset(exp)?;
    let splits = split_stream(&full, exp.ratios);
    let timeline = splits.pick(exp.forecast.timeline)?;
    let (spec, _) = resolve_spec(exp, timeline)?;

    let table = fit_forecast_table(
        exp,
        &splits,
        timeline,
        &spec,
        exp.forecast.offline_scenarios,
    )?;
    let table = table.first_scenarios(exp.forecast.online_scenarios)?;

    let path = exp.out_dir.join("progress_to_go.csv");
    let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    table.write_csv(std::io::BufWriter::new(file))?;

    write_manifest(
        exp,
        "forecast",
        &["progress_to_go.csv".to_string()],
        json!({
            "offline_scenarios": exp.forecast.offline_scenarios,
            "online_scenarios": exp.forecast.online_scenarios,
            "strata": exp.forecast.strata.label(),
            "timeline": exp.forecast.timeline.label(),
            "exact": exp.forecast.exact,
            "horizon": timeline.len(),
            "targets": spec.targets(),
        }),
    )
}

// ---------------------------------------------------------------------------
// tune
// ---------------------------------------------------------------------------

/// One tuned `(controller, price)` cell; the flattened config carries the
/// winning parameters under its own field names (`kind`, `gain`, ...).
#[derive(Serialize)]
struct TunedCell {
    phi: f64,
    #[serde(flatten)]
    config: ControllerConfig,
    objective: f64,
}

fn optimizer_columns(config: &ControllerConfig) -> (String, String, String) {
    match config.optimizer {
        rankctl::controllers::Optimizer::Ogd => ("ogd".to_string(), String::new(), String::new()),
        rankctl::controllers::Optimizer::Adam { beta, epsilon } => {
            ("adam".to_string(), beta.to_string(), epsilon.to_string())
        }
    }
}

pub fn cmd_tune(exp: &Experiment) -> Result<()> {
    let full = load_dataset(exp)?;
    let splits = split_stream(&full, exp.ratios);
    let dev = splits.pick(Split::Dev)?;
    let (spec, baseline) = resolve_spec(exp, dev)?;
    let m = spec.n_budgets();

    let mut log = String::from(
        "controller,phi,gain,optimizer,beta,epsilon,forecasts,objective,selected\n",
    );
    let mut best_cells: Vec<TunedCell> = Vec::new();

    for config in &exp.controllers {
        for &phi in &exp.phi_grid {
            let cell_spec = spec.with_shortfall_costs(vec![phi; m])?;
            let table = if config.kind == ControllerKind::Predictive {
                let most = exp
                    .grid
                    .forecasts
                    .iter()
                    .copied()
                    .max()
                    .unwrap_or(config.forecasts)
                    .max(config.forecasts)
                    .max(exp.forecast.offline_scenarios);
                Some(fit_forecast_table(exp, &splits, dev, &cell_spec, most)?)
            } else {
                None
            };
            let outcome = tune_gain(
                dev,
                &cell_spec,
                config,
                &exp.grid,
                table.as_ref(),
                exp.mode,
                exp.seed,
            )?;
            for (candidate, objective) in &outcome.evaluated {
                let (name, beta, epsilon) = optimizer_columns(candidate);
                let selected = candidate == &outcome.best && *objective == outcome.best_objective;
                log.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    candidate.kind.label(),
                    phi,
                    candidate.gain,
                    name,
                    beta,
                    epsilon,
                    candidate.forecasts,
                    objective,
                    if selected { 1 } else { 0 },
                ));
            }
            best_cells.push(TunedCell {
                phi,
                config: outcome.best,
                objective: outcome.best_objective,
            });
        }
    }

    fs::write(exp.out_dir.join("tune_log.csv"), log)?;
    let body = serde_json::to_string_pretty(&best_cells)? + "\n";
    fs::write(exp.out_dir.join("tuned.json"), body)?;

    write_manifest(
        exp,
        "tune",
        &["tuned.json".to_string(), "tune_log.csv".to_string()],
        json!({
            "dev_horizon": dev.len(),
            "targets": spec.targets(),
            "baseline": baseline,
            "phi_grid": exp.phi_grid,
            "grid": {
                "gains": exp.grid.gains,
                "betas": exp.grid.betas,
                "epsilons": exp.grid.epsilons,
                "forecasts": exp.grid.forecasts,
            },
            "cells": best_cells.len(),
        }),
    )
}
