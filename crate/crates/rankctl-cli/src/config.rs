//! Experiment configuration: the TOML schema, flag overrides, validation,
//! and the chronological train/dev/test split.
//!
//! Precedence is flags over file over built-in defaults. The whole file is
//! schema-checked up front (unknown keys are rejected), referenced dataset
//! files must exist, and anything the chosen subcommand needs beyond that is
//! validated before any computation starts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use rankctl::controllers::{ControllerConfig, ControllerKind, Optimizer};
use rankctl::forecast::TuneGrid;
use rankctl::sim::synthetic::SyntheticSpec;
use rankctl::sim::{ContextStream, ProgressMode};

/// A configuration problem: bad schema, bad values, or missing files.
/// Mapped to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

// ---------------------------------------------------------------------------
// TOML schema
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub progress_mode: String,
    /// Sweep/tuning worker threads; 0 means one per physical core.
    pub workers: usize,
    /// Which split episodes evaluate on: full | train | dev | test.
    pub eval_split: String,
    pub dataset: DatasetSection,
    pub split: SplitSection,
    pub spec: SpecSection,
    /// Controllers to evaluate; empty means all six kinds with defaults.
    pub controllers: Vec<ControllerSection>,
    pub sweep: SweepSection,
    pub forecast: ForecastSection,
    pub tuning: TuningSection,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            seed: 42,
            output_dir: PathBuf::from("out"),
            progress_mode: "expected".to_string(),
            workers: 0,
            eval_split: "full".to_string(),
            dataset: DatasetSection::default(),
            split: SplitSection::default(),
            spec: SpecSection::default(),
            controllers: Vec::new(),
            sweep: SweepSection::default(),
            forecast: ForecastSection::default(),
            tuning: TuningSection::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// "synthetic" or "csv".
    pub source: String,
    /// Contexts CSV path (csv source only).
    pub contexts: Option<PathBuf>,
    /// Groups CSV path (csv source only).
    pub groups: Option<PathBuf>,
    pub synthetic: SyntheticSection,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            source: "synthetic".to_string(),
            contexts: None,
            groups: None,
            synthetic: SyntheticSection::default(),
        }
    }
}

/// Mirrors the synthetic generator's shape knobs; the rank cutoff comes
/// from `[spec]` so data and scoring cannot disagree.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub items: usize,
    pub horizon: usize,
    pub evergreen: usize,
    pub group_size: usize,
    pub peak: f64,
    pub in_season: f64,
    pub off_season: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        SyntheticSection {
            items: s.n_items,
            horizon: s.horizon,
            evergreen: s.n_always,
            group_size: s.group_size,
            peak: s.peak,
            in_season: s.in_season,
            off_season: s.off_season,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train: 0.6,
            dev: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecSection {
    /// Rank cutoff for utility and exposure curves; 0 disables the cutoff.
    pub cutoff: usize,
    /// Explicit budget targets. Mutually exclusive with `baseline_factors`.
    pub targets: Option<Vec<f64>>,
    /// Targets as multiples of an unconstrained run's terminal progress on
    /// the episode stream.
    pub baseline_factors: Option<Vec<f64>>,
    /// Uniform shortfall price for `run`, `forecast`, and `tune` table fits;
    /// `sweep` replaces it cell by cell from its own grid.
    pub shortfall_cost: f64,
}

impl Default for SpecSection {
    fn default() -> Self {
        SpecSection {
            cutoff: 4,
            targets: None,
            baseline_factors: None,
            shortfall_cost: 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub kind: String,
    pub gain: f64,
    pub optimizer: OptimizerSection,
    /// Forecast scenarios the predictive rule averages over.
    pub forecasts: usize,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            kind: "unconstrained".to_string(),
            gain: 1.0,
            optimizer: OptimizerSection::default(),
            forecasts: 20,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    /// "ogd" or "adam".
    pub name: String,
    pub beta: f64,
    pub epsilon: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            name: "ogd".to_string(),
            beta: 0.9,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub phi_grid: Vec<f64>,
    /// Re-tune gain-bearing controllers per (controller, price) cell on the
    /// dev split before evaluating.
    pub tune: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            phi_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            tune: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastSection {
    /// Scenarios the offline plan is fitted over (B_off).
    pub offline_scenarios: usize,
    /// Scenarios kept in the emitted progress-to-go table (B_on <= B_off).
    pub online_scenarios: usize,
    /// Stratification preset: labeled | uniform | half.
    pub strata: String,
    /// Split whose steps the forecast targets; empty means `eval_split`.
    pub timeline: String,
    /// Replay the timeline itself instead of bootstrap resampling.
    pub exact: bool,
}

impl Default for ForecastSection {
    fn default() -> Self {
        ForecastSection {
            offline_scenarios: 50,
            online_scenarios: 20,
            strata: "labeled".to_string(),
            timeline: String::new(),
            exact: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningSection {
    pub gains: Vec<f64>,
    pub betas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub forecasts: Vec<usize>,
}

impl Default for TuningSection {
    fn default() -> Self {
        let g = TuneGrid::default();
        TuningSection {
            gains: g.gains,
            betas: g.betas,
            epsilons: g.epsilons,
            forecasts: g.forecasts,
        }
    }
}

// ---------------------------------------------------------------------------
// Loading and resolution
// ---------------------------------------------------------------------------

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub progress_mode: Option<String>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Which contiguous slice of the dataset a command works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Full,
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Full => "full",
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "full" => Ok(Split::Full),
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(bad(format!(
                "unknown split '{other}' (expected full, train, dev, or test)"
            ))),
        }
    }
}

/// How streams are labeled before stratified resampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrataMode {
    /// Keep whatever labels the dataset carries.
    Labeled,
    /// Ignore labels; every step draws from the whole pool.
    Uniform,
    /// Relabel by episode half, derived from each request's original step.
    Half,
}

impl StrataMode {
    pub fn label(self) -> &'static str {
        match self {
            StrataMode::Labeled => "labeled",
            StrataMode::Uniform => "uniform",
            StrataMode::Half => "half",
        }
    }
}

impl FromStr for StrataMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "labeled" => Ok(StrataMode::Labeled),
            "uniform" => Ok(StrataMode::Uniform),
            "half" => Ok(StrataMode::Half),
            other => Err(bad(format!(
                "unknown strata preset '{other}' (expected labeled, uniform, or half)"
            ))),
        }
    }
}

/// Where episode requests come from.
#[derive(Clone, Debug)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv { contexts: PathBuf, groups: PathBuf },
}

/// How budget targets are stated.
#[derive(Clone, Debug)]
pub enum TargetSpec {
    Explicit(Vec<f64>),
    Factors(Vec<f64>),
}

/// Forecast fitting knobs after validation.
#[derive(Clone, Debug)]
pub struct ForecastSettings {
    pub offline_scenarios: usize,
    pub online_scenarios: usize,
    pub strata: StrataMode,
    pub timeline: Split,
    pub exact: bool,
}

/// A fully validated experiment: the file merged with flag overrides.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub seed: u64,
    pub mode: ProgressMode,
    /// 0 means auto-size to physical cores.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub eval_split: Split,
    pub dataset: DatasetSource,
    pub ratios: (f64, f64, f64),
    pub cutoff: Option<usize>,
    pub targets: Option<TargetSpec>,
    pub shortfall_cost: f64,
    pub controllers: Vec<ControllerConfig>,
    pub phi_grid: Vec<f64>,
    pub sweep_tune: bool,
    pub forecast: ForecastSettings,
    pub grid: TuneGrid,
    pub config_sha256: String,
}

/// Reads and parses the TOML file, recording its SHA-256 for the manifest.
pub fn load_config(path: &Path) -> Result<(FileConfig, String), ConfigError> {
    let bytes = fs::read(path)
        .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| bad(format!("config {} is not UTF-8", path.display())))?;
    let file: FileConfig = toml::from_str(&text)
        .map_err(|e| bad(format!("config {}: {e}", path.display())))?;
    let sha = hex_digest(&bytes);
    Ok((file, sha))
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn check_vector(name: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.is_empty() {
        return Err(bad(format!("{name} cannot be empty")));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(bad(format!("{name} entries must be finite and >= 0")));
    }
    Ok(())
}

/// Merges overrides into the file and validates everything that does not
/// need the dataset in memory.
pub fn resolve(
    file: FileConfig,
    sha256: String,
    overrides: &Overrides,
) -> Result<Experiment, ConfigError> {
    let seed = overrides.seed.unwrap_or(file.seed);
    let mode_str = overrides
        .progress_mode
        .clone()
        .unwrap_or_else(|| file.progress_mode.clone());
    let mode = ProgressMode::from_str(&mode_str).map_err(|e| bad(e.to_string()))?;
    let workers = overrides.workers.unwrap_or(file.workers);
    let out_dir = overrides
        .out
        .clone()
        .unwrap_or_else(|| file.output_dir.clone());
    let eval_split: Split = file.eval_split.parse()?;

    let dataset = match file.dataset.source.as_str() {
        "synthetic" => {
            let s = &file.dataset.synthetic;
            DatasetSource::Synthetic(SyntheticSpec {
                n_items: s.items,
                horizon: s.horizon,
                n_always: s.evergreen,
                group_size: s.group_size,
                peak: s.peak,
                in_season: s.in_season,
                off_season: s.off_season,
                cutoff: (file.spec.cutoff > 0).then_some(file.spec.cutoff),
            })
        }
        "csv" => {
            let contexts = file
                .dataset
                .contexts
                .clone()
                .ok_or_else(|| bad("dataset.contexts is required when dataset.source = \"csv\""))?;
            let groups = file
                .dataset
                .groups
                .clone()
                .ok_or_else(|| bad("dataset.groups is required when dataset.source = \"csv\""))?;
            for (field, path) in [("dataset.contexts", &contexts), ("dataset.groups", &groups)] {
                if !path.is_file() {
                    return Err(bad(format!(
                        "{field}: file not found: {}",
                        path.display()
                    )));
                }
            }
            DatasetSource::Csv { contexts, groups }
        }
        other => {
            return Err(bad(format!(
                "unknown dataset.source '{other}' (expected synthetic or csv)"
            )))
        }
    };

    let r = (file.split.train, file.split.dev, file.split.test);
    for (name, v) in [("split.train", r.0), ("split.dev", r.1), ("split.test", r.2)] {
        if !v.is_finite() || v < 0.0 {
            return Err(bad(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    if (r.0 + r.1 + r.2 - 1.0).abs() > 1e-9 {
        return Err(bad(format!(
            "split ratios must sum to 1, got {} + {} + {}",
            r.0, r.1, r.2
        )));
    }

    let targets = match (&file.spec.targets, &file.spec.baseline_factors) {
        (Some(_), Some(_)) => {
            return Err(bad(
                "spec.targets and spec.baseline_factors are mutually exclusive",
            ))
        }
        (Some(t), None) => {
            check_vector("spec.targets", t)?;
            Some(TargetSpec::Explicit(t.clone()))
        }
        (None, Some(f)) => {
            check_vector("spec.baseline_factors", f)?;
            Some(TargetSpec::Factors(f.clone()))
        }
        (None, None) => None,
    };
    if !file.spec.shortfall_cost.is_finite() || file.spec.shortfall_cost < 0.0 {
        return Err(bad(format!(
            "spec.shortfall_cost must be finite and >= 0, got {}",
            file.spec.shortfall_cost
        )));
    }

    let controllers = if file.controllers.is_empty() {
        ControllerKind::ALL
            .iter()
            .map(|&k| ControllerConfig::new(k))
            .collect()
    } else {
        file.controllers
            .iter()
            .enumerate()
            .map(|(i, c)| controller_from_section(i, c))
            .collect::<Result<Vec<_>, _>>()?
    };

    check_vector("sweep.phi_grid", &file.sweep.phi_grid)?;

    let f = &file.forecast;
    if f.offline_scenarios == 0 {
        return Err(bad("forecast.offline_scenarios must be >= 1"));
    }
    if f.online_scenarios == 0 || f.online_scenarios > f.offline_scenarios {
        return Err(bad(format!(
            "forecast.online_scenarios must lie in 1..={}, got {}",
            f.offline_scenarios, f.online_scenarios
        )));
    }
    let forecast = ForecastSettings {
        offline_scenarios: f.offline_scenarios,
        online_scenarios: f.online_scenarios,
        strata: f.strata.parse()?,
        timeline: if f.timeline.is_empty() {
            eval_split
        } else {
            f.timeline.parse()?
        },
        exact: f.exact,
    };

    let grid = TuneGrid {
        gains: file.tuning.gains.clone(),
        betas: file.tuning.betas.clone(),
        epsilons: file.tuning.epsilons.clone(),
        forecasts: file.tuning.forecasts.clone(),
    };

    Ok(Experiment {
        seed,
        mode,
        workers,
        out_dir,
        eval_split,
        dataset,
        ratios: r,
        cutoff: (file.spec.cutoff > 0).then_some(file.spec.cutoff),
        targets,
        shortfall_cost: file.spec.shortfall_cost,
        controllers,
        phi_grid: file.sweep.phi_grid.clone(),
        sweep_tune: file.sweep.tune,
        forecast,
        grid,
        config_sha256: sha256,
    })
}

fn controller_from_section(
    idx: usize,
    c: &ControllerSection,
) -> Result<ControllerConfig, ConfigError> {
    let kind = ControllerKind::from_str(&c.kind)
        .map_err(|e| bad(format!("controllers[{idx}]: {e}")))?;
    if !c.gain.is_finite() || c.gain < 0.0 {
        return Err(bad(format!(
            "controllers[{idx}].gain must be finite and >= 0, got {}",
            c.gain
        )));
    }
    let optimizer = match c.optimizer.name.as_str() {
        "ogd" => Optimizer::Ogd,
        "adam" => Optimizer::Adam {
            beta: c.optimizer.beta,
            epsilon: c.optimizer.epsilon,
        },
        other => {
            return Err(bad(format!(
                "controllers[{idx}].optimizer.name '{other}' unknown (expected ogd or adam)"
            )))
        }
    };
    if c.forecasts == 0 {
        return Err(bad(format!(
            "controllers[{idx}].forecasts must be >= 1"
        )));
    }
    Ok(ControllerConfig {
        kind,
        gain: c.gain,
        optimizer,
        forecasts: c.forecasts,
    })
}

// ---------------------------------------------------------------------------
// Splits and strata
// ---------------------------------------------------------------------------

/// The dataset and its chronological contiguous splits. Train and dev sizes
/// round down; test takes the remainder.
pub struct Splits {
    pub full: ContextStream,
    pub train: Option<ContextStream>,
    pub dev: Option<ContextStream>,
    pub test: Option<ContextStream>,
}

impl Splits {
    pub fn pick(&self, split: Split) -> Result<&ContextStream, ConfigError> {
        let found = match split {
            Split::Full => Some(&self.full),
            Split::Train => self.train.as_ref(),
            Split::Dev => self.dev.as_ref(),
            Split::Test => self.test.as_ref(),
        };
        found.ok_or_else(|| {
            bad(format!(
                "the {} split is empty under the configured ratios",
                split.label()
            ))
        })
    }
}

pub fn split_stream(stream: &ContextStream, ratios: (f64, f64, f64)) -> Splits {
    let n = stream.len();
    let n_train = (ratios.0 * n as f64).floor() as usize;
    let n_dev = (ratios.1 * n as f64).floor() as usize;
    let n_test = n - n_train - n_dev;
    let part = |start: usize, len: usize| {
        (len > 0).then(|| {
            stream
                .slice(start, len)
                .expect("split bounds derive from the stream length")
        })
    };
    Splits {
        full: stream.clone(),
        train: part(0, n_train),
        dev: part(n_train, n_dev),
        test: part(n_train + n_dev, n_test),
    }
}

/// Applies a stratification preset to a stream. `full_horizon` anchors the
/// `half` preset so a slice keeps the labels its steps had in the full
/// dataset.
pub fn apply_strata(
    stream: &ContextStream,
    mode: StrataMode,
    full_horizon: usize,
) -> Result<ContextStream, ConfigError> {
    let rebuild = |labels: Option<Vec<String>>| {
        let contexts = stream.contexts().to_vec();
        match labels {
            Some(l) => ContextStream::with_strata(contexts, l),
            None => ContextStream::new(contexts),
        }
        .map_err(|e| bad(e.to_string()))
    };
    match mode {
        StrataMode::Labeled => Ok(stream.clone()),
        StrataMode::Uniform => rebuild(None),
        StrataMode::Half => {
            let labels = stream
                .contexts()
                .iter()
                .map(|ctx| {
                    if ctx.t * 2 <= full_horizon {
                        "first_half".to_string()
                    } else {
                        "second_half".to_string()
                    }
                })
                .collect();
            rebuild(Some(labels))
        }
    }
}
