//! Deterministic synthetic request stream with seasonal structure.
//!
//! A block of "evergreen" items carries the highest relevance at every step.
//! Behind them sit two disjoint seasonal groups: the first is relevant
//! during the front half of the episode and nearly irrelevant afterwards,
//! the second mirrors it in the back half. Each seasonal group is one
//! budget coordinate (an indicator association row), so a contract over
//! this stream asks for exposure the pure relevance order never grants —
//! with a top-`cutoff` exposure curve, the evergreen block fills every
//! credited position.

use crate::error::{Error, Result};
use crate::sim::ContextStream;
use crate::types::{Association, Context, PositionWeights};

/// Shape of the synthetic stream. Defaults reproduce the canonical
/// experiment: 8 items over 400 steps, 4 evergreen, two seasonal pairs,
/// relevances 1.0 / 0.8 / 0.05, metrics cut off at rank 4.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_items: usize,
    pub horizon: usize,
    /// Leading items that stay at `peak` relevance throughout.
    pub n_always: usize,
    /// Items per seasonal group; two groups follow the evergreen block.
    pub group_size: usize,
    pub peak: f64,
    pub in_season: f64,
    pub off_season: f64,
    /// Rank cutoff for the position weights this stream is scored with.
    pub cutoff: Option<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_items: 8,
            horizon: 400,
            n_always: 4,
            group_size: 2,
            peak: 1.0,
            in_season: 0.8,
            off_season: 0.05,
            cutoff: Some(4),
        }
    }
}

impl SyntheticSpec {
    pub fn n_budgets(&self) -> usize {
        2
    }

    /// The utility/exposure curves this stream is canonically scored with.
    pub fn position_weights(&self) -> PositionWeights {
        PositionWeights::dcg_rr(self.n_items, self.cutoff)
    }

    fn validate(&self) -> Result<()> {
        if self.n_items != self.n_always + 2 * self.group_size {
            return Err(Error::invalid(format!(
                "{} items cannot hold {} evergreen plus two groups of {}",
                self.n_items, self.n_always, self.group_size
            )));
        }
        if self.group_size == 0 {
            return Err(Error::invalid("seasonal groups cannot be empty"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        for (name, v) in [
            ("peak", self.peak),
            ("in_season", self.in_season),
            ("off_season", self.off_season),
        ] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "{name} relevance must lie in [0, 1], got {v}"
                )));
            }
        }
        if self.peak < self.in_season || self.in_season < self.off_season {
            return Err(Error::invalid(
                "relevances must satisfy peak >= in_season >= off_season",
            ));
        }
        Ok(())
    }
}

/// Builds the stream. The output is fully deterministic and does not depend
/// on `seed` — every run scores the same exact relevances — the parameter
/// exists so callers can thread one seed through an experiment uniformly.
pub fn generate_synthetic(spec: &SyntheticSpec, _seed: u64) -> Result<ContextStream> {
    spec.validate()?;
    let g1 = (spec.n_always..spec.n_always + spec.group_size).collect::<Vec<_>>();
    let g2 = (spec.n_always + spec.group_size..spec.n_items).collect::<Vec<_>>();
    let assoc = Association::from_groups(spec.n_items, &[g1.clone(), g2.clone()])?;

    let half = spec.horizon / 2;
    let mut contexts = Vec::with_capacity(spec.horizon);
    let mut strata = Vec::with_capacity(spec.horizon);
    for t in 1..=spec.horizon {
        let first_half = t <= half;
        let mut relevance = vec![spec.peak; spec.n_items];
        for &j in &g1 {
            relevance[j] = if first_half {
                spec.in_season
            } else {
                spec.off_season
            };
        }
        for &j in &g2 {
            relevance[j] = if first_half {
                spec.off_season
            } else {
                spec.in_season
            };
        }
        contexts.push(Context::new(t, relevance, assoc.clone())?);
        strata.push(if first_half { "first_half" } else { "second_half" }.to_string());
    }
    ContextStream::with_strata(contexts, strata)
}
