//! Ranking under long-horizon budget contracts.
//!
//! A ranking system serves one request at a time, but some of its goals only
//! make sense over many requests: give these items this much attention by the
//! end of the day, keep each group's exposure above a floor. This crate turns
//! such episode-level contracts into per-request ranking decisions.
//!
//! The pieces, bottom to top:
//!
//! * [`types`]: contexts, position weight profiles, deterministic rankings,
//!   distributions over rankings, and budget contracts.
//! * [`objective`]: per-step utility and budget credit, and the episode
//!   score they roll up into.
//! * [`solver`]: exact assignment over rankings, a shortfall-penalized
//!   single-step program, and the full-horizon planning program.
//! * [`bvn`]: decomposing a ranking distribution into a lottery over
//!   deterministic rankings, and sampling from it.
//! * [`controllers`]: per-step policies that track budget progress and steer
//!   rankings toward the contract.
//! * [`forecast`]: bootstrap context resampling, offline plans, progress-to-go
//!   tables, and gain tuning.
//! * [`sim`]: episode execution, synthetic and CSV-backed context streams,
//!   baseline-derived targets, and price sweeps.

pub mod bvn;
pub mod controllers;
pub mod error;
pub mod forecast;
pub mod objective;
pub mod sim;
pub mod solver;
pub mod types;

pub use error::{Error, Result};
