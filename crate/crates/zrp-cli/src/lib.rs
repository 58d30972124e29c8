//! Reproducible experiment runner for `zrp-core`.
//!
//! A job is described by a versioned TOML [`config::ExperimentConfig`]; running
//! it writes CSV and JSON artifacts, each stamped with the config hash and
//! seed, plus a `metadata.json` with the resolved `N`, the regime report,
//! versions and wall time.

pub mod config;
pub mod jobs;
pub mod output;

pub use config::{ExperimentConfig, Job};
pub use jobs::{run, Outcome};
