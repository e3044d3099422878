//! Monte Carlo coverage experiments and their configuration.

pub mod config;
pub mod coverage;

pub use config::{Regime, ScenarioConfig, DEFAULT_CONFIG};
pub use coverage::{run_coverage, run_coverage_dependent, run_coverage_iid, CoverageReport, LadderEntry, RepRecord, Timings};
