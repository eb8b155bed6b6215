//! Scenario configuration, Monte Carlo orchestration and report emission.

pub mod builtin;
pub mod config;
pub mod monte_carlo;
pub mod report;
pub mod runner;
pub mod schedule;
pub mod simulate;

pub use builtin::{builtin, BUILTIN_NAMES};
pub use config::{ScenarioConfig, ScenarioKind};
pub use monte_carlo::{monte_carlo, PointwiseStats, Z_99};
pub use report::BoundReport;
pub use runner::{bounds_table, run_scenario, BoundRow, write_artifacts, ScenarioRun};
pub use schedule::{periodic_schedule, Schedule};
