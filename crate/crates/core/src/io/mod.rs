//! File formats and the command-line front end.

pub mod cli;
pub mod report;
pub mod scenario;
pub mod sweep;
pub mod timeseries;

pub use cli::run_cli;
pub use report::write_results;
pub use scenario::{load_scenario, load_scenario_document, resolved_manifest, ScenarioDocument};
pub use sweep::{demand_study, run_sweep, SweepSpec};
pub use timeseries::{
    format_timeseries_csv, load_timeseries_csv, parse_timeseries_csv, write_timeseries_csv,
};
