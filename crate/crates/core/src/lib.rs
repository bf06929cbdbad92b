//! Hierarchical flexibility coordination for energy storage fleets.
//!
//! The crate dispatches storage flexibility either through a single
//! coordinator that sees every unit (the monolithic benchmark) or through a
//! tree of aggregators that only exchange virtual-unit summaries
//! (power limit, capacity and state of charge). Comparing the two yields the
//! aggregation error and aggregation efficiency of a grouping.
//!
//! Module map:
//! - [`model`]: storage physics, schedules and feasibility checks.
//! - [`optimizer`]: quadratic dispatch problems, the interior-point QP,
//!   branch-and-bound over charge/discharge exclusivity, brute-force oracle.
//! - [`aggregation`]: virtual-unit parameters, grouping, aggregator trees.
//! - [`coordination`]: monolithic and hierarchical runs.
//! - [`metrics`]: aggregation error and efficiency.
//! - [`io`]: scenario files, CSV series, reports, sweeps and the CLI.
//! - [`verify`]: randomized comparison of the optimiser with the oracle.

pub mod aggregation;
pub mod coordination;
pub mod demand;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod verify;

pub use error::{Error, Result};
