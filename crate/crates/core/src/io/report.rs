//! Result files of a run.
//!
//! - `ipf.csv`: interconnection flows per step; columns of schemes that did
//!   not run are left empty.
//! - `schedules.csv`: per-unit dispatch (hierarchical if it ran, otherwise
//!   monolithic); `schedules_monolithic.csv` when both ran. `soc` is the
//!   state at the end of the step.
//! - `aggregators.csv`: requested, planned and delivered flexibility per node.
//! - `metrics.json`: metrics, per-node errors and solver statistics.
//! - `scenario.resolved.toml`: the scenario with all defaults filled in.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::coordination::{RunResult, Scenario, UnitSchedule};
use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::optimizer::SolverStats;

use super::scenario::resolved_manifest;

#[derive(Debug, Serialize)]
struct AggregatorEntry {
    epsilon: Option<f64>,
    tracking_objective: f64,
    requested_sum_squares: f64,
}

#[derive(Debug, Serialize)]
struct SolverEntry {
    monolithic: Option<SolverStats>,
    hierarchical: Option<SolverStats>,
}

#[derive(Debug, Serialize)]
struct MetricsReport<'a> {
    #[serde(flatten)]
    metrics: &'a Metrics,
    root_aggregator: Option<&'a str>,
    aggregators: BTreeMap<&'a str, AggregatorEntry>,
    solver: SolverEntry,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn ipf_csv(result: &RunResult) -> String {
    let mut out = String::from("t,ipf_baseline,ipf_monolithic,ipf_hier_planned,ipf_hier_realized\n");
    let mono = result.monolithic.as_ref().map(|m| &m.ipf);
    let planned = result.hierarchical.as_ref().map(|h| &h.ipf_planned);
    let realized = result.hierarchical.as_ref().map(|h| &h.ipf_realized);
    for (t, b) in result.ipf_baseline.iter().enumerate() {
        let _ = writeln!(
            out,
            "{t},{b},{},{},{}",
            cell(mono.map(|s| s[t])),
            cell(planned.map(|s| s[t])),
            cell(realized.map(|s| s[t])),
        );
    }
    out
}

pub fn schedules_csv(schedules: &[UnitSchedule]) -> String {
    let mut out = String::from("unit,t,p_chg,p_dch,p_net,soc\n");
    for us in schedules {
        let s = &us.schedule;
        for t in 0..s.p_net.len() {
            let _ = writeln!(
                out,
                "{},{t},{},{},{},{}",
                us.id,
                s.p_chg[t],
                s.p_dch[t],
                s.p_net[t],
                s.soc[t + 1]
            );
        }
    }
    out
}

fn aggregators_csv(result: &RunResult) -> Option<String> {
    let h = result.hierarchical.as_ref()?;
    let mut out = String::from("node,t,requested,planned,delivered\n");
    for (id, r) in &h.per_aggregator {
        for t in 0..r.requested.len() {
            let _ = writeln!(
                out,
                "{id},{t},{},{},{}",
                r.requested[t], r.planned[t], r.delivered[t]
            );
        }
    }
    Some(out)
}

pub fn metrics_json(result: &RunResult) -> Result<String> {
    let aggregators = result
        .hierarchical
        .iter()
        .flat_map(|h| h.per_aggregator.iter())
        .map(|(id, r)| {
            (
                id.as_str(),
                AggregatorEntry {
                    epsilon: r.epsilon,
                    tracking_objective: r.tracking_objective,
                    requested_sum_squares: r.requested.sum_squares(),
                },
            )
        })
        .collect();
    let report = MetricsReport {
        metrics: &result.metrics,
        root_aggregator: result.hierarchical.as_ref().map(|h| h.root_id.as_str()),
        aggregators,
        solver: SolverEntry {
            monolithic: result.monolithic.as_ref().map(|m| m.stats),
            hierarchical: result.hierarchical.as_ref().map(|h| h.stats),
        },
    };
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Invalid(format!("cannot serialise metrics: {e}")))?;
    text.push('\n');
    Ok(text)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes every result file into `dir` (created if missing) and returns the
/// paths written.
pub fn write_results(scenario: &Scenario, result: &RunResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![write(dir, "ipf.csv", &ipf_csv(result))?];
    let primary = result
        .hierarchical
        .as_ref()
        .map(|h| &h.schedules)
        .or(result.monolithic.as_ref().map(|m| &m.schedules));
    if let Some(s) = primary {
        written.push(write(dir, "schedules.csv", &schedules_csv(s))?);
    }
    if let (Some(m), Some(_)) = (&result.monolithic, &result.hierarchical) {
        written.push(write(dir, "schedules_monolithic.csv", &schedules_csv(&m.schedules))?);
    }
    if let Some(a) = aggregators_csv(result) {
        written.push(write(dir, "aggregators.csv", &a)?);
    }
    written.push(write(dir, "metrics.json", &metrics_json(result)?)?);
    written.push(write(dir, "scenario.resolved.toml", &resolved_manifest(scenario)?)?);
    Ok(written)
}
