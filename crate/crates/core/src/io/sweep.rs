//! Capacity-split sweeps and demand studies.
//!
//! A sweep replaces the scenario's units by `groups` groups of two units.
//! In each group the first unit gets `(p1, c1)` and the second
//! `(total_mw - p1, total_mwh - c1)`. Units left without capacity are
//! dropped, so the end points of the sweep contain no real aggregation.
//!
//! ```toml
//! groups = 2
//! [capacity_split]
//! total_mwh = 2.0
//! steps = 41
//! [power_split]
//! total_mw = 2.0
//! p1_values = [0.5, 0.75, 1.0]
//! [demand]
//! variants = ["winter.csv", "summer.csv"]
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordination::{run, HierarchySpec, RunMode, Scenario};
use crate::error::{Error, Result};
use crate::model::{EssParams, Timeseries};

use super::load_timeseries_csv;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySplit {
    pub total_mwh: f64,
    pub steps: usize,
    #[serde(default)]
    pub c1_min: Option<f64>,
    #[serde(default)]
    pub c1_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSplit {
    pub total_mw: f64,
    pub p1_values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DemandVariants {
    #[serde(default)]
    pub variants: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_groups")]
    pub groups: usize,
    #[serde(default = "default_soc")]
    pub soc_initial: f64,
    pub capacity_split: CapacitySplit,
    pub power_split: PowerSplit,
    #[serde(default)]
    pub demand: DemandVariants,
}

fn default_groups() -> usize {
    2
}

fn default_soc() -> f64 {
    0.5
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: SweepSpec = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for v in &mut spec.demand.variants {
            *v = base.join(&*v);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.capacity_split;
        let p = &self.power_split;
        if c.steps < 2 {
            return Err(Error::Invalid("capacity_split.steps must be at least 2".into()));
        }
        if !(c.total_mwh > 0.0 && p.total_mw > 0.0) {
            return Err(Error::Invalid("sweep totals must be positive".into()));
        }
        let (lo, hi) = self.c1_range();
        if !(0.0 <= lo && lo <= hi && hi <= c.total_mwh) {
            return Err(Error::Invalid(format!(
                "c1 range [{lo}, {hi}] must lie within [0, {}]",
                c.total_mwh
            )));
        }
        if p.p1_values.is_empty() || p.p1_values.iter().any(|&v| !(0.0..=p.total_mw).contains(&v)) {
            return Err(Error::Invalid(format!(
                "p1_values must be nonempty and lie within [0, {}]",
                p.total_mw
            )));
        }
        if self.groups == 0 {
            return Err(Error::Invalid("sweep needs at least one group".into()));
        }
        Ok(())
    }

    fn c1_range(&self) -> (f64, f64) {
        let c = &self.capacity_split;
        (c.c1_min.unwrap_or(0.0), c.c1_max.unwrap_or(c.total_mwh))
    }

    /// Sampled first-unit capacities, evenly spaced and including both ends.
    pub fn c1_values(&self) -> Vec<f64> {
        let (lo, hi) = self.c1_range();
        let steps = self.capacity_split.steps;
        (0..steps)
            .map(|i| {
                if i + 1 == steps {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (steps - 1) as f64
                }
            })
            .collect()
    }
}

/// Units and groups of one sweep point.
pub fn split_units(spec: &SweepSpec, p1: f64, c1: f64) -> (Vec<EssParams>, Vec<Vec<String>>) {
    let p2 = spec.power_split.total_mw - p1;
    let c2 = spec.capacity_split.total_mwh - c1;
    let mut units = Vec::new();
    let mut groups = Vec::new();
    for g in 1..=spec.groups {
        let mut group = Vec::new();
        for (k, p, c) in [(1, p1, c1), (2, p2, c2)] {
            if c > 0.0 {
                let id = format!("g{g}_ess{k}");
                units.push(EssParams::ideal(id.clone(), p, c, spec.soc_initial));
                group.push(id);
            }
        }
        groups.push(group);
    }
    (units, groups)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p1: f64,
    pub c1: f64,
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
}

/// Evaluates every `(p1, c1)` point against one baseline. Rows are ordered
/// by `p1` value, then by `c1`, regardless of evaluation order.
pub fn sweep_rows(base: &Scenario, spec: &SweepSpec, baseline: &Timeseries) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let points: Vec<(f64, f64)> = spec
        .power_split
        .p1_values
        .iter()
        .flat_map(|&p1| spec.c1_values().into_iter().map(move |c1| (p1, c1)))
        .collect();
    points
        .into_par_iter()
        .map(|(p1, c1)| {
            let (units, groups) = split_units(spec, p1, c1);
            let scenario = Scenario {
                units,
                hierarchy: HierarchySpec::Groups(groups),
                baseline_ipf: baseline.clone(),
                ipf_constraints: Default::default(),
                ..base.clone()
            };
            let r = run(&scenario, RunMode::Both)?;
            Ok(SweepRow {
                p1,
                c1,
                epsilon: r.metrics.epsilon_agg,
                eta: r.metrics.eta_agg,
            })
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("p1_mw,c1_mwh,epsilon,eta\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.p1, r.c1, cell(r.epsilon), cell(r.eta));
    }
    out
}

/// Runs the sweep for the scenario's own demand, or once per demand variant.
/// Writes `sweep.csv` or `sweep_<stem>.csv` per variant.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut jobs: Vec<(String, Timeseries)> = Vec::new();
    if spec.demand.variants.is_empty() {
        jobs.push(("sweep.csv".into(), base.baseline_ipf.clone()));
    }
    for path in &spec.demand.variants {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("demand");
        jobs.push((format!("sweep_{stem}.csv"), load_timeseries_csv(path, &base.grid)?));
    }
    let mut written = Vec::new();
    for (name, baseline) in jobs {
        let rows = sweep_rows(base, spec, &baseline)?;
        let path = out.join(&name);
        fs::write(&path, sweep_csv(&rows)).map_err(|e| Error::io(&path, e))?;
        info!("wrote {} rows to {}", rows.len(), path.display());
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandStudyRow {
    pub demand: String,
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
    pub objective_monolithic: Option<f64>,
    pub objective_hierarchical: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        Some(Self {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            count: v.len(),
        })
    }
}

/// Runs the scenario once per demand file. Writes `demand_study.csv`,
/// `demand_study_summary.json` and one `ipf_<stem>.csv` per variant.
pub fn demand_study(base: &Scenario, demands: &[PathBuf], out: &Path) -> Result<Vec<DemandStudyRow>> {
    if demands.is_empty() {
        return Err(Error::Invalid("demand study needs at least one demand file".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rows = Vec::new();
    for path in demands {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("demand").to_string();
        let scenario = Scenario {
            baseline_ipf: load_timeseries_csv(path, &base.grid)?,
            ..base.clone()
        };
        let result = run(&scenario, RunMode::Both)?;
        let ipf_path = out.join(format!("ipf_{stem}.csv"));
        fs::write(&ipf_path, super::report::ipf_csv(&result)).map_err(|e| Error::io(&ipf_path, e))?;
        rows.push(DemandStudyRow {
            demand: stem,
            epsilon: result.metrics.epsilon_agg,
            eta: result.metrics.eta_agg,
            objective_monolithic: result.metrics.objective_monolithic,
            objective_hierarchical: result.metrics.objective_hierarchical,
        });
    }
    let mut csv = String::from("demand,epsilon,eta,objective_monolithic,objective_hierarchical\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.demand,
            cell(r.epsilon),
            cell(r.eta),
            cell(r.objective_monolithic),
            cell(r.objective_hierarchical)
        );
    }
    let path = out.join("demand_study.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;

    #[derive(Serialize)]
    struct StudySummary {
        epsilon: Option<Summary>,
        eta: Option<Summary>,
    }
    let summary = StudySummary {
        epsilon: Summary::of(rows.iter().filter_map(|r| r.epsilon)),
        eta: Summary::of(rows.iter().filter_map(|r| r.eta)),
    };
    let path = out.join("demand_study_summary.json");
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Invalid(format!("cannot serialise summary: {e}")))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
