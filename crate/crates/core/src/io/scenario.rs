//! TOML scenario files.
//!
//! ```toml
//! [grid]
//! n_steps = 96
//! dt_hours = 0.25
//!
//! [[units]]
//! id = "fpu1"
//! p_max_mw = 1.3
//! capacity_mwh = 0.4
//!
//! [hierarchy]
//! mode = "heterogeneous"
//! group_count = 2
//!
//! [demand]
//! profile = "synthetic_day"
//! ```
//!
//! Unknown keys are rejected. Relative CSV paths resolve against the
//! scenario file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationMode, NodeSpec};
use crate::coordination::{HierarchySpec, RootObjective, Scenario};
use crate::demand::{random_profile, synthetic_day};
use crate::error::{Error, Result};
use crate::model::{EssParams, TimeGrid, Timeseries};
use crate::optimizer::SolverOptions;

pub const DEFAULT_ETA: f64 = 1.0;
pub const DEFAULT_SOC: f64 = 0.5;

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridSection>,
    #[serde(default)]
    units: Vec<UnitEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hierarchy: Option<HierarchySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    demand: Option<DemandSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objective: Option<ObjectiveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solver: Option<SolverSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<OutputSection>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    n_steps: Option<usize>,
    dt_hours: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct UnitEntry {
    id: Option<String>,
    p_max_mw: Option<f64>,
    capacity_mwh: Option<f64>,
    eta_chg: Option<f64>,
    eta_dch: Option<f64>,
    soc_initial: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct HierarchySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<AggregationMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    group_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nesting: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    groups: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<Vec<NodeSpec>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    ipf_constraints: BTreeMap<String, SeriesSource>,
}

/// A series given inline or as a CSV path.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SeriesSource {
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct DemandSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    /// `synthetic_day` or `random`.
    #[serde(skip_serializing_if = "Option::is_none")]
    profile: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Amplitude reference for generated profiles; defaults to fleet power.
    #[serde(skip_serializing_if = "Option::is_none")]
    scale_mw: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum ObjectiveKind {
    FlattenIpf,
    TrackDemand,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveSection {
    kind: ObjectiveKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<SeriesSource>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    rel_opt_tol: Option<f64>,
    abs_feas_tol: Option<f64>,
    max_bnb_nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relaxation_only: Option<bool>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    directory: Option<PathBuf>,
}

/// A loaded scenario together with its requested output directory.
#[derive(Debug, Clone)]
pub struct ScenarioDocument {
    pub scenario: Scenario,
    pub output_dir: Option<PathBuf>,
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Ok(load_scenario_document(path)?.scenario)
}

pub fn load_scenario_document(path: &Path) -> Result<ScenarioDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario(&text, path, base)
}

fn semantic(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parses scenario text; `path` is used for messages, `base` for CSV paths.
pub fn parse_scenario(text: &str, path: &Path, base: &Path) -> Result<ScenarioDocument> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| semantic(path, e.to_string()))?;

    let grid_section = file.grid.unwrap_or_default();
    let n_steps = grid_section.n_steps.unwrap_or_else(|| {
        info!("grid.n_steps not set, using {}", TimeGrid::DEFAULT_STEPS);
        TimeGrid::DEFAULT_STEPS
    });
    let dt_hours = grid_section.dt_hours.unwrap_or_else(|| {
        info!("grid.dt_hours not set, using {}", TimeGrid::DEFAULT_DT_HOURS);
        TimeGrid::DEFAULT_DT_HOURS
    });
    let grid = TimeGrid::new(n_steps, dt_hours)?;

    let mut units = Vec::with_capacity(file.units.len());
    for (i, entry) in file.units.into_iter().enumerate() {
        units.push(unit_from_entry(path, i, entry)?);
    }

    let load_series = |src: &SeriesSource, what: &str| -> Result<Timeseries> {
        match (&src.csv, &src.values) {
            (Some(csv), None) => super::load_timeseries_csv(&base.join(csv), &grid),
            (None, Some(values)) => {
                let ts = Timeseries::new(values.clone())?;
                ts.expect_len(n_steps, what)?;
                Ok(ts)
            }
            _ => Err(semantic(path, format!("{what}: give exactly one of `csv` or `values`"))),
        }
    };

    let hierarchy_section = file.hierarchy.unwrap_or_default();
    let hierarchy = hierarchy_from_section(path, &hierarchy_section)?;
    let mut ipf_constraints = BTreeMap::new();
    for (id, src) in &hierarchy_section.ipf_constraints {
        ipf_constraints.insert(id.clone(), load_series(src, &format!("ipf constraint '{id}'"))?);
    }

    let fleet_power: f64 = units.iter().map(|u| u.p_max).sum();
    let baseline_ipf = match file.demand {
        None => {
            info!("no [demand] section, using the synthetic day profile");
            synthetic_day(&grid, reference_power(fleet_power))
        }
        Some(d) => {
            let given = [d.csv.is_some(), d.values.is_some(), d.profile.is_some()];
            if given.iter().filter(|&&g| g).count() != 1 {
                return Err(semantic(path, "demand: give exactly one of `csv`, `values` or `profile`"));
            }
            let scale = d.scale_mw.unwrap_or_else(|| reference_power(fleet_power));
            match d.profile.as_deref() {
                Some("synthetic_day") => synthetic_day(&grid, scale),
                Some("random") => {
                    let seed = d
                        .seed
                        .ok_or_else(|| semantic(path, "demand: profile \"random\" requires `seed`"))?;
                    random_profile(&grid, scale, seed)
                }
                Some(other) => {
                    return Err(semantic(
                        path,
                        format!("demand: unknown profile \"{other}\" (expected synthetic_day or random)"),
                    ))
                }
                None => load_series(
                    &SeriesSource {
                        csv: d.csv,
                        values: d.values,
                    },
                    "demand",
                )?,
            }
        }
    };

    let root_objective = match file.objective {
        None => RootObjective::FlattenIpf,
        Some(o) => match (o.kind, &o.target) {
            (ObjectiveKind::FlattenIpf, None) => RootObjective::FlattenIpf,
            (ObjectiveKind::FlattenIpf, Some(_)) => {
                return Err(semantic(path, "objective: flatten_ipf takes no target"))
            }
            (ObjectiveKind::TrackDemand, Some(t)) => {
                RootObjective::TrackDemand(load_series(t, "objective target")?)
            }
            (ObjectiveKind::TrackDemand, None) => {
                return Err(semantic(path, "objective: track_demand requires a target"))
            }
        },
    };

    let defaults = SolverOptions::default();
    let solver = match file.solver {
        None => defaults,
        Some(s) => SolverOptions {
            rel_opt_tol: s.rel_opt_tol.unwrap_or(defaults.rel_opt_tol),
            abs_feas_tol: s.abs_feas_tol.unwrap_or(defaults.abs_feas_tol),
            max_bnb_nodes: s.max_bnb_nodes.unwrap_or(defaults.max_bnb_nodes),
            relaxation_only: s.relaxation_only,
        },
    };

    let scenario = Scenario {
        grid,
        units,
        baseline_ipf,
        hierarchy,
        ipf_constraints,
        root_objective,
        solver,
    };
    scenario.validate()?;
    // Catch hierarchy errors at load time rather than mid-run.
    if !scenario.units.is_empty() {
        scenario.tree()?;
    }
    Ok(ScenarioDocument {
        scenario,
        output_dir: file
            .output
            .and_then(|o| o.directory)
            .map(|d| base.join(d)),
    })
}

fn reference_power(fleet_power: f64) -> f64 {
    if fleet_power > 0.0 {
        fleet_power
    } else {
        1.0
    }
}

fn unit_from_entry(path: &Path, index: usize, entry: UnitEntry) -> Result<EssParams> {
    let id = entry
        .id
        .ok_or_else(|| semantic(path, format!("unit #{}: id required", index + 1)))?;
    let required = |v: Option<f64>, what: &str, key: &str| {
        v.ok_or_else(|| semantic(path, format!("unit '{id}': {what} required (key `{key}`)")))
    };
    let p_max = required(entry.p_max_mw, "power limit", "p_max_mw")?;
    let capacity = required(entry.capacity_mwh, "capacity", "capacity_mwh")?;
    let default = |v: Option<f64>, key: &str, value: f64| {
        v.unwrap_or_else(|| {
            info!("unit '{id}': {key} not set, using {value}");
            value
        })
    };
    let params = EssParams {
        eta_chg: default(entry.eta_chg, "eta_chg", DEFAULT_ETA),
        eta_dch: default(entry.eta_dch, "eta_dch", DEFAULT_ETA),
        soc_initial: default(entry.soc_initial, "soc_initial", DEFAULT_SOC),
        id: id.clone(),
        p_max,
        capacity,
    };
    params.validate()?;
    Ok(params)
}

fn hierarchy_from_section(path: &Path, h: &HierarchySection) -> Result<HierarchySpec> {
    let partition_keys = h.mode.is_some() || h.group_count.is_some() || h.nesting.is_some();
    match (&h.groups, &h.nodes) {
        (Some(_), Some(_)) => Err(semantic(path, "hierarchy: `groups` and `nodes` are exclusive")),
        (Some(_), None) | (None, Some(_)) if partition_keys => Err(semantic(
            path,
            "hierarchy: mode/group_count/nesting cannot be combined with explicit groups or nodes",
        )),
        (Some(groups), None) => Ok(HierarchySpec::Groups(groups.clone())),
        (None, Some(nodes)) => Ok(HierarchySpec::Nodes(nodes.clone())),
        (None, None) => {
            let mode = h.mode.unwrap_or_else(|| {
                info!("hierarchy.mode not set, using all_in_one");
                AggregationMode::AllInOne
            });
            let group_count = h.group_count.unwrap_or(match mode {
                AggregationMode::AllInOne => 1,
                _ => 2,
            });
            Ok(HierarchySpec::Partition {
                mode,
                group_count,
                nesting: h.nesting.clone().unwrap_or_default(),
            })
        }
    }
}

fn inline(ts: &Timeseries) -> SeriesSource {
    SeriesSource {
        csv: None,
        values: Some(ts.values().to_vec()),
    }
}

/// The scenario with every default and series written out, as TOML that
/// loads back into an identical scenario.
pub fn resolved_manifest(scenario: &Scenario) -> Result<String> {
    let mut hierarchy = HierarchySection {
        ipf_constraints: scenario
            .ipf_constraints
            .iter()
            .map(|(k, v)| (k.clone(), inline(v)))
            .collect(),
        ..Default::default()
    };
    match &scenario.hierarchy {
        HierarchySpec::Partition {
            mode,
            group_count,
            nesting,
        } => {
            hierarchy.mode = Some(*mode);
            hierarchy.group_count = Some(*group_count);
            hierarchy.nesting = Some(nesting.clone());
        }
        HierarchySpec::Groups(g) => hierarchy.groups = Some(g.clone()),
        HierarchySpec::Nodes(n) => hierarchy.nodes = Some(n.clone()),
    }
    let file = ScenarioFile {
        grid: Some(GridSection {
            n_steps: Some(scenario.grid.n_steps()),
            dt_hours: Some(scenario.grid.dt_hours()),
        }),
        units: scenario
            .units
            .iter()
            .map(|u| UnitEntry {
                id: Some(u.id.clone()),
                p_max_mw: Some(u.p_max),
                capacity_mwh: Some(u.capacity),
                eta_chg: Some(u.eta_chg),
                eta_dch: Some(u.eta_dch),
                soc_initial: Some(u.soc_initial),
            })
            .collect(),
        hierarchy: Some(hierarchy),
        demand: Some(DemandSection {
            values: Some(scenario.baseline_ipf.values().to_vec()),
            ..Default::default()
        }),
        objective: Some(match &scenario.root_objective {
            RootObjective::FlattenIpf => ObjectiveSection {
                kind: ObjectiveKind::FlattenIpf,
                target: None,
            },
            RootObjective::TrackDemand(t) => ObjectiveSection {
                kind: ObjectiveKind::TrackDemand,
                target: Some(inline(t)),
            },
        }),
        solver: Some(SolverSection {
            rel_opt_tol: Some(scenario.solver.rel_opt_tol),
            abs_feas_tol: Some(scenario.solver.abs_feas_tol),
            max_bnb_nodes: Some(scenario.solver.max_bnb_nodes),
            relaxation_only: scenario.solver.relaxation_only,
        }),
        output: None,
    };
    toml::to_string(&file).map_err(|e| Error::Invalid(format!("cannot serialise scenario: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioDocument> {
        parse_scenario(text, Path::new("test.toml"), Path::new("."))
    }

    const UNITS: &str = r#"
[[units]]
id = "fpu1"
p_max_mw = 1.3
capacity_mwh = 0.4

[[units]]
id = "fpu2"
p_max_mw = 0.7
capacity_mwh = 1.6
"#;

    #[test]
    fn defaults_are_applied() {
        let doc = parse(UNITS).unwrap();
        let s = doc.scenario;
        assert_eq!(s.grid, TimeGrid::default());
        assert_eq!(s.units[0].soc_initial, 0.5);
        assert_eq!(s.units[1].eta_dch, 1.0);
        assert_eq!(s.baseline_ipf, synthetic_day(&s.grid, 2.0));
        assert!(doc.output_dir.is_none());
    }

    #[test]
    fn missing_capacity_is_named() {
        let err = parse("[[units]]\nid = \"x\"\np_max_mw = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("capacity required"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse("[grid]\nn_step = 4\n").unwrap_err().to_string();
        assert!(err.contains("n_step"), "{err}");
        let err = parse(&format!("{UNITS}\n[hierarchy]\nmodes = \"homogeneous\"\n"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("modes"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse("[grid\nn_steps = 4\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn inline_demand_length_is_checked() {
        let err = parse(&format!("[grid]\nn_steps = 3\n{UNITS}\n[demand]\nvalues = [1.0, 2.0]\n"))
            .unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 3, found: 2, .. }), "{err}");
    }

    #[test]
    fn explicit_groups_and_conflicts() {
        let doc = parse(&format!("{UNITS}\n[hierarchy]\ngroups = [[\"fpu1\"], [\"fpu2\"]]\n")).unwrap();
        assert_eq!(
            doc.scenario.hierarchy,
            HierarchySpec::Groups(vec![vec!["fpu1".into()], vec!["fpu2".into()]])
        );
        let err = parse(&format!(
            "{UNITS}\n[hierarchy]\nmode = \"homogeneous\"\ngroups = [[\"fpu1\"], [\"fpu2\"]]\n"
        ));
        assert!(err.is_err());
        let err = parse(&format!("{UNITS}\n[hierarchy]\ngroups = [[\"fpu1\"], [\"nope\"]]\n"));
        assert!(err.unwrap_err().to_string().contains("nope"));
    }

    #[test]
    fn manifest_round_trips() {
        let text = format!(
            "[grid]\nn_steps = 4\ndt_hours = 0.5\n{UNITS}\n\
             [hierarchy]\nmode = \"heterogeneous\"\ngroup_count = 2\n\
             [hierarchy.ipf_constraints.root]\nvalues = [1.0, 0.5, 0.25, 0.1]\n\
             [demand]\nvalues = [0.1, -0.7, 1.0e-7, 3.3333333333333335]\n\
             [solver]\nmax_bnb_nodes = 50\n"
        );
        let first = parse(&text).unwrap().scenario;
        let manifest = resolved_manifest(&first).unwrap();
        let second = parse(&manifest).unwrap().scenario;
        assert_eq!(first.units, second.units);
        assert_eq!(first.grid, second.grid);
        assert_eq!(first.baseline_ipf, second.baseline_ipf);
        assert_eq!(first.hierarchy, second.hierarchy);
        assert_eq!(first.ipf_constraints, second.ipf_constraints);
        assert_eq!(first.solver, second.solver);
        assert_eq!(manifest, resolved_manifest(&second).unwrap());
    }
}
