//! Monolithic and hierarchical coordination runs.
//!
//! The hierarchical run aggregates bottom-up, lets the root plan against its
//! children's virtual units and passes each child its planned flexibility as a
//! request. Every aggregator tracks its request as well as it can; there is
//! no feedback to the parent. Sibling subtrees are solved in parallel and the
//! results are collected in tree order, so runs are deterministic.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::{
    build_tree, partition, AggregationMode, AggregatorTree, Child, NodeSpec,
};
use crate::error::{Error, Result};
use crate::metrics::{aggregation_efficiency, aggregation_error, Metrics};
use crate::model::{EssParams, Schedule, TimeGrid, Timeseries};
use crate::optimizer::{
    objective_of_sum, solve, DispatchProblem, Objective, SolverOptions, SolverStats,
};

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootObjective {
    /// Minimise the squared interconnection power flow.
    FlattenIpf,
    /// Follow a requested flexibility series at the interconnection.
    TrackDemand(Timeseries),
}

/// How the aggregator tree is derived.
#[derive(Debug, Clone, PartialEq)]
pub enum HierarchySpec {
    /// Partition by PtE ratio, with optional nesting fanouts above the groups.
    Partition {
        mode: AggregationMode,
        group_count: usize,
        nesting: Vec<usize>,
    },
    /// Explicit groups of unit ids below a common root.
    Groups(Vec<Vec<String>>),
    /// Fully explicit tree.
    Nodes(Vec<NodeSpec>),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: TimeGrid,
    pub units: Vec<EssParams>,
    /// Interconnection flow of the non-flexible demand and generation.
    pub baseline_ipf: Timeseries,
    pub hierarchy: HierarchySpec,
    /// Per-node upper bounds on summed net power, keyed by node id.
    pub ipf_constraints: BTreeMap<String, Timeseries>,
    pub root_objective: RootObjective,
    pub solver: SolverOptions,
}

impl Scenario {
    pub fn new(grid: TimeGrid, units: Vec<EssParams>, baseline_ipf: Timeseries) -> Self {
        Self {
            grid,
            units,
            baseline_ipf,
            hierarchy: HierarchySpec::Partition {
                mode: AggregationMode::AllInOne,
                group_count: 1,
                nesting: Vec::new(),
            },
            ipf_constraints: BTreeMap::new(),
            root_objective: RootObjective::FlattenIpf,
            solver: SolverOptions::default(),
        }
    }

    pub fn with_partition(mut self, mode: AggregationMode, group_count: usize) -> Self {
        self.hierarchy = HierarchySpec::Partition {
            mode,
            group_count,
            nesting: Vec::new(),
        };
        self
    }

    pub fn with_groups(mut self, groups: Vec<Vec<String>>) -> Self {
        self.hierarchy = HierarchySpec::Groups(groups);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n_steps();
        self.baseline_ipf.expect_len(n, "baseline demand")?;
        for u in &self.units {
            u.validate()?;
        }
        let mut ids: Vec<&str> = self.units.iter().map(|u| u.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Invalid(format!("duplicate unit id '{}'", w[0])));
        }
        for (id, c) in &self.ipf_constraints {
            c.expect_len(n, &format!("ipf constraint of '{id}'"))?;
        }
        if let RootObjective::TrackDemand(t) = &self.root_objective {
            t.expect_len(n, "root tracking target")?;
        }
        self.solver.validate()
    }

    /// Objective applied to the summed net power of all units.
    pub fn objective(&self) -> Objective {
        match &self.root_objective {
            RootObjective::FlattenIpf => Objective::FlattenIpf(self.baseline_ipf.clone()),
            RootObjective::TrackDemand(t) => Objective::Tracking(t.clone()),
        }
    }

    /// Builds the aggregator tree and attaches the node constraints.
    pub fn tree(&self) -> Result<AggregatorTree> {
        let mut tree = match &self.hierarchy {
            HierarchySpec::Partition {
                mode,
                group_count,
                nesting,
            } => {
                let groups = partition(&self.units, *mode, *group_count)?;
                build_tree(self.units.clone(), &groups, nesting)?
            }
            HierarchySpec::Groups(groups) => {
                let index: BTreeMap<&str, usize> = self
                    .units
                    .iter()
                    .enumerate()
                    .map(|(i, u)| (u.id.as_str(), i))
                    .collect();
                let groups = groups
                    .iter()
                    .map(|g| {
                        g.iter()
                            .map(|id| {
                                index.get(id.as_str()).copied().ok_or_else(|| {
                                    Error::Invalid(format!("group references unknown unit '{id}'"))
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                build_tree(self.units.clone(), &groups, &[])?
            }
            HierarchySpec::Nodes(specs) => AggregatorTree::from_specs(self.units.clone(), specs)?,
        };
        for (id, bound) in &self.ipf_constraints {
            tree.set_constraint(id, bound.clone())?;
        }
        Ok(tree)
    }

    fn root_constraint(&self, tree: Option<&AggregatorTree>) -> Option<Timeseries> {
        match tree {
            Some(t) => t.root_node().ipf_constraint.clone(),
            None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Monolithic,
    Hierarchical,
    Both,
}

impl RunMode {
    fn monolithic(self) -> bool {
        matches!(self, RunMode::Monolithic | RunMode::Both)
    }

    fn hierarchical(self) -> bool {
        matches!(self, RunMode::Hierarchical | RunMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitSchedule {
    pub id: String,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonolithicRun {
    pub ipf: Timeseries,
    /// One schedule per scenario unit, in scenario order.
    pub schedules: Vec<UnitSchedule>,
    pub objective: f64,
    pub stats: SolverStats,
}

/// What one aggregator was asked for and what it achieved. All series are
/// flexibility (positive = less consumption).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub requested: Timeseries,
    /// Sum of the child plans of this node's own solve.
    pub planned: Timeseries,
    /// Realised flexibility of all leaf units below the node.
    pub delivered: Timeseries,
    /// `None` when the request is all zero.
    pub epsilon: Option<f64>,
    /// `sum (requested - planned)^2` as returned by the node's solve.
    pub tracking_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalRun {
    pub ipf_planned: Timeseries,
    pub ipf_realized: Timeseries,
    pub per_aggregator: BTreeMap<String, NodeReport>,
    pub root_id: String,
    pub schedules: Vec<UnitSchedule>,
    pub objective_planned: f64,
    pub objective_realized: f64,
    pub stats: SolverStats,
}

impl HierarchicalRun {
    pub fn root_report(&self) -> &NodeReport {
        &self.per_aggregator[&self.root_id]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub ipf_baseline: Timeseries,
    pub monolithic: Option<MonolithicRun>,
    pub hierarchical: Option<HierarchicalRun>,
    pub metrics: Metrics,
}

fn ipf_of(baseline: &Timeseries, schedules: &[UnitSchedule]) -> Timeseries {
    let n = baseline.len();
    baseline.add(&Timeseries::sum_of(n, schedules.iter().map(|s| &s.schedule.p_net)))
}

fn flex_of(n: usize, schedules: &[UnitSchedule]) -> Timeseries {
    Timeseries::sum_of(n, schedules.iter().map(|s| &s.schedule.p_net)).neg()
}

/// One optimisation over every unit with full information.
pub fn run_monolithic(scenario: &Scenario) -> Result<MonolithicRun> {
    scenario.validate()?;
    let n = scenario.grid.n_steps();
    let objective = scenario.objective();
    if scenario.units.is_empty() {
        return Ok(MonolithicRun {
            ipf: scenario.baseline_ipf.clone(),
            schedules: Vec::new(),
            objective: objective_of_sum(&objective, &vec![0.0; n]),
            stats: SolverStats::default(),
        });
    }
    // Only the interconnection bound applies; inner nodes do not exist here.
    let tree = if scenario.ipf_constraints.is_empty() {
        None
    } else {
        Some(scenario.tree()?)
    };
    let mut problem = DispatchProblem::new(scenario.grid, scenario.units.clone(), objective)
        .with_options(scenario.solver.clone());
    problem.coupling = scenario.root_constraint(tree.as_ref());
    let sol = solve(&problem)?;
    let schedules: Vec<UnitSchedule> = scenario
        .units
        .iter()
        .zip(sol.schedules)
        .map(|(u, s)| UnitSchedule {
            id: u.id.clone(),
            schedule: s,
        })
        .collect();
    Ok(MonolithicRun {
        ipf: ipf_of(&scenario.baseline_ipf, &schedules),
        schedules,
        objective: sol.objective_value,
        stats: sol.stats,
    })
}

/// Result of one aggregator's tracking solve.
#[derive(Debug, Clone)]
pub struct Disaggregation {
    /// Planned flexibility per child, in child order.
    pub child_requests: Vec<Timeseries>,
    pub child_schedules: Vec<Schedule>,
    /// Sum of the child plans.
    pub planned: Timeseries,
    pub tracking_objective: f64,
    pub stats: SolverStats,
}

/// Tracks `request` (flexibility) with the children of `node`, honouring the
/// node's own constraint.
pub fn disaggregate_node(
    tree: &AggregatorTree,
    node: usize,
    request: &Timeseries,
    grid: TimeGrid,
    options: &SolverOptions,
) -> Result<Disaggregation> {
    request.expect_len(grid.n_steps(), "request")?;
    let mut problem = DispatchProblem::new(
        grid,
        tree.children_params(node),
        Objective::Tracking(request.clone()),
    )
    .with_options(options.clone());
    problem.coupling = tree.node(node).ipf_constraint.clone();
    let sol = solve(&problem)?;
    Ok(Disaggregation {
        child_requests: sol.schedules.iter().map(Schedule::flexibility).collect(),
        child_schedules: sol.schedules,
        planned: sol.summed_net.neg(),
        tracking_objective: sol.objective_value,
        stats: sol.stats,
    })
}

/// Outcome of a subtree: leaf schedules and node reports without the
/// delivered series, which need the whole subtree.
#[derive(Default)]
struct SubtreeOutcome {
    leaves: Vec<(usize, Schedule)>,
    plans: Vec<(usize, Timeseries, Timeseries, f64)>,
    stats: SolverStats,
}

impl SubtreeOutcome {
    fn absorb(&mut self, other: SubtreeOutcome) {
        self.leaves.extend(other.leaves);
        self.plans.extend(other.plans);
        self.stats += other.stats;
    }
}

/// A node with a single child and no constraint of its own has nothing to
/// split: its virtual unit equals the child, so the parent's schedule is
/// handed down unchanged.
fn pass_through(
    tree: &AggregatorTree,
    node: usize,
    request: &Timeseries,
    schedule: Schedule,
) -> Option<Disaggregation> {
    let n = tree.node(node);
    if n.children.len() != 1 || n.ipf_constraint.is_some() {
        return None;
    }
    Some(Disaggregation {
        child_requests: vec![request.clone()],
        child_schedules: vec![schedule],
        planned: request.clone(),
        tracking_objective: 0.0,
        stats: SolverStats::default(),
    })
}

/// Distributes a node's solve result to its children, recursing in parallel.
fn distribute(
    tree: &AggregatorTree,
    node: usize,
    dis: Disaggregation,
    grid: TimeGrid,
    options: &SolverOptions,
) -> Result<SubtreeOutcome> {
    let mut out = SubtreeOutcome {
        stats: dis.stats,
        ..Default::default()
    };
    let mut subtrees = Vec::new();
    for ((&child, request), schedule) in tree.node(node)
        .children
        .iter()
        .zip(dis.child_requests)
        .zip(dis.child_schedules)
    {
        match child {
            Child::Unit(u) => out.leaves.push((u, schedule)),
            Child::Node(m) => subtrees.push((m, request, schedule)),
        }
    }
    let results: Vec<Result<SubtreeOutcome>> = subtrees
        .into_par_iter()
        .map(|(m, request, schedule)| {
            let dis = match pass_through(tree, m, &request, schedule) {
                Some(dis) => dis,
                None => disaggregate_node(tree, m, &request, grid, options)?,
            };
            let plan = (m, request, dis.planned.clone(), dis.tracking_objective);
            let mut sub = distribute(tree, m, dis, grid, options)?;
            sub.plans.insert(0, plan);
            Ok(sub)
        })
        .collect();
    for r in results {
        out.absorb(r?);
    }
    Ok(out)
}

/// Top-down coordination through the aggregator tree.
pub fn run_hierarchical(scenario: &Scenario) -> Result<HierarchicalRun> {
    scenario.validate()?;
    let grid = scenario.grid;
    let n = grid.n_steps();
    let objective = scenario.objective();
    if scenario.units.is_empty() {
        let zero = Timeseries::zeros(n);
        let report = NodeReport {
            requested: zero.clone(),
            planned: zero.clone(),
            delivered: zero,
            epsilon: None,
            tracking_objective: 0.0,
        };
        let obj = objective_of_sum(&objective, &vec![0.0; n]);
        return Ok(HierarchicalRun {
            ipf_planned: scenario.baseline_ipf.clone(),
            ipf_realized: scenario.baseline_ipf.clone(),
            per_aggregator: BTreeMap::from([(crate::aggregation::ROOT_ID.to_string(), report)]),
            root_id: crate::aggregation::ROOT_ID.into(),
            schedules: Vec::new(),
            objective_planned: obj,
            objective_realized: obj,
            stats: SolverStats::default(),
        });
    }

    let tree = scenario.tree()?;
    let root = tree.root();
    let mut problem = DispatchProblem::new(grid, tree.children_params(root), objective.clone())
        .with_options(scenario.solver.clone());
    problem.coupling = tree.root_node().ipf_constraint.clone();
    let sol = solve(&problem)?;
    let root_planned_net = sol.summed_net.clone();
    let root_dis = Disaggregation {
        child_requests: sol.schedules.iter().map(Schedule::flexibility).collect(),
        child_schedules: sol.schedules,
        planned: root_planned_net.neg(),
        tracking_objective: 0.0,
        stats: sol.stats,
    };
    let root_planned_flex = root_dis.planned.clone();
    let outcome = distribute(&tree, root, root_dis, grid, &scenario.solver)?;

    let mut by_unit: Vec<Option<Schedule>> = vec![None; scenario.units.len()];
    for (u, s) in outcome.leaves {
        by_unit[u] = Some(s);
    }
    let schedules: Vec<UnitSchedule> = scenario
        .units
        .iter()
        .zip(by_unit)
        .map(|(u, s)| UnitSchedule {
            id: u.id.clone(),
            schedule: s.expect("every unit sits below the root"),
        })
        .collect();

    let delivered_of = |node: usize| {
        Timeseries::sum_of(
            n,
            tree.leaf_units(node).iter().map(|&u| &schedules[u].schedule.p_net),
        )
        .neg()
    };
    let report = |requested: Timeseries, planned: Timeseries, delivered: Timeseries, tracking: f64| {
        NodeReport {
            epsilon: aggregation_error(&requested, &delivered).ok(),
            requested,
            planned,
            delivered,
            tracking_objective: tracking,
        }
    };

    let mut per_aggregator = BTreeMap::new();
    let realized_flex = delivered_of(root);
    let root_tracking: f64 = root_planned_flex
        .iter()
        .zip(realized_flex.iter())
        .map(|(p, d)| (p - d) * (p - d))
        .sum();
    per_aggregator.insert(
        tree.root_node().id.clone(),
        report(root_planned_flex.clone(), root_planned_flex.clone(), realized_flex, root_tracking),
    );
    for (node, requested, planned, tracking) in outcome.plans {
        per_aggregator.insert(
            tree.node(node).id.clone(),
            report(requested, planned, delivered_of(node), tracking),
        );
    }

    let ipf_planned = scenario.baseline_ipf.add(&root_planned_net);
    let ipf_realized = ipf_of(&scenario.baseline_ipf, &schedules);
    let realized_net = Timeseries::sum_of(n, schedules.iter().map(|s| &s.schedule.p_net));
    Ok(HierarchicalRun {
        objective_planned: objective_of_sum(&objective, &root_planned_net),
        objective_realized: objective_of_sum(&objective, &realized_net),
        ipf_planned,
        ipf_realized,
        per_aggregator,
        root_id: tree.root_node().id.clone(),
        schedules,
        stats: outcome.stats,
    })
}

/// Runs the requested schemes and derives the comparison metrics.
pub fn run(scenario: &Scenario, mode: RunMode) -> Result<RunResult> {
    let n = scenario.grid.n_steps();
    let monolithic = if mode.monolithic() {
        Some(run_monolithic(scenario)?)
    } else {
        None
    };
    let hierarchical = if mode.hierarchical() {
        Some(run_hierarchical(scenario)?)
    } else {
        None
    };
    let mut metrics = Metrics {
        objective_monolithic: monolithic.as_ref().map(|m| m.objective),
        objective_hierarchical_planned: hierarchical.as_ref().map(|h| h.objective_planned),
        objective_hierarchical: hierarchical.as_ref().map(|h| h.objective_realized),
        ..Default::default()
    };
    if let Some(h) = &hierarchical {
        metrics.epsilon_agg = h.root_report().epsilon;
    }
    if let (Some(m), Some(h)) = (&monolithic, &hierarchical) {
        metrics.eta_agg = aggregation_efficiency(&flex_of(n, &h.schedules), &flex_of(n, &m.schedules))?;
    }
    Ok(RunResult {
        ipf_baseline: scenario.baseline_ipf.clone(),
        monolithic,
        hierarchical,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_feasibility, FEASIBILITY_TOL};

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(n, 0.25).unwrap()
    }

    fn table_units(spec: &[(f64, f64)]) -> Vec<EssParams> {
        spec.iter()
            .enumerate()
            .map(|(i, &(p, c))| EssParams::ideal(format!("fpu{}", i + 1), p, c, 0.5))
            .collect()
    }

    fn wave(n: usize, amp: f64) -> Timeseries {
        Timeseries::from_fn(n, |k| amp * (k as f64 * 0.7).sin() + 0.3 * amp)
    }

    #[test]
    fn no_units_leaves_baseline() {
        let s = Scenario::new(grid(4), Vec::new(), wave(4, 1.0));
        let r = run(&s, RunMode::Both).unwrap();
        assert_eq!(r.monolithic.as_ref().unwrap().ipf, s.baseline_ipf);
        assert_eq!(r.hierarchical.as_ref().unwrap().ipf_realized, s.baseline_ipf);
        assert_eq!(r.metrics.eta_agg, None);
    }

    #[test]
    fn zero_baseline_gives_zero_dispatch() {
        let s = Scenario::new(grid(4), table_units(&[(1.3, 0.4), (0.7, 1.6)]), Timeseries::zeros(4));
        let r = run(&s, RunMode::Both).unwrap();
        let m = r.monolithic.unwrap();
        assert!(m.objective < 1e-12);
        assert_eq!(r.metrics.eta_agg, None);
        assert_eq!(r.metrics.epsilon_agg, None);
    }

    #[test]
    fn single_group_matches_monolithic() {
        let s = Scenario::new(grid(8), table_units(&[(1.3, 0.4), (0.7, 1.6), (1.0, 0.5)]), wave(8, 2.0));
        let r = run(&s, RunMode::Both).unwrap();
        let (m, h) = (r.monolithic.unwrap(), r.hierarchical.unwrap());
        assert_eq!(m.ipf, h.ipf_realized);
        assert_eq!(m.ipf, h.ipf_planned);
    }

    #[test]
    fn homogeneous_groups_are_lossless() {
        let units = table_units(&[(1.3, 0.4), (1.3, 0.4), (0.7, 1.6), (0.7, 1.6)]);
        let s = Scenario::new(grid(12), units, wave(12, 3.0)).with_partition(AggregationMode::Homogeneous, 2);
        let r = run(&s, RunMode::Both).unwrap();
        let h = r.hierarchical.as_ref().unwrap();
        assert!(r.metrics.epsilon_agg.unwrap() <= 1e-6);
        assert!((r.metrics.eta_agg.unwrap() - 1.0).abs() < 1e-4);
        assert!(h.ipf_realized.max_abs_diff(&r.monolithic.unwrap().ipf) < 1e-4);
        for (u, us) in s.units.iter().zip(&h.schedules) {
            assert!(check_feasibility(u, &s.grid, &us.schedule, FEASIBILITY_TOL).is_empty());
        }
    }

    #[test]
    fn delivered_is_sum_of_children() {
        let units = table_units(&[(1.3, 0.4), (0.7, 1.6), (1.3, 0.4), (0.7, 1.6)]);
        let s = Scenario::new(grid(10), units, wave(10, 4.0)).with_partition(AggregationMode::Heterogeneous, 2);
        let h = run_hierarchical(&s).unwrap();
        let g1 = &h.per_aggregator["g1"];
        let g2 = &h.per_aggregator["g2"];
        let root = h.root_report();
        assert!(root.delivered.max_abs_diff(&g1.delivered.add(&g2.delivered)) < 1e-9);
        // Leaf-level nodes: error times request norm is the tracking objective.
        for r in [g1, g2] {
            if let Some(e) = r.epsilon {
                let lhs = e * r.requested.sum_squares();
                assert!((lhs - r.tracking_objective).abs() <= 1e-9 * r.tracking_objective.max(1e-300));
            }
        }
    }
}
