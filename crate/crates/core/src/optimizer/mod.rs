//! Quadratic dispatch of one or many storage units.
//!
//! Two objectives share the same algebra. Tracking minimises
//! `sum_t (target_t - flex_t)^2` with `flex = -sum_u p_net`; flattening
//! minimises `sum_t (baseline_t + sum_u p_net)^2`. Both are solved as a
//! convex QP without the charge/discharge binaries. With ideal efficiencies
//! the relaxation is exact; otherwise [`bnb`] branches on the pairs that
//! charge and discharge at once.
//!
//! A regulariser `REGULARIZATION * sum (p_chg^2 + p_dch^2)` picks a unique
//! split among units whose summed power is all the objective sees. Reported
//! objective values exclude it.

mod bnb;
mod oracle;
mod qp;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EssParams, Schedule, TimeGrid, Timeseries, FEASIBILITY_TOL};

pub use oracle::{brute_force_oracle, power_levels, OracleResult};

use qp::{AggColumn, IpmSettings, QpSolution, StructuredQp, UnitBlock};

/// Weight of the tie-breaking term on squared charge/discharge powers.
pub const REGULARIZATION: f64 = 1e-6;

/// Powers below this are treated as zero when testing complementarity.
pub(crate) const COMPLEMENTARITY_TOL: f64 = 1e-7;

/// Interior-point residue below this many MW is set to exactly zero.
const SNAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Follow a requested flexibility series (MW, positive = less consumption).
    Tracking(Timeseries),
    /// Flatten the interconnection flow `baseline + sum p_net`.
    FlattenIpf(Timeseries),
}

impl Objective {
    fn series(&self) -> &Timeseries {
        match self {
            Objective::Tracking(s) | Objective::FlattenIpf(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SolverOptions {
    pub rel_opt_tol: f64,
    pub abs_feas_tol: f64,
    pub max_bnb_nodes: usize,
    /// `None` means: relax iff every unit has ideal efficiencies.
    pub relaxation_only: Option<bool>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_opt_tol: 1e-6,
            abs_feas_tol: 1e-8,
            max_bnb_nodes: 10_000,
            relaxation_only: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_opt_tol > 0.0 && self.abs_feas_tol > 0.0) {
            return Err(Error::Invalid("solver tolerances must be positive".into()));
        }
        if self.max_bnb_nodes == 0 {
            return Err(Error::Invalid("max_bnb_nodes must be at least 1".into()));
        }
        Ok(())
    }

    fn ipm(&self) -> IpmSettings {
        IpmSettings {
            max_iter: 200,
            tight_feas: 1e-10,
            tight_gap: 1e-24,
            loose_feas: self.abs_feas_tol,
            loose_gap: self.rel_opt_tol,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DispatchProblem {
    pub grid: TimeGrid,
    pub units: Vec<EssParams>,
    pub objective: Objective,
    /// Upper bound on the summed net power per step.
    pub coupling: Option<Timeseries>,
    pub options: SolverOptions,
}

impl DispatchProblem {
    pub fn new(grid: TimeGrid, units: Vec<EssParams>, objective: Objective) -> Self {
        Self {
            grid,
            units,
            objective,
            coupling: None,
            options: SolverOptions::default(),
        }
    }

    pub fn with_coupling(mut self, bound: Timeseries) -> Self {
        self.coupling = Some(bound);
        self
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() {
            return Err(Error::Invalid("dispatch problem needs at least one unit".into()));
        }
        for u in &self.units {
            u.validate()?;
        }
        let n = self.grid.n_steps();
        self.objective.series().expect_len(n, "objective series")?;
        if let Some(c) = &self.coupling {
            c.expect_len(n, "coupling constraint")?;
        }
        self.options.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Branch-and-bound stopped at the node limit; the incumbent is returned.
    NodeLimit,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolverStats {
    pub qp_solves: usize,
    pub ipm_iterations: usize,
    pub bnb_nodes: usize,
    /// Solves that stopped at the branch-and-bound node limit.
    pub node_limited: usize,
}

impl std::ops::AddAssign for SolverStats {
    fn add_assign(&mut self, rhs: Self) {
        self.qp_solves += rhs.qp_solves;
        self.ipm_iterations += rhs.ipm_iterations;
        self.bnb_nodes += rhs.bnb_nodes;
        self.node_limited += rhs.node_limited;
    }
}

#[derive(Debug, Clone)]
pub struct DispatchSolution {
    pub schedules: Vec<Schedule>,
    pub objective_value: f64,
    pub status: SolveStatus,
    pub summed_net: Timeseries,
    pub stats: SolverStats,
}

/// Objective value as a function of the summed net power only.
pub fn objective_of_sum(objective: &Objective, summed_net: &[f64]) -> f64 {
    match objective {
        Objective::Tracking(target) => target
            .iter()
            .zip(summed_net)
            .map(|(t, s)| {
                let flex = -s;
                (t - flex) * (t - flex)
            })
            .sum(),
        Objective::FlattenIpf(baseline) => baseline
            .iter()
            .zip(summed_net)
            .map(|(b, s)| (b + s) * (b + s))
            .sum(),
    }
}

pub fn summed_net(n: usize, schedules: &[Schedule]) -> Timeseries {
    Timeseries::sum_of(n, schedules.iter().map(|s| &s.p_net))
}

pub fn evaluate_objective(problem: &DispatchProblem, schedules: &[Schedule]) -> Result<f64> {
    let n = problem.grid.n_steps();
    problem.objective.series().expect_len(n, "objective series")?;
    if schedules.len() != problem.units.len() {
        return Err(Error::length("schedules", problem.units.len(), schedules.len()));
    }
    for s in schedules {
        s.p_net.expect_len(n, "schedule")?;
    }
    Ok(objective_of_sum(&problem.objective, &summed_net(n, schedules)))
}

/// Solves a dispatch problem.
///
/// Fails with [`Error::Infeasible`] only when the coupling bound cannot be met
/// by any combination of unit schedules.
pub fn solve(problem: &DispatchProblem) -> Result<DispatchSolution> {
    problem.validate()?;
    let grid = problem.grid;
    let opts = &problem.options;

    // Units without power cannot move; keep them out of the QP.
    let active: Vec<usize> = (0..problem.units.len())
        .filter(|&i| problem.units[i].p_max > 0.0)
        .collect();
    let mut stats = SolverStats::default();

    if let Some(bound) = &problem.coupling {
        let total_p: f64 = active.iter().map(|&i| problem.units[i].p_max).sum();
        if let Some(k) = bound.iter().position(|&b| b < -total_p - FEASIBILITY_TOL) {
            return Err(Error::Infeasible(format!(
                "coupling bound {} at step {k} is below the fleet discharge limit {}",
                bound[k], -total_p
            )));
        }
        if bound.iter().any(|&b| b < 0.0) {
            let (violation, s) = phase_one(problem, &active, bound)?;
            stats += s;
            if violation > FEASIBILITY_TOL {
                return Err(Error::Infeasible(format!(
                    "coupling bound cannot be met; smallest achievable excess {violation:.3e} MW"
                )));
            }
        }
    }

    if active.is_empty() {
        let schedules: Vec<Schedule> =
            problem.units.iter().map(|u| Schedule::idle(u, &grid)).collect();
        return Ok(finish(problem, schedules, SolveStatus::Optimal, stats));
    }

    let qp = build_qp(problem, &active);
    let relax = opts
        .relaxation_only
        .unwrap_or_else(|| active.iter().all(|&i| problem.units[i].is_lossless()));

    let (qp, sol, status) = if relax {
        let sol = qp::solve_qp(&qp, &opts.ipm())?;
        stats.qp_solves += 1;
        stats.ipm_iterations += sol.iterations;
        (qp, sol, SolveStatus::Optimal)
    } else {
        let out = bnb::branch_and_bound(qp, opts)?;
        stats += out.stats;
        (out.qp, out.solution, out.status)
    };

    let schedules = extract_schedules(problem, &active, &qp, &sol)?;
    Ok(finish(problem, schedules, status, stats))
}

fn finish(
    problem: &DispatchProblem,
    schedules: Vec<Schedule>,
    status: SolveStatus,
    stats: SolverStats,
) -> DispatchSolution {
    let summed = summed_net(problem.grid.n_steps(), &schedules);
    DispatchSolution {
        objective_value: objective_of_sum(&problem.objective, &summed),
        schedules,
        status,
        summed_net: summed,
        stats,
    }
}

fn unit_blocks(problem: &DispatchProblem, active: &[usize]) -> Vec<UnitBlock> {
    let n = problem.grid.n_steps();
    active
        .iter()
        .map(|&i| {
            let u = &problem.units[i];
            UnitBlock {
                p_max: u.p_max,
                capacity: u.capacity,
                eta_chg: u.eta_chg,
                eta_dch: u.eta_dch,
                e0: u.initial_energy(),
                fix_chg: vec![false; n],
                fix_dch: vec![false; n],
            }
        })
        .collect()
}

fn build_qp(problem: &DispatchProblem, active: &[usize]) -> StructuredQp {
    let target = problem.objective.series();
    // Both objectives read (b_t + s_t)^2 with s the summed net power.
    StructuredQp {
        n: problem.grid.n_steps(),
        dt: problem.grid.dt_hours(),
        reg: REGULARIZATION,
        units: unit_blocks(problem, active),
        aggs: vec![AggColumn {
            hess: 2.0,
            lin: target.iter().map(|b| 2.0 * b).collect(),
            lower: None,
            upper: problem.coupling.as_ref().map(|c| c.values().to_vec()),
            coef: -1.0,
        }],
        constant: target.sum_squares(),
    }
}

/// Minimises the squared excess of the summed net power over the coupling
/// bound. Returns the largest remaining excess.
fn phase_one(
    problem: &DispatchProblem,
    active: &[usize],
    bound: &Timeseries,
) -> Result<(f64, SolverStats)> {
    let n = problem.grid.n_steps();
    let total_p: f64 = active.iter().map(|&i| problem.units[i].p_max).sum();
    let qp = StructuredQp {
        n,
        dt: problem.grid.dt_hours(),
        reg: REGULARIZATION,
        units: unit_blocks(problem, active),
        aggs: vec![
            // s <= bound, sum p_net - s - v = 0, minimise v^2.
            AggColumn {
                hess: 0.0,
                lin: vec![0.0; n],
                lower: Some(vec![-total_p - 1.0; n]),
                upper: Some(bound.values().to_vec()),
                coef: -1.0,
            },
            AggColumn {
                hess: 2.0,
                lin: vec![0.0; n],
                lower: None,
                upper: None,
                coef: -1.0,
            },
        ],
        constant: 0.0,
    };
    let sol = qp::solve_qp(&qp, &problem.options.ipm())?;
    let excess = (0..n).map(|k| sol.agg(&qp, 1, k)).fold(0.0, f64::max);
    Ok((
        excess,
        SolverStats {
            qp_solves: 1,
            ipm_iterations: sol.iterations,
            ..SolverStats::default()
        },
    ))
}

/// Turns an interior-point solution into exact schedules: clips powers to
/// their bounds, collapses simultaneous charge/discharge into one direction
/// without changing the stored energy, and propagates the SoC.
fn extract_schedules(
    problem: &DispatchProblem,
    active: &[usize],
    qp: &StructuredQp,
    sol: &QpSolution,
) -> Result<Vec<Schedule>> {
    let grid = problem.grid;
    let n = grid.n_steps();
    let mut schedules: Vec<Schedule> =
        problem.units.iter().map(|u| Schedule::idle(u, &grid)).collect();
    for (slot, &i) in active.iter().enumerate() {
        let unit = &problem.units[i];
        let block = &qp.units[slot];
        let mut p_chg = vec![0.0; n];
        let mut p_dch = vec![0.0; n];
        for k in 0..n {
            let mut c = if block.fix_chg[k] {
                0.0
            } else {
                sol.p_chg(qp, slot, k).clamp(0.0, unit.p_max)
            };
            let mut d = if block.fix_dch[k] {
                0.0
            } else {
                sol.p_dch(qp, slot, k).clamp(0.0, unit.p_max)
            };
            if c > 0.0 && d > 0.0 {
                let increment = c * unit.eta_chg - d / unit.eta_dch;
                if increment >= 0.0 {
                    c = increment / unit.eta_chg;
                    d = 0.0;
                } else {
                    d = -increment * unit.eta_dch;
                    c = 0.0;
                }
            }
            p_chg[k] = if c < SNAP_TOL { 0.0 } else { c };
            p_dch[k] = if d < SNAP_TOL { 0.0 } else { d };
        }
        schedules[i] = Schedule::from_powers(
            unit,
            &grid,
            Timeseries::new(p_chg)?,
            Timeseries::new(p_dch)?,
        )?;
    }
    Ok(schedules)
}
