//! Best-first branch-and-bound over the charge/discharge exclusivity.
//!
//! Each node is the convex relaxation with some powers pinned to zero. A node
//! whose relaxation never charges and discharges in the same step is a valid
//! mixed-integer solution.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::warn;

use crate::error::{Error, Result};

use super::qp::{self, QpSolution, StructuredQp};
use super::{SolveStatus, SolverOptions, SolverStats, COMPLEMENTARITY_TOL};

pub(crate) struct BnbOutcome {
    pub qp: StructuredQp,
    pub solution: QpSolution,
    pub status: SolveStatus,
    pub stats: SolverStats,
}

struct Node {
    bound: f64,
    seq: usize,
    qp: StructuredQp,
    solution: QpSolution,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Reversed so the max-heap pops the smallest bound, then the oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// The (unit, step) with the largest simultaneous charge and discharge.
fn branching_pair(qp: &StructuredQp, sol: &QpSolution) -> Option<(usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for u in 0..qp.units.len() {
        for k in 0..qp.n {
            let overlap = sol.p_chg(qp, u, k).min(sol.p_dch(qp, u, k));
            if overlap > COMPLEMENTARITY_TOL && best.is_none_or(|(b, _, _)| overlap > b) {
                best = Some((overlap, u, k));
            }
        }
    }
    best.map(|(_, u, k)| (u, k))
}

/// Lower objective wins; exact ties go to the lexicographically smaller
/// solution vector so the result does not depend on exploration order.
fn improves(candidate: &QpSolution, incumbent: Option<&QpSolution>) -> bool {
    let Some(inc) = incumbent else {
        return true;
    };
    match candidate.objective.total_cmp(&inc.objective) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => candidate
            .x
            .iter()
            .zip(&inc.x)
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            == Some(Ordering::Less),
    }
}

struct Search<'a> {
    opts: &'a SolverOptions,
    stats: SolverStats,
}

impl Search<'_> {
    fn relax(&mut self, qp: &StructuredQp) -> Result<QpSolution> {
        let sol = qp::solve_qp(qp, &self.opts.ipm())?;
        self.stats.qp_solves += 1;
        self.stats.ipm_iterations += sol.iterations;
        Ok(sol)
    }

    /// Repeatedly keeps the dominant direction of every overlapping pair.
    fn dive(&mut self, mut qp: StructuredQp, mut sol: QpSolution) -> Option<(StructuredQp, QpSolution)> {
        loop {
            let mut changed = false;
            for u in 0..qp.units.len() {
                for k in 0..qp.n {
                    let (c, d) = (sol.p_chg(&qp, u, k), sol.p_dch(&qp, u, k));
                    if c.min(d) > COMPLEMENTARITY_TOL {
                        if c >= d {
                            qp.units[u].fix_dch[k] = true;
                        } else {
                            qp.units[u].fix_chg[k] = true;
                        }
                        changed = true;
                    }
                }
            }
            if !changed {
                return Some((qp, sol));
            }
            sol = self.relax(&qp).ok()?;
        }
    }
}

pub(crate) fn branch_and_bound(root: StructuredQp, opts: &SolverOptions) -> Result<BnbOutcome> {
    let mut search = Search {
        opts,
        stats: SolverStats::default(),
    };
    let root_sol = search.relax(&root)?;
    if branching_pair(&root, &root_sol).is_none() {
        return Ok(BnbOutcome {
            qp: root,
            solution: root_sol,
            status: SolveStatus::Optimal,
            stats: search.stats,
        });
    }

    let mut incumbent = search.dive(root.clone(), root_sol.clone());
    let prune_at = |inc: &Option<(StructuredQp, QpSolution)>| {
        inc.as_ref().map_or(f64::INFINITY, |(_, s)| {
            s.objective - opts.rel_opt_tol * s.objective.abs().max(1.0)
        })
    };

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: root_sol.objective,
        seq,
        qp: root,
        solution: root_sol,
    });
    let mut status = SolveStatus::Optimal;

    while let Some(node) = heap.pop() {
        if node.bound >= prune_at(&incumbent) {
            break;
        }
        let Some((u, k)) = branching_pair(&node.qp, &node.solution) else {
            continue;
        };
        if search.stats.bnb_nodes + 2 > opts.max_bnb_nodes {
            status = SolveStatus::NodeLimit;
            search.stats.node_limited = 1;
            warn!(
                "branch-and-bound stopped at {} nodes; best open bound {:.6e}",
                search.stats.bnb_nodes, node.bound
            );
            break;
        }
        for pin_charge in [true, false] {
            let mut child = node.qp.clone();
            if pin_charge {
                child.units[u].fix_chg[k] = true;
            } else {
                child.units[u].fix_dch[k] = true;
            }
            search.stats.bnb_nodes += 1;
            seq += 1;
            // A failed relaxation means the pinned problem has no interior.
            let Ok(sol) = search.relax(&child) else {
                continue;
            };
            if sol.objective >= prune_at(&incumbent) {
                continue;
            }
            if branching_pair(&child, &sol).is_none() {
                if improves(&sol, incumbent.as_ref().map(|(_, s)| s)) {
                    incumbent = Some((child, sol));
                }
            } else {
                heap.push(Node {
                    bound: sol.objective,
                    seq,
                    qp: child,
                    solution: sol,
                });
            }
        }
    }

    let (qp, solution) = incumbent.ok_or_else(|| {
        Error::Solver("branch-and-bound found no solution without simultaneous charge and discharge".into())
    })?;
    Ok(BnbOutcome {
        qp,
        solution,
        status,
        stats: search.stats,
    })
}
