//! Exhaustive search over a discretised net-power grid, for cross-checking
//! the optimiser on tiny problems.

use crate::error::{Error, Result};
use crate::model::EssParams;

use super::{objective_of_sum, DispatchProblem};

/// Largest instance the enumeration accepts.
pub const ORACLE_MAX_UNITS: usize = 2;
pub const ORACLE_MAX_STEPS: usize = 3;
pub const ORACLE_MAX_LEVELS: usize = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best objective found, without regularisation.
    pub objective: f64,
    /// Net power per unit and step of the minimiser.
    pub net: Vec<Vec<f64>>,
}

/// The `levels` equidistant net powers from `-p_max` to `p_max`.
pub fn power_levels(p_max: f64, levels: usize) -> Vec<f64> {
    if p_max == 0.0 {
        return vec![0.0];
    }
    let h = 2.0 * p_max / (levels - 1) as f64;
    (0..levels).map(|i| -p_max + i as f64 * h).collect()
}

/// Every SoC-feasible net-power sequence of one unit on the level grid.
fn feasible_sequences(unit: &EssParams, n: usize, dt: f64, levels: usize) -> Vec<Vec<f64>> {
    let grid = power_levels(unit.p_max, levels);
    let mut out = Vec::new();
    let mut seq = Vec::with_capacity(n);
    fn walk(
        unit: &EssParams,
        grid: &[f64],
        n: usize,
        dt: f64,
        soc: f64,
        seq: &mut Vec<f64>,
        out: &mut Vec<Vec<f64>>,
    ) {
        if seq.len() == n {
            out.push(seq.clone());
            return;
        }
        for &p in grid {
            let inc = if p > 0.0 {
                p * unit.eta_chg
            } else {
                p / unit.eta_dch
            };
            let next = soc + inc * dt / unit.capacity;
            if (-1e-12..=1.0 + 1e-12).contains(&next) {
                seq.push(p);
                walk(unit, grid, n, dt, next, seq, out);
                seq.pop();
            }
        }
    }
    walk(unit, &grid, n, dt, unit.soc_initial, &mut seq, &mut out);
    out
}

/// Minimises the problem's objective over all grid schedules.
pub fn brute_force_oracle(problem: &DispatchProblem, levels: usize) -> Result<OracleResult> {
    problem.validate()?;
    let n = problem.grid.n_steps();
    let dt = problem.grid.dt_hours();
    if problem.units.len() > ORACLE_MAX_UNITS || n > ORACLE_MAX_STEPS {
        return Err(Error::Invalid(format!(
            "oracle supports at most {ORACLE_MAX_UNITS} units and {ORACLE_MAX_STEPS} steps"
        )));
    }
    if !(2..=ORACLE_MAX_LEVELS).contains(&levels) {
        return Err(Error::Invalid(format!(
            "oracle levels must lie in 2..={ORACLE_MAX_LEVELS}"
        )));
    }

    let per_unit: Vec<Vec<Vec<f64>>> = problem
        .units
        .iter()
        .map(|u| feasible_sequences(u, n, dt, levels))
        .collect();
    let coupling_ok = |sum: &[f64]| match &problem.coupling {
        Some(bound) => sum.iter().zip(bound.iter()).all(|(s, b)| *s <= b + 1e-12),
        None => true,
    };

    let mut best: Option<OracleResult> = None;
    let mut sum = vec![0.0; n];
    let mut consider = |parts: &[&Vec<f64>], sum: &[f64]| {
        if !coupling_ok(sum) {
            return;
        }
        let obj = objective_of_sum(&problem.objective, sum);
        if best.as_ref().is_none_or(|b| obj < b.objective) {
            best = Some(OracleResult {
                objective: obj,
                net: parts.iter().map(|p| p.to_vec()).collect(),
            });
        }
    };
    match per_unit.as_slice() {
        [a] => {
            for sa in a {
                consider(&[sa], sa);
            }
        }
        [a, b] => {
            for sa in a {
                for sb in b {
                    for k in 0..n {
                        sum[k] = sa[k] + sb[k];
                    }
                    consider(&[sa, sb], &sum);
                }
            }
        }
        _ => unreachable!("unit count checked above"),
    }
    best.ok_or_else(|| Error::Infeasible("no grid schedule satisfies the coupling bound".into()))
}
