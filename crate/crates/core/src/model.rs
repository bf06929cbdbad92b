//! Storage physics and the basic value types shared by every other module.
//!
//! Sign convention: a positive net power `p_net = p_chg - p_dch` is
//! consumption (charging). Storage units have an idle forecast, so the
//! flexibility they deliver is `-p_net`.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when checking solver output, in MW and SoC units.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Equidistant discretisation of the coordination horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_steps: usize,
    dt_hours: f64,
}

impl TimeGrid {
    pub const DEFAULT_STEPS: usize = 96;
    pub const DEFAULT_DT_HOURS: f64 = 0.25;

    pub fn new(n_steps: usize, dt_hours: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Invalid("time grid needs at least one step".into()));
        }
        if !(dt_hours.is_finite() && dt_hours > 0.0) {
            return Err(Error::Invalid(format!(
                "dt_hours must be positive, got {dt_hours}"
            )));
        }
        Ok(Self { n_steps, dt_hours })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt_hours(&self) -> f64 {
        self.dt_hours
    }

    pub fn horizon_hours(&self) -> f64 {
        self.n_steps as f64 * self.dt_hours
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            n_steps: Self::DEFAULT_STEPS,
            dt_hours: Self::DEFAULT_DT_HOURS,
        }
    }
}

/// Physical description of one storage unit (or of a virtual unit standing
/// in for a group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssParams {
    pub id: String,
    /// Symmetric charge/discharge limit, MW.
    pub p_max: f64,
    /// Usable energy, MWh.
    pub capacity: f64,
    pub eta_chg: f64,
    pub eta_dch: f64,
    /// State of charge at the start of the horizon, in [0, 1].
    pub soc_initial: f64,
}

impl EssParams {
    /// Unit with ideal efficiencies.
    pub fn ideal(id: impl Into<String>, p_max: f64, capacity: f64, soc_initial: f64) -> Self {
        Self {
            id: id.into(),
            p_max,
            capacity,
            eta_chg: 1.0,
            eta_dch: 1.0,
            soc_initial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let issues = validate_params(self);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams {
                id: self.id.clone(),
                issues,
            })
        }
    }

    pub fn initial_energy(&self) -> f64 {
        self.soc_initial * self.capacity
    }

    pub fn is_lossless(&self) -> bool {
        self.eta_chg == 1.0 && self.eta_dch == 1.0
    }

    pub fn limits(&self) -> FpuLimits {
        FpuLimits {
            p_min: -self.p_max,
            p_max: self.p_max,
        }
    }
}

/// One violated bound of [`EssParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamIssue {
    NegativePower(f64),
    NonPositiveCapacity(f64),
    ChargeEfficiency(f64),
    DischargeEfficiency(f64),
    InitialSoc(f64),
}

impl fmt::Display for ParamIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamIssue::NegativePower(v) => write!(f, "p_max must be >= 0 (got {v})"),
            ParamIssue::NonPositiveCapacity(v) => write!(f, "capacity must be > 0 (got {v})"),
            ParamIssue::ChargeEfficiency(v) => write!(f, "eta_chg must lie in (0, 1] (got {v})"),
            ParamIssue::DischargeEfficiency(v) => {
                write!(f, "eta_dch must lie in (0, 1] (got {v})")
            }
            ParamIssue::InitialSoc(v) => write!(f, "soc_initial out of [0, 1] (got {v})"),
        }
    }
}

/// Returns every violated parameter invariant; empty means valid.
///
/// NaN fails every check since the comparisons are written positively.
pub fn validate_params(params: &EssParams) -> Vec<ParamIssue> {
    let mut issues = Vec::new();
    if !(params.p_max >= 0.0 && params.p_max.is_finite()) {
        issues.push(ParamIssue::NegativePower(params.p_max));
    }
    if !(params.capacity > 0.0 && params.capacity.is_finite()) {
        issues.push(ParamIssue::NonPositiveCapacity(params.capacity));
    }
    if !(params.eta_chg > 0.0 && params.eta_chg <= 1.0) {
        issues.push(ParamIssue::ChargeEfficiency(params.eta_chg));
    }
    if !(params.eta_dch > 0.0 && params.eta_dch <= 1.0) {
        issues.push(ParamIssue::DischargeEfficiency(params.eta_dch));
    }
    if !(0.0..=1.0).contains(&params.soc_initial) {
        issues.push(ParamIssue::InitialSoc(params.soc_initial));
    }
    issues
}

/// Active-power band of a generic flexibility providing unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpuLimits {
    pub p_min: f64,
    pub p_max: f64,
}

impl FpuLimits {
    pub fn new(p_min: f64, p_max: f64) -> Result<Self> {
        if !(p_min <= p_max) {
            return Err(Error::Invalid(format!(
                "p_min ({p_min}) must not exceed p_max ({p_max})"
            )));
        }
        Ok(Self { p_min, p_max })
    }

    pub fn contains(&self, p: f64) -> bool {
        self.p_min <= p && p <= self.p_max
    }
}

/// A power series over the time grid, MW. All values are finite.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Timeseries(Vec<f64>);

impl Timeseries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "timeseries value at index {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Builds a series from a closure; the closure must return finite values.
    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Self {
        let values: Vec<f64> = (0..n).map(f).collect();
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn expect_len(&self, n: usize, what: &str) -> Result<()> {
        if self.0.len() == n {
            Ok(())
        } else {
            Err(Error::length(what, n, self.0.len()))
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }

    pub fn add(&self, other: &Timeseries) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn sum_squares(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn sum_abs(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs_diff(&self, other: &Timeseries) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Elementwise sum of several equally long series.
    pub fn sum_of<'a>(n: usize, series: impl IntoIterator<Item = &'a Timeseries>) -> Self {
        let mut out = vec![0.0; n];
        for s in series {
            for (o, v) in out.iter_mut().zip(s.values()) {
                *o += v;
            }
        }
        Self(out)
    }
}

impl Deref for Timeseries {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Timeseries {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<Timeseries> for Vec<f64> {
    fn from(ts: Timeseries) -> Self {
        ts.0
    }
}

/// Dispatch of one unit over the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub p_chg: Timeseries,
    pub p_dch: Timeseries,
    pub x_chg: Vec<bool>,
    pub x_dch: Vec<bool>,
    pub p_net: Timeseries,
    /// `n_steps + 1` values, `soc[0]` being the initial state.
    pub soc: Vec<f64>,
}

impl Schedule {
    /// Builds a schedule from charge/discharge powers. Binary states follow the
    /// powers; the SoC trajectory is propagated, not clamped.
    pub fn from_powers(
        params: &EssParams,
        grid: &TimeGrid,
        p_chg: Timeseries,
        p_dch: Timeseries,
    ) -> Result<Self> {
        let soc = soc_propagate(params, grid, &p_chg, &p_dch)?;
        let x_chg = p_chg.iter().map(|&p| p > 0.0).collect();
        let x_dch = p_dch.iter().map(|&p| p > 0.0).collect();
        let p_net = Timeseries(p_chg.iter().zip(p_dch.iter()).map(|(c, d)| c - d).collect());
        Ok(Self {
            p_chg,
            p_dch,
            x_chg,
            x_dch,
            p_net,
            soc,
        })
    }

    pub fn idle(params: &EssParams, grid: &TimeGrid) -> Self {
        let n = grid.n_steps();
        Self {
            p_chg: Timeseries::zeros(n),
            p_dch: Timeseries::zeros(n),
            x_chg: vec![false; n],
            x_dch: vec![false; n],
            p_net: Timeseries::zeros(n),
            soc: vec![params.soc_initial; n + 1],
        }
    }

    /// Stored energy per grid point, MWh.
    pub fn energy(&self, capacity: f64) -> Vec<f64> {
        self.soc.iter().map(|s| s * capacity).collect()
    }

    /// Delivered flexibility under the idle storage forecast.
    pub fn flexibility(&self) -> Timeseries {
        self.p_net.neg()
    }
}

/// State-of-charge trajectory for the given powers.
///
/// The power at index `t` acts on the interval ending at grid point `t + 1`.
/// Out-of-range values are returned as-is so callers can detect violations.
pub fn soc_propagate(
    params: &EssParams,
    grid: &TimeGrid,
    p_chg: &[f64],
    p_dch: &[f64],
) -> Result<Vec<f64>> {
    let n = grid.n_steps();
    if p_chg.len() != n {
        return Err(Error::length("p_chg", n, p_chg.len()));
    }
    if p_dch.len() != n {
        return Err(Error::length("p_dch", n, p_dch.len()));
    }
    let scale = grid.dt_hours() / params.capacity;
    let mut soc = Vec::with_capacity(n + 1);
    let mut current = params.soc_initial;
    soc.push(current);
    for (c, d) in p_chg.iter().zip(p_dch) {
        current += (c * params.eta_chg - d / params.eta_dch) * scale;
        soc.push(current);
    }
    Ok(soc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Dimension,
    ChargeBounds,
    DischargeBounds,
    Exclusivity,
    NetPower,
    Continuity,
    SocLower,
    SocUpper,
}

/// A constraint broken at a given step. For SoC constraints the step is the
/// grid-point index (0..=n_steps).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub step: usize,
    pub constraint: Constraint,
    pub magnitude: f64,
}

/// Lists every schedule invariant that is broken by more than `tol`.
pub fn check_feasibility(
    params: &EssParams,
    grid: &TimeGrid,
    schedule: &Schedule,
    tol: f64,
) -> Vec<Violation> {
    let n = grid.n_steps();
    let dims_ok = schedule.p_chg.len() == n
        && schedule.p_dch.len() == n
        && schedule.p_net.len() == n
        && schedule.x_chg.len() == n
        && schedule.x_dch.len() == n
        && schedule.soc.len() == n + 1;
    if !dims_ok {
        return vec![Violation {
            step: 0,
            constraint: Constraint::Dimension,
            magnitude: f64::NAN,
        }];
    }

    let mut out = Vec::new();
    let mut push = |step, constraint, magnitude: f64| {
        if magnitude > tol {
            out.push(Violation {
                step,
                constraint,
                magnitude,
            });
        }
    };
    let scale = grid.dt_hours() / params.capacity;
    for t in 0..n {
        let (c, d) = (schedule.p_chg[t], schedule.p_dch[t]);
        let xc = if schedule.x_chg[t] { 1.0 } else { 0.0 };
        let xd = if schedule.x_dch[t] { 1.0 } else { 0.0 };
        push(t, Constraint::ChargeBounds, (-c).max(c - xc * params.p_max));
        push(t, Constraint::DischargeBounds, (-d).max(d - xd * params.p_max));
        // Binary constraint: any overlap is a violation.
        let both = if schedule.x_chg[t] && schedule.x_dch[t] { 1.0 } else { 0.0 };
        push(t, Constraint::Exclusivity, both);
        push(t, Constraint::NetPower, (schedule.p_net[t] - (c - d)).abs());
        let expected =
            schedule.soc[t] + (c * params.eta_chg - d / params.eta_dch) * scale;
        push(t + 1, Constraint::Continuity, (schedule.soc[t + 1] - expected).abs());
    }
    push(0, Constraint::Continuity, (schedule.soc[0] - params.soc_initial).abs());
    for (i, &s) in schedule.soc.iter().enumerate() {
        push(i, Constraint::SocLower, -s);
        push(i, Constraint::SocUpper, s - 1.0);
    }
    out
}

/// Power-to-energy ratio in 1/h; 1.0 means a full cycle takes one hour.
pub fn pte_ratio(params: &EssParams) -> f64 {
    params.p_max / params.capacity
}

/// `P_t = P_forecast,t - P_flex,t` elementwise.
pub fn apply_flexibility(p_forecast: &Timeseries, p_flex: &Timeseries) -> Result<Timeseries> {
    p_flex.expect_len(p_forecast.len(), "flexibility series")?;
    Ok(Timeseries(
        p_forecast
            .iter()
            .zip(p_flex.iter())
            .map(|(f, x)| f - x)
            .collect(),
    ))
}
