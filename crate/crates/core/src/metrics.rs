//! Aggregation error and aggregation efficiency.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Timeseries;

/// Normalised squared tracking error `sum (req - del)^2 / sum req^2`.
///
/// An all-zero request has no meaningful error and yields
/// [`Error::ZeroRequest`] rather than zero.
pub fn aggregation_error(requested: &Timeseries, delivered: &Timeseries) -> Result<f64> {
    delivered.expect_len(requested.len(), "delivered flexibility")?;
    let norm = requested.sum_squares();
    if norm == 0.0 {
        return Err(Error::ZeroRequest);
    }
    let residual: f64 = requested
        .iter()
        .zip(delivered.iter())
        .map(|(r, d)| (r - d) * (r - d))
        .sum();
    Ok(residual / norm)
}

/// `sum |flex_hier| / sum |flex_mono|`, or `None` if the monolithic scheme
/// moved no flexibility. Not clamped to 1.
pub fn aggregation_efficiency(flex_hier: &Timeseries, flex_mono: &Timeseries) -> Result<Option<f64>> {
    flex_hier.expect_len(flex_mono.len(), "hierarchical flexibility")?;
    let mono = flex_mono.sum_abs();
    Ok((mono > 0.0).then(|| flex_hier.sum_abs() / mono))
}

/// Run-level summary. Fields are `None` when the corresponding scheme did
/// not run or the quantity is undefined.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Metrics {
    /// Root aggregation error.
    pub epsilon_agg: Option<f64>,
    pub eta_agg: Option<f64>,
    pub objective_monolithic: Option<f64>,
    pub objective_hierarchical_planned: Option<f64>,
    pub objective_hierarchical: Option<f64>,
}
