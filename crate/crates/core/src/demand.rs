//! Synthetic baseline demand profiles.
//!
//! The default day shape has a morning and an evening consumption peak and a
//! midday dip where local PV generation exceeds demand. Amplitudes are given
//! relative to the fleet's total power so every scenario sees a profile that
//! can saturate its storage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{TimeGrid, Timeseries};

/// Gaussian bump on a 24 h circle.
fn bump(hour: f64, center: f64, width: f64) -> f64 {
    let mut d = (hour - center).rem_euclid(24.0);
    if d > 12.0 {
        d -= 24.0;
    }
    (-0.5 * (d / width).powi(2)).exp()
}

fn hour_of(grid: &TimeGrid, k: usize) -> f64 {
    (k as f64 + 0.5) * grid.dt_hours()
}

/// The default baseline: short peaks near 08:00 and 19:00, PV surplus around
/// 13:00. Ranges from about `-0.75` to `+1.75` times `fleet_power`.
///
/// The peaks are narrow enough that flattening them needs close to full
/// fleet power for about an hour, which is what exposes units whose power
/// outlasts their energy.
pub fn synthetic_day(grid: &TimeGrid, fleet_power: f64) -> Timeseries {
    Timeseries::from_fn(grid.n_steps(), |k| {
        let h = hour_of(grid, k);
        fleet_power
            * (0.25 + 1.2 * bump(h, 8.0, 0.6) + 1.5 * bump(h, 19.0, 0.7)
                - 1.0 * bump(h, 13.0, 1.2))
    })
}

/// A seeded random day: a few bumps of random position, width and sign on
/// top of a random offset. Values stay within about `±2 * fleet_power`.
pub fn random_profile(grid: &TimeGrid, fleet_power: f64, seed: u64) -> Timeseries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.random_range(-0.3..0.3);
    let n_bumps = rng.random_range(2..=5);
    let bumps: Vec<(f64, f64, f64)> = (0..n_bumps)
        .map(|_| {
            let center = rng.random_range(0.0..24.0);
            let width = rng.random_range(0.5..4.0);
            let amplitude = rng.random_range(0.3..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (center, width, amplitude)
        })
        .collect();
    Timeseries::from_fn(grid.n_steps(), |k| {
        let h = hour_of(grid, k);
        let shape: f64 = bumps.iter().map(|&(c, w, a)| a * bump(h, c, w)).sum();
        fleet_power * (offset + shape).clamp(-2.0, 2.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_day_crosses_zero() {
        let g = TimeGrid::default();
        let d = synthetic_day(&g, 4.0);
        let max = d.iter().cloned().fold(f64::MIN, f64::max);
        let min = d.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max > 6.5 && max < 7.0, "{max}");
        assert!(min < -2.5 && min > -3.0, "{min}");
    }

    #[test]
    fn random_profiles_are_seeded() {
        let g = TimeGrid::default();
        assert_eq!(random_profile(&g, 1.0, 7), random_profile(&g, 1.0, 7));
        assert_ne!(random_profile(&g, 1.0, 7), random_profile(&g, 1.0, 8));
        assert!(random_profile(&g, 1.0, 3).iter().all(|v| v.abs() <= 2.0));
    }
}
