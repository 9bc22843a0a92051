//! Uniform time grids and the composite Simpson rule shared by every module.
//!
//! All integrals in the solver are taken over smooth exponential integrands on
//! a uniform partition of [0, T], so a single fixed-grid Simpson rule is both
//! sufficient and easy to cross-check (halving the spacing must shrink the
//! error by ~16x).

use crate::error::{Error, Result};

/// Default number of intervals on [0, T].
pub const DEFAULT_GRID_N: usize = 1000;

/// Uniform partition of [0, T] with an even number of intervals.
///
/// Simpson's rule needs an even interval count; a requested odd `n` is bumped
/// to `n + 1` rather than rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    points: Vec<f64>,
}

impl TimeGrid {
    /// Build a grid over [0, `horizon`] with `n` intervals (bumped to even).
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidGrid {
                reason: format!("horizon must be positive and finite, got {horizon}"),
            });
        }
        if n < 2 {
            return Err(Error::InvalidGrid {
                reason: format!("need at least 2 intervals, got {n}"),
            });
        }
        let n = if n.is_multiple_of(2) { n } else { n + 1 };
        let step = horizon / n as f64;
        let mut points: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
        // Pin the endpoint so t[n] == T exactly.
        points[n] = horizon;
        Ok(Self { horizon, points })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of intervals (even).
    pub fn n_intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_intervals() as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Grids are interchangeable when they discretize the same horizon with
    /// the same resolution.
    pub fn matches(&self, other: &TimeGrid) -> bool {
        self.points.len() == other.points.len() && self.horizon == other.horizon
    }

    /// Integrate sampled values over the grid with composite Simpson.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.points.len() {
            return Err(Error::GridMismatch {
                reason: format!(
                    "expected {} samples, got {}",
                    self.points.len(),
                    values.len()
                ),
            });
        }
        Ok(simpson(values, self.step()))
    }

    /// Integrate `f` over the grid with composite Simpson.
    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        let values: Vec<f64> = self.points.iter().map(|&t| f(t)).collect();
        simpson(&values, self.step())
    }
}

/// Composite Simpson rule over uniformly spaced samples.
///
/// `values.len()` must be odd (even interval count); callers go through
/// [`TimeGrid`], which guarantees it.
pub fn simpson(values: &[f64], step: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n >= 2 && n.is_multiple_of(2), "Simpson needs an even interval count");
    let mut acc = values[0] + values[n];
    for (i, &v) in values.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * step / 3.0
}

/// Simpson quadrature weights for the grid (w_i such that ∫ ≈ Σ w_i f_i).
pub fn simpson_weights(n: usize, step: f64) -> Vec<f64> {
    debug_assert!(n >= 2 && n.is_multiple_of(2));
    (0..=n)
        .map(|i| {
            let c = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * step / 3.0
        })
        .collect()
}
