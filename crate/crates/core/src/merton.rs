//! Single-agent Merton quantities: the rational decision, CARA utility, and
//! the lognormal closed form for the expected terminal utility of an
//! arbitrary deterministic decision curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::market::MarketParams;

/// Largest exponent we evaluate before reporting a range error instead of
/// silently saturating to infinity.
pub const MAX_EXPONENT: f64 = 700.0;

/// One agent: risk-aversion coefficient and initial wealth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProfile {
    /// Risk-aversion coefficient (> 0).
    pub alpha: f64,
    /// Initial wealth.
    #[serde(default)]
    pub x0: f64,
}

impl AgentProfile {
    pub fn new(alpha: f64, x0: f64) -> Result<Self> {
        let profile = Self { alpha, x0 };
        profile.ensure_valid()?;
        Ok(profile)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() || !self.x0.is_finite() {
            return Err(Error::InvalidAgent { alpha: self.alpha });
        }
        Ok(())
    }
}

/// Uniformly sampled allocation curve P(t) on [0, T] (wealth units held in
/// the risky asset).
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionCurve {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl DecisionCurve {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.points().len() {
            return Err(Error::GridMismatch {
                reason: format!(
                    "curve has {} values for a grid of {} points",
                    values.len(),
                    grid.points().len()
                ),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::GridMismatch {
                reason: format!("non-finite curve value {bad}"),
            });
        }
        Ok(Self { grid, values })
    }

    /// Curve that is identically zero (no risky holdings).
    pub fn zero(grid: TimeGrid) -> Self {
        let values = vec![0.0; grid.points().len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation at an arbitrary time in [0, T].
    pub fn value_at(&self, t: f64) -> f64 {
        let points = self.grid.points();
        let step = self.grid.step();
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= self.grid.horizon() {
            return *self.values.last().unwrap();
        }
        let idx = ((t / step).floor() as usize).min(points.len() - 2);
        let frac = (t - points[idx]) / step;
        self.values[idx] * (1.0 - frac) + self.values[idx + 1] * frac
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup-norm distance to another curve on the same grid.
    pub fn sup_distance(&self, other: &DecisionCurve) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn ensure_same_grid(&self, other: &DecisionCurve) -> Result<()> {
        if self.grid.matches(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                reason: "curves live on different grids".into(),
            })
        }
    }

    /// Pointwise map, keeping the grid.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> DecisionCurve {
        let values = self
            .grid
            .points()
            .iter()
            .zip(&self.values)
            .map(|(&t, &p)| f(t, p))
            .collect();
        DecisionCurve {
            grid: self.grid.clone(),
            values,
        }
    }
}

/// Value of the rational (standalone Merton) decision at one time point:
/// `v/(alpha sigma^2) e^{r(t - T)}`.
pub fn rational_value(market: &MarketParams, alpha: f64, t: f64, horizon: f64) -> f64 {
    market.excess_return() / (alpha * market.sigma_sq()) * (market.r * (t - horizon)).exp()
}

/// The rational decision curve of a standalone agent.
pub fn rational_decision(
    market: &MarketParams,
    agent: &AgentProfile,
    grid: &TimeGrid,
) -> Result<DecisionCurve> {
    market.ensure_valid()?;
    agent.ensure_valid()?;
    let horizon = grid.horizon();
    let values = grid
        .points()
        .iter()
        .map(|&t| rational_value(market, agent.alpha, t, horizon))
        .collect();
    DecisionCurve::new(grid.clone(), values)
}

/// CARA utility `-(1/alpha) e^{-alpha x}`.
pub fn cara_utility(alpha: f64, x: f64) -> f64 {
    -(-alpha * x).exp() / alpha
}

/// Mean and variance of terminal wealth under a deterministic decision curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WealthMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Closed-form moments of X(T):
/// `mean = x0 e^{rT} + v ∫ e^{r(T-t)} P(t) dt`,
/// `variance = sigma^2 ∫ e^{2r(T-t)} P^2(t) dt`.
pub fn terminal_wealth_moments(
    market: &MarketParams,
    x0: f64,
    decision: &DecisionCurve,
) -> Result<WealthMoments> {
    market.ensure_valid()?;
    let grid = decision.grid();
    let horizon = grid.horizon();
    let r = market.r;

    let drift: Vec<f64> = grid
        .points()
        .iter()
        .zip(decision.values())
        .map(|(&t, &p)| (r * (horizon - t)).exp() * p)
        .collect();
    let diffusion: Vec<f64> = grid
        .points()
        .iter()
        .zip(decision.values())
        .map(|(&t, &p)| (2.0 * r * (horizon - t)).exp() * p * p)
        .collect();

    let mean = x0 * (r * horizon).exp() + market.excess_return() * grid.integrate(&drift)?;
    let variance = market.sigma_sq() * grid.integrate(&diffusion)?;
    Ok(WealthMoments { mean, variance })
}

/// Expected CARA utility of terminal wealth,
/// `-(1/alpha) exp{-alpha mean + alpha^2 variance / 2}`.
///
/// Reports a range error when the exponent exceeds the f64 range instead of
/// returning infinity.
pub fn expected_cara_utility(
    market: &MarketParams,
    agent: &AgentProfile,
    decision: &DecisionCurve,
) -> Result<f64> {
    agent.ensure_valid()?;
    let moments = terminal_wealth_moments(market, agent.x0, decision)?;
    let exponent = -agent.alpha * moments.mean + 0.5 * agent.alpha * agent.alpha * moments.variance;
    if exponent > MAX_EXPONENT {
        return Err(Error::RangeExceeded {
            context: "expected_cara_utility",
            exponent,
        });
    }
    Ok(-exponent.exp() / agent.alpha)
}
