//! Rational decision decomposition, the investment-opinion weight function,
//! its logistic dynamics, and the equivalence constant lambda.
//!
//! The optimal decision is a convex combination
//! `P1*(t) = Z1(t) P1_rational(t) + (1 - Z1(t)) P2_rational(t)` whose weight
//! `Z1(t) = eta e^{varrho r (T-t)} / (eta e^{varrho r (T-t)} + vartheta)`
//! measures how much the follower sticks to their own rational decision.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::herd::{EtaSolution, HerdConfig, HerdProblem};
use crate::market::MarketParams;
use crate::merton::DecisionCurve;

/// Investment-opinion weight curve Z1(t).
///
/// Solver-produced curves live strictly inside (0, 1); boundary values can
/// only arise from decomposing degenerate inputs and are flagged rather than
/// rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionCurve {
    grid: TimeGrid,
    values: Vec<f64>,
    at_boundary: bool,
}

impl OpinionCurve {
    /// Strict constructor: every weight must lie in the open interval (0, 1).
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::check_len(&grid, &values)?;
        if let Some(bad) = values.iter().find(|z| !(**z > 0.0 && **z < 1.0)) {
            return Err(Error::GridMismatch {
                reason: format!("opinion weight {bad} outside (0, 1)"),
            });
        }
        Ok(Self {
            grid,
            values,
            at_boundary: false,
        })
    }

    /// Constructor that tolerates the closed interval [0, 1], flagging curves
    /// that touch a boundary.
    pub fn with_boundary(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::check_len(&grid, &values)?;
        if let Some(bad) = values.iter().find(|z| !(**z >= 0.0 && **z <= 1.0)) {
            return Err(Error::GridMismatch {
                reason: format!("opinion weight {bad} outside [0, 1]"),
            });
        }
        let at_boundary = values.iter().any(|z| *z <= 0.0 || *z >= 1.0);
        Ok(Self {
            grid,
            values,
            at_boundary,
        })
    }

    fn check_len(grid: &TimeGrid, values: &[f64]) -> Result<()> {
        if values.len() != grid.points().len() {
            return Err(Error::GridMismatch {
                reason: format!(
                    "opinion curve has {} values for a grid of {} points",
                    values.len(),
                    grid.points().len()
                ),
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when any weight sits on the boundary of [0, 1].
    pub fn is_boundary(&self) -> bool {
        self.at_boundary
    }

    pub fn sup_distance(&self, other: &OpinionCurve) -> Result<f64> {
        if !self.grid.matches(&other.grid) {
            return Err(Error::GridMismatch {
                reason: "opinion curves live on different grids".into(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Closed-form opinion weight at a single time point.
pub fn opinion_value(problem: &HerdProblem, eta: f64, t: f64) -> f64 {
    let e = (problem.varrho() * problem.market.r * (problem.herd.horizon() - t)).exp();
    eta * e / (eta * e + problem.vartheta())
}

/// The closed-form investment opinion curve for a converged eta.
pub fn investment_opinion(
    problem: &HerdProblem,
    eta: &EtaSolution,
    grid: &TimeGrid,
) -> Result<OpinionCurve> {
    let values = grid
        .points()
        .iter()
        .map(|&t| opinion_value(problem, eta.eta, t))
        .collect();
    OpinionCurve::new(grid.clone(), values)
}

/// Extract the decomposition weight from curves:
/// `Z1 = (P1* - P2_rational) / (P1_rational - P2_rational)` pointwise.
///
/// Fails when the rational decisions coincide (alpha1 = alpha2), where the
/// decomposition is undefined.
pub fn decompose(
    optimal: &DecisionCurve,
    rational_follower: &DecisionCurve,
    rational_expert: &DecisionCurve,
) -> Result<OpinionCurve> {
    optimal.ensure_same_grid(rational_follower)?;
    optimal.ensure_same_grid(rational_expert)?;
    let mut values = Vec::with_capacity(optimal.values().len());
    for ((p, own), expert) in optimal
        .values()
        .iter()
        .zip(rational_follower.values())
        .zip(rational_expert.values())
    {
        let denom = own - expert;
        if denom == 0.0 {
            return Err(Error::DegenerateDecomposition);
        }
        values.push((p - expert) / denom);
    }
    OpinionCurve::with_boundary(optimal.grid().clone(), values)
}

/// Rebuild the decision from its decomposition:
/// `P1 = Z1 P1_rational + (1 - Z1) P2_rational`.
pub fn recompose(
    opinion: &OpinionCurve,
    rational_follower: &DecisionCurve,
    rational_expert: &DecisionCurve,
) -> Result<DecisionCurve> {
    rational_follower.ensure_same_grid(rational_expert)?;
    if !opinion.grid().matches(rational_follower.grid()) {
        return Err(Error::GridMismatch {
            reason: "opinion and rational curves live on different grids".into(),
        });
    }
    let values = opinion
        .values()
        .iter()
        .zip(rational_follower.values())
        .zip(rational_expert.values())
        .map(|((z, own), expert)| z * own + (1.0 - z) * expert)
        .collect();
    DecisionCurve::new(rational_follower.grid().clone(), values)
}

/// Right-hand side of the opinion dynamics: `dZ/dt = -varrho r Z (1 - Z)`.
pub fn opinion_ode_rhs(herd: &HerdConfig, market: &MarketParams, z: f64) -> f64 {
    -herd.varrho() * market.r * z * (1.0 - z)
}

/// Integrate the opinion ODE backward from the terminal condition
/// `Z1(T) = eta / (eta + vartheta)` with classical fourth-order Runge-Kutta.
pub fn integrate_opinion_ode(
    terminal: f64,
    herd: &HerdConfig,
    market: &MarketParams,
    grid: &TimeGrid,
) -> Result<OpinionCurve> {
    if !(terminal > 0.0 && terminal < 1.0) {
        return Err(Error::OpinionOutOfRange {
            t: grid.horizon(),
            z: terminal,
        });
    }
    let n = grid.n_intervals();
    let h = -grid.step(); // backward in time
    let rhs = |z: f64| opinion_ode_rhs(herd, market, z);

    let mut values = vec![0.0; n + 1];
    values[n] = terminal;
    for k in (1..=n).rev() {
        let z = values[k];
        let k1 = rhs(z);
        let k2 = rhs(z + 0.5 * h * k1);
        let k3 = rhs(z + 0.5 * h * k2);
        let k4 = rhs(z + h * k3);
        let next = z + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        if !(0.0..=1.0).contains(&next) || !next.is_finite() {
            return Err(Error::OpinionOutOfRange {
                t: grid.points()[k - 1],
                z: next,
            });
        }
        values[k - 1] = next;
    }
    OpinionCurve::new(grid.clone(), values)
}

/// The constant that makes the opinion-penalized problem equivalent to the
/// decision-space problem:
/// `lambda = theta v^2 (alpha1 - alpha2)^2 / (alpha1^2 alpha2^2 sigma^4)`,
/// i.e. `vartheta v^2 (alpha1 - alpha2)^2 / (alpha1 alpha2^2 sigma^2)`.
///
/// It satisfies `theta D[P1 || P2_rational] = lambda I[Z]` identically for
/// every opinion curve Z with P1 = recompose(Z), not just the optimal one.
pub fn equivalence_lambda(problem: &HerdProblem) -> f64 {
    let v = problem.market.excess_return();
    let diff = problem.follower.alpha - problem.expert.alpha;
    problem.vartheta() * v * v * diff * diff
        / (problem.follower.alpha
            * problem.expert.alpha
            * problem.expert.alpha
            * problem.market.sigma_sq())
}

/// The opinion penalty `I[Z] = 1/2 ∫ e^{varrho r (t-T)} Z^2(t) dt`, sharing
/// the Simpson scheme with every other integral in the crate.
pub fn opinion_penalty(herd: &HerdConfig, market: &MarketParams, opinion: &OpinionCurve) -> f64 {
    let decay = herd.varrho() * market.r;
    let horizon = opinion.grid().horizon();
    let weighted: Vec<f64> = opinion
        .grid()
        .points()
        .iter()
        .zip(opinion.values())
        .map(|(&t, &z)| (decay * (t - horizon)).exp() * z * z)
        .collect();
    0.5 * opinion
        .grid()
        .integrate(&weighted)
        .expect("weights built from the curve's own grid")
}
