//! Solver for the integral constant eta and the following agent's optimal
//! decision.
//!
//! The optimal decision has a closed form up to one positive scalar eta that
//! solves a fixed-point equation. The iteration function is strictly
//! decreasing and self-maps [eta_lower, eta_upper]; when its Lipschitz bound
//! is at most one we iterate it directly, otherwise we bisect
//! g(xi) = f(xi) - xi, whose root exists and is unique by monotonicity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::market::MarketParams;
use crate::merton::{rational_decision, rational_value, AgentProfile, DecisionCurve, MAX_EXPONENT};

/// Default solver tolerance for the eta iteration.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Iteration budget shared by the fixed-point loop and the bisection fallback.
pub const MAX_SOLVER_ITERATIONS: usize = 10_000;

/// Herd-behaviour configuration: herd coefficient, decay rate, horizon, and
/// the numeric knobs every downstream quadrature shares.
///
/// Only the plain coefficients are stored; the modified ones are derived on
/// demand so they can never fall out of sync with the market and agent in
/// scope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HerdConfig {
    theta: f64,
    rho: f64,
    horizon: f64,
    tol: f64,
    grid_n: usize,
}

impl HerdConfig {
    /// Configuration from the herd coefficient theta (> 0).
    pub fn new(theta: f64, rho: f64, horizon: f64) -> Result<Self> {
        let cfg = Self {
            theta,
            rho,
            horizon,
            tol: DEFAULT_TOL,
            grid_n: crate::grid::DEFAULT_GRID_N,
        };
        cfg.ensure_valid()?;
        Ok(cfg)
    }

    /// Configuration from the modified herd coefficient
    /// `vartheta = theta / (alpha1 sigma^2)`.
    pub fn from_vartheta(
        vartheta: f64,
        rho: f64,
        horizon: f64,
        market: &MarketParams,
        follower: &AgentProfile,
    ) -> Result<Self> {
        market.ensure_valid()?;
        follower.ensure_valid()?;
        Self::new(vartheta * follower.alpha * market.sigma_sq(), rho, horizon)
    }

    pub fn with_tol(mut self, tol: f64) -> Result<Self> {
        self.tol = tol;
        self.ensure_valid()?;
        Ok(self)
    }

    pub fn with_grid_n(mut self, grid_n: usize) -> Result<Self> {
        self.grid_n = grid_n;
        self.ensure_valid()?;
        Ok(self)
    }

    /// Same numeric knobs, different herd coefficient.
    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        self.theta = theta;
        self.ensure_valid()?;
        Ok(self)
    }

    /// Same numeric knobs, different decay rate.
    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        self.rho = rho;
        self.ensure_valid()?;
        Ok(self)
    }

    fn ensure_valid(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidHerdConfig { reason });
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return fail(format!(
                "herd coefficient must be positive, got theta = {}",
                self.theta
            ));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return fail(format!("decay rate must be >= 0, got rho = {}", self.rho));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return fail(format!("horizon must be positive, got T = {}", self.horizon));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return fail(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.grid_n < 2 {
            return fail(format!("grid_n must be >= 2, got {}", self.grid_n));
        }
        Ok(())
    }

    /// Herd coefficient theta.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Decay rate rho.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Modified decay rate varrho = 2 - rho.
    pub fn varrho(&self) -> f64 {
        2.0 - self.rho
    }

    /// Modified herd coefficient vartheta = theta / (alpha1 sigma^2).
    pub fn vartheta(&self, market: &MarketParams, follower: &AgentProfile) -> f64 {
        self.theta / (follower.alpha * market.sigma_sq())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }
}

/// How the eta solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    /// Direct iteration of the map (contraction condition held).
    FixedPoint,
    /// Bisection of g(xi) = f(xi) - xi on [eta_lower, eta_upper].
    Bisection,
}

impl std::fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverMethod::FixedPoint => write!(f, "fixed-point"),
            SolverMethod::Bisection => write!(f, "bisection"),
        }
    }
}

/// Converged integral constant with its bracket and solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaSolution {
    /// The integral constant.
    pub eta: f64,
    /// Lower bound eta_lower of the bracket.
    pub eta_lower: f64,
    /// Upper bound eta_upper of the bracket.
    pub eta_upper: f64,
    pub method: SolverMethod,
    pub iterations: usize,
    /// |f(eta) - eta| after convergence.
    pub residual: f64,
    /// Whether the sufficient contraction condition held.
    pub contraction_ok: bool,
}

/// Value and verdict of the sufficient convergence condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionCheck {
    /// The Lipschitz bound; iteration is guaranteed to converge when <= 1.
    pub value: f64,
    pub holds: bool,
}

/// A fully validated problem instance: market, the two agents, and the herd
/// configuration. All solver entry points hang off this type.
#[derive(Debug, Clone, PartialEq)]
pub struct HerdProblem {
    pub market: MarketParams,
    /// A1, the following agent.
    pub follower: AgentProfile,
    /// A2, the leading expert.
    pub expert: AgentProfile,
    pub herd: HerdConfig,
}

impl HerdProblem {
    pub fn new(
        market: MarketParams,
        follower: AgentProfile,
        expert: AgentProfile,
        herd: HerdConfig,
    ) -> Result<Self> {
        market.ensure_valid()?;
        follower.ensure_valid()?;
        expert.ensure_valid()?;
        herd.ensure_valid()?;
        let problem = Self {
            market,
            follower,
            expert,
            herd,
        };
        // Fail fast on exponents that would saturate every downstream formula.
        let rt = market.r * herd.horizon();
        let decay = herd.varrho() * rt;
        if rt.abs() > MAX_EXPONENT || decay.abs() > MAX_EXPONENT {
            return Err(Error::RangeExceeded {
                context: "herd problem construction",
                exponent: rt.abs().max(decay.abs()),
            });
        }
        Ok(problem)
    }

    /// Modified herd coefficient for this problem's follower and market.
    pub fn vartheta(&self) -> f64 {
        self.herd.vartheta(&self.market, &self.follower)
    }

    /// Modified decay rate varrho = 2 - rho.
    pub fn varrho(&self) -> f64 {
        self.herd.varrho()
    }

    /// The time grid every curve of this problem lives on.
    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.herd.horizon(), self.herd.grid_n()).expect("validated at construction")
    }

    /// A1's rational decision on `grid`.
    pub fn rational_follower(&self, grid: &TimeGrid) -> Result<DecisionCurve> {
        rational_decision(&self.market, &self.follower, grid)
    }

    /// A2's rational decision on `grid`.
    pub fn rational_expert(&self, grid: &TimeGrid) -> Result<DecisionCurve> {
        rational_decision(&self.market, &self.expert, grid)
    }

    /// Integrand of the fixed-point exponent at candidate `xi`:
    /// `vartheta^2 v^2 (a1/a2 - 1)^2 / (2 sigma^2 [xi e^{varrho r (T-t)} + vartheta]^2)`.
    fn exponent_integral(&self, xi: f64) -> f64 {
        let vt = self.vartheta();
        let ratio_term = self.follower.alpha / self.expert.alpha - 1.0;
        if ratio_term == 0.0 {
            return 0.0;
        }
        let v = self.market.excess_return();
        let numerator = vt * vt * v * v * ratio_term * ratio_term;
        let two_sigma_sq = 2.0 * self.market.sigma_sq();
        let decay = self.varrho() * self.market.r;
        let horizon = self.herd.horizon();
        let grid = self.grid();
        grid.integrate_fn(|t| {
            let e = (decay * (horizon - t)).exp();
            let denom = xi * e + vt;
            numerator / (two_sigma_sq * denom * denom)
        })
    }

    /// Bracket [eta_lower, eta_upper] for the integral constant.
    ///
    /// `eta_lower = exp{-alpha1 x1 e^{rT} - v^2 T / (2 sigma^2)}` and
    /// `eta_upper = f(eta_lower)`.
    pub fn eta_bounds(&self) -> Result<(f64, f64)> {
        let lower = self.eta_lower()?;
        let upper = lower * self.exponent_integral(lower).exp();
        Ok((lower, upper))
    }

    fn eta_lower(&self) -> Result<f64> {
        let v = self.market.excess_return();
        let exponent = -self.follower.alpha * self.follower.x0 * (self.market.r * self.herd.horizon()).exp()
            - v * v * self.herd.horizon() / (2.0 * self.market.sigma_sq());
        if exponent.abs() > MAX_EXPONENT {
            return Err(Error::RangeExceeded {
                context: "eta_bounds",
                exponent,
            });
        }
        Ok(exponent.exp())
    }

    /// One application of the iteration function f.
    pub fn iteration_map(&self, xi: f64) -> Result<f64> {
        let lower = self.eta_lower()?;
        Ok(lower * self.exponent_integral(xi).exp())
    }

    /// Evaluate the sufficient convergence condition of the fixed-point
    /// iteration. The factor `(1 - e^{-2 varrho r T}) / (2 varrho r)` extends
    /// continuously to `T` when `varrho r = 0`.
    pub fn check_contraction(&self) -> Result<ContractionCheck> {
        let (lower, upper) = self.eta_bounds()?;
        let vt = self.vartheta();
        let v = self.market.excess_return();
        let alpha_diff = self.follower.alpha - self.expert.alpha;
        let horizon = self.herd.horizon();

        let z = 2.0 * self.varrho() * self.market.r * horizon;
        let time_factor = if z == 0.0 {
            horizon
        } else {
            horizon * (-(-z).exp_m1()) / z
        };

        let value = vt * vt * v * v * alpha_diff * alpha_diff * upper
            / (self.expert.alpha * self.expert.alpha * self.market.sigma_sq() * lower.powi(3))
            * time_factor;
        Ok(ContractionCheck {
            value,
            holds: value <= 1.0,
        })
    }

    /// Solve for eta, picking the iteration when the contraction condition
    /// holds and bisection otherwise.
    pub fn solve_eta(&self) -> Result<EtaSolution> {
        let contraction = self.check_contraction()?;
        if contraction.holds {
            self.solve_eta_via(SolverMethod::FixedPoint)
        } else {
            self.solve_eta_via(SolverMethod::Bisection)
        }
    }

    /// Solve for eta with an explicit method. Exposed so the two paths can be
    /// cross-checked against each other on the same input.
    pub fn solve_eta_via(&self, method: SolverMethod) -> Result<EtaSolution> {
        let (lower, upper) = self.eta_bounds()?;
        let contraction = self.check_contraction()?;
        let tol = self.herd.tol();

        match method {
            SolverMethod::FixedPoint => {
                let mut current = lower;
                for iteration in 1..=MAX_SOLVER_ITERATIONS {
                    let next = self.iteration_map(current)?;
                    let delta = (next - current).abs();
                    current = next;
                    if delta < tol {
                        let residual = (self.iteration_map(current)? - current).abs();
                        if residual <= tol {
                            return Ok(EtaSolution {
                                eta: current.clamp(lower, upper),
                                eta_lower: lower,
                                eta_upper: upper,
                                method: SolverMethod::FixedPoint,
                                iterations: iteration,
                                residual,
                                contraction_ok: contraction.holds,
                            });
                        }
                    }
                }
                let residual = (self.iteration_map(current)? - current).abs();
                Err(Error::EtaNoConvergence {
                    iterations: MAX_SOLVER_ITERATIONS,
                    last: current,
                    residual,
                })
            }
            SolverMethod::Bisection => {
                // g(xi) = f(xi) - xi is strictly decreasing with
                // g(lower) = upper - lower >= 0 >= g(upper).
                let mut lo = lower;
                let mut hi = upper;
                let mut mid = 0.5 * (lo + hi);
                for iteration in 1..=MAX_SOLVER_ITERATIONS {
                    mid = 0.5 * (lo + hi);
                    let g_mid = self.iteration_map(mid)? - mid;
                    if g_mid.abs() <= tol {
                        return Ok(EtaSolution {
                            eta: mid,
                            eta_lower: lower,
                            eta_upper: upper,
                            method: SolverMethod::Bisection,
                            iterations: iteration,
                            residual: g_mid.abs(),
                            contraction_ok: contraction.holds,
                        });
                    }
                    if g_mid > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < f64::EPSILON * mid.abs() {
                        // Bracket exhausted at machine precision; accept if the
                        // residual is honest, otherwise report.
                        let residual = (self.iteration_map(mid)? - mid).abs();
                        if residual <= tol {
                            return Ok(EtaSolution {
                                eta: mid,
                                eta_lower: lower,
                                eta_upper: upper,
                                method: SolverMethod::Bisection,
                                iterations: iteration,
                                residual,
                                contraction_ok: contraction.holds,
                            });
                        }
                        return Err(Error::EtaNoConvergence {
                            iterations: iteration,
                            last: mid,
                            residual,
                        });
                    }
                }
                let residual = (self.iteration_map(mid)? - mid).abs();
                Err(Error::EtaNoConvergence {
                    iterations: MAX_SOLVER_ITERATIONS,
                    last: mid,
                    residual,
                })
            }
        }
    }

    /// A1's optimal decision given a converged eta.
    ///
    /// `P1*(t) = [(eta a2 s^2 e^{varrho r (T-t)} + theta) /
    ///            (eta a1 s^2 e^{varrho r (T-t)} + theta)] * v/(a2 s^2) e^{r(t-T)}`.
    pub fn optimal_decision(&self, eta: &EtaSolution, grid: &TimeGrid) -> Result<DecisionCurve> {
        let sigma_sq = self.market.sigma_sq();
        let theta = self.herd.theta();
        let decay = self.varrho() * self.market.r;
        let horizon = grid.horizon();
        let values = grid
            .points()
            .iter()
            .map(|&t| {
                let e = (decay * (horizon - t)).exp();
                let bracket = (eta.eta * self.expert.alpha * sigma_sq * e + theta)
                    / (eta.eta * self.follower.alpha * sigma_sq * e + theta);
                bracket * rational_value(&self.market, self.expert.alpha, t, horizon)
            })
            .collect();
        DecisionCurve::new(grid.clone(), values)
    }
}
