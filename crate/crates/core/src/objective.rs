//! The herd objective functional and two independent optimality checks: a
//! first-variation (perturbation) test and a discretized gradient-ascent
//! oracle that knows nothing about the closed form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{simpson_weights, TimeGrid};
use crate::herd::HerdProblem;
use crate::merton::{expected_cara_utility, DecisionCurve};

/// Relative step for the first-variation central differences.
pub const VARIATION_EPSILON_REL: f64 = 1e-5;

/// Iteration budget for the gradient-ascent oracle.
pub const BRUTE_FORCE_MAX_ITERS: usize = 200_000;

/// Gradient sup-norm at which the oracle declares convergence.
pub const BRUTE_FORCE_GRAD_TOL: f64 = 1e-8;

/// Objective value split into its two competing terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown {
    /// Expected CARA utility of terminal wealth.
    pub expected_utility: f64,
    /// Average deviation from the expert's rational decision.
    pub avg_deviation: f64,
    /// `expected_utility - theta * avg_deviation`.
    pub total: f64,
}

/// Exponentially weighted squared distance between two decision curves:
/// `1/2 ∫ e^{rho r (T-t)} [P1(t) - P2(t)]^2 dt`.
pub fn average_deviation(
    p1: &DecisionCurve,
    p2: &DecisionCurve,
    rho: f64,
    r: f64,
) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidHerdConfig {
            reason: format!("decay rate must be >= 0, got rho = {rho}"),
        });
    }
    p1.ensure_same_grid(p2)?;
    let grid = p1.grid();
    let horizon = grid.horizon();
    let weighted: Vec<f64> = grid
        .points()
        .iter()
        .zip(p1.values().iter().zip(p2.values()))
        .map(|(&t, (&a, &b))| (rho * r * (horizon - t)).exp() * (a - b) * (a - b))
        .collect();
    Ok(0.5 * grid.integrate(&weighted)?)
}

/// Evaluate the follower's objective for an arbitrary decision curve.
pub fn objective_value(problem: &HerdProblem, p1: &DecisionCurve) -> Result<ObjectiveBreakdown> {
    let expert_rational = problem.rational_expert(p1.grid())?;
    let expected_utility = expected_cara_utility(&problem.market, &problem.follower, p1)?;
    let avg_deviation = average_deviation(
        p1,
        &expert_rational,
        problem.herd.rho(),
        problem.market.r,
    )?;
    Ok(ObjectiveBreakdown {
        expected_utility,
        avg_deviation,
        total: expected_utility - problem.herd.theta() * avg_deviation,
    })
}

/// Outcome of probing the objective around a candidate optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstVariationReport {
    /// Largest |dJ/d eps| over all probed directions; ~0 at an optimum.
    pub max_abs_derivative: f64,
    /// Largest second central difference; must stay negative (concavity).
    pub max_second_difference: f64,
    /// Per-direction directional derivatives.
    pub derivatives: Vec<f64>,
    /// Absolute step used for the central differences.
    pub epsilon: f64,
}

/// Estimate directional derivatives of the objective at `candidate` along
/// `directions` unit-normalized smooth perturbations (a truncated Fourier
/// ladder followed by seeded random cubic splines).
pub fn first_variation_test(
    problem: &HerdProblem,
    candidate: &DecisionCurve,
    directions: usize,
    epsilon_rel: f64,
    seed: u64,
) -> Result<FirstVariationReport> {
    let grid = candidate.grid();
    let scale = candidate.sup_norm();
    let epsilon = epsilon_rel * if scale > 0.0 { scale } else { 1.0 };
    let base = objective_value(problem, candidate)?.total;

    let mut derivatives = Vec::with_capacity(directions);
    let mut max_second = f64::NEG_INFINITY;
    for direction in perturbation_directions(grid, directions, seed) {
        let shifted = |sign: f64| -> Result<f64> {
            let values: Vec<f64> = candidate
                .values()
                .iter()
                .zip(&direction)
                .map(|(&p, &h)| p + sign * epsilon * h)
                .collect();
            let curve = DecisionCurve::new(grid.clone(), values)?;
            Ok(objective_value(problem, &curve)?.total)
        };
        let plus = shifted(1.0)?;
        let minus = shifted(-1.0)?;
        derivatives.push((plus - minus) / (2.0 * epsilon));
        max_second = max_second.max(plus + minus - 2.0 * base);
    }

    let max_abs_derivative = derivatives.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(FirstVariationReport {
        max_abs_derivative,
        max_second_difference: max_second,
        derivatives,
        epsilon,
    })
}

/// Smooth sup-norm-one perturbation directions: constant, sin/cos ladder,
/// then natural cubic splines through seeded random nodes.
fn perturbation_directions(grid: &TimeGrid, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let horizon = grid.horizon();
    let points = grid.points();
    let fourier = count.min(13);
    let mut directions = Vec::with_capacity(count);

    for k in 0..fourier {
        let values: Vec<f64> = points
            .iter()
            .map(|&t| {
                if k == 0 {
                    1.0
                } else {
                    let m = ((k - 1) / 2 + 1) as f64;
                    let phase = m * std::f64::consts::PI * t / horizon;
                    if k % 2 == 1 {
                        phase.sin()
                    } else {
                        phase.cos()
                    }
                }
            })
            .collect();
        directions.push(normalize_sup(values));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while directions.len() < count {
        let nodes: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spline = NaturalCubicSpline::fit(horizon, &nodes);
        let values: Vec<f64> = points.iter().map(|&t| spline.eval(t)).collect();
        directions.push(normalize_sup(values));
    }
    directions
}

fn normalize_sup(mut values: Vec<f64>) -> Vec<f64> {
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup > 0.0 {
        for v in &mut values {
            *v /= sup;
        }
    }
    values
}

/// Natural cubic spline through uniformly spaced nodes on [0, horizon].
struct NaturalCubicSpline {
    step: f64,
    nodes: Vec<f64>,
    second_derivs: Vec<f64>,
}

impl NaturalCubicSpline {
    fn fit(horizon: f64, nodes: &[f64]) -> Self {
        let n = nodes.len() - 1;
        let h = horizon / n as f64;
        // Tridiagonal system for interior second derivatives, natural ends.
        let mut diag = vec![2.0 * (h + h) / 3.0; n - 1];
        let off = h / 3.0;
        let mut rhs: Vec<f64> = (1..n)
            .map(|i| (nodes[i + 1] - 2.0 * nodes[i] + nodes[i - 1]) / h)
            .collect();
        // Thomas forward sweep.
        for i in 1..n - 1 {
            let w = off / diag[i - 1];
            diag[i] -= w * off;
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m_inner = vec![0.0; n - 1];
        if n >= 2 {
            m_inner[n - 2] = rhs[n - 2] / diag[n - 2];
            for i in (0..n.saturating_sub(2)).rev() {
                m_inner[i] = (rhs[i] - off * m_inner[i + 1]) / diag[i];
            }
        }
        let mut second_derivs = vec![0.0; n + 1];
        second_derivs[1..n].copy_from_slice(&m_inner);
        Self {
            step: h,
            nodes: nodes.to_vec(),
            second_derivs,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.nodes.len() - 1;
        let idx = ((t / self.step).floor() as usize).min(n - 1);
        let a = t - self.step * idx as f64;
        let b = self.step - a;
        let (y0, y1) = (self.nodes[idx], self.nodes[idx + 1]);
        let (m0, m1) = (self.second_derivs[idx], self.second_derivs[idx + 1]);
        (m0 * b * b * b + m1 * a * a * a) / (6.0 * self.step)
            + (y0 / self.step - m0 * self.step / 6.0) * b
            + (y1 / self.step - m1 * self.step / 6.0) * a
    }
}

/// Maximize the objective over piecewise-linear curves on a coarse grid by
/// plain gradient ascent with numerically estimated gradients and Armijo
/// backtracking, starting from the zero curve.
///
/// This is the independent oracle for the analytical solution: it never sees
/// the closed form, only objective evaluations.
pub fn brute_force_optimize(problem: &HerdProblem, coarse_n: usize) -> Result<DecisionCurve> {
    if coarse_n > 200 {
        return Err(Error::InvalidGrid {
            reason: format!("oracle grid is capped at 200 intervals, got {coarse_n}"),
        });
    }
    let grid = TimeGrid::new(problem.herd.horizon(), coarse_n)?;
    let n_points = grid.points().len();
    let horizon = grid.horizon();
    let market = &problem.market;
    let follower = &problem.follower;
    let (r, v, sigma_sq) = (market.r, market.excess_return(), market.sigma_sq());
    let (alpha, x1) = (follower.alpha, follower.x0);
    let (theta, rho) = (problem.herd.theta(), problem.herd.rho());

    let weights = simpson_weights(grid.n_intervals(), grid.step());
    let drift_weight: Vec<f64> = grid
        .points()
        .iter()
        .map(|&t| (r * (horizon - t)).exp())
        .collect();
    let variance_weight: Vec<f64> = drift_weight.iter().map(|e| e * e).collect();
    let deviation_weight: Vec<f64> = grid
        .points()
        .iter()
        .map(|&t| (rho * r * (horizon - t)).exp())
        .collect();
    let expert_values = problem.rational_expert(&grid)?.values().to_vec();
    let wealth_term = x1 * (r * horizon).exp();

    let objective = |p: &[f64]| -> f64 {
        let mut drift = 0.0;
        let mut variance = 0.0;
        let mut deviation = 0.0;
        for i in 0..n_points {
            drift += weights[i] * drift_weight[i] * p[i];
            variance += weights[i] * variance_weight[i] * p[i] * p[i];
            let diff = p[i] - expert_values[i];
            deviation += weights[i] * deviation_weight[i] * diff * diff;
        }
        let exponent = -alpha * wealth_term - alpha * v * drift + 0.5 * alpha * alpha * sigma_sq * variance;
        if exponent > crate::merton::MAX_EXPONENT {
            return f64::NEG_INFINITY;
        }
        -exponent.exp() / alpha - 0.5 * theta * deviation
    };

    let mut current = vec![0.0; n_points];
    let mut value = objective(&current);
    let mut step = 1.0;
    let mut gradient = vec![0.0; n_points];
    let mut stalled = 0usize;

    for iteration in 1..=BRUTE_FORCE_MAX_ITERS {
        let scale = current.iter().fold(1.0f64, |m, p| m.max(p.abs()));
        let fd_step = 1e-6 * scale;
        let mut grad_sup = 0.0f64;
        let mut grad_norm_sq = 0.0;
        for i in 0..n_points {
            let saved = current[i];
            current[i] = saved + fd_step;
            let plus = objective(&current);
            current[i] = saved - fd_step;
            let minus = objective(&current);
            current[i] = saved;
            let g = (plus - minus) / (2.0 * fd_step);
            gradient[i] = g;
            grad_sup = grad_sup.max(g.abs());
            grad_norm_sq += g * g;
        }

        if grad_sup <= BRUTE_FORCE_GRAD_TOL {
            return DecisionCurve::new(grid, current);
        }

        // Armijo backtracking along the gradient.
        let mut advanced = false;
        let mut step_taken = 0.0;
        for _ in 0..60 {
            let candidate: Vec<f64> = current
                .iter()
                .zip(&gradient)
                .map(|(p, g)| p + step * g)
                .collect();
            let candidate_value = objective(&candidate);
            if candidate_value >= value + 1e-4 * step * grad_norm_sq {
                current = candidate;
                value = candidate_value;
                step_taken = step;
                step = (step * 2.0).min(1e8);
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            // Step collapsed to nothing; the gradient estimate is pure noise.
            return Err(Error::BruteForceNoConvergence {
                iterations: iteration,
                grad_sup,
                best: Box::new(DecisionCurve::new(grid, current)?),
            });
        }

        // Stiff deviation penalties (huge theta) push the objective's
        // curvature far above the resolution the finite-difference gradient
        // can reach; the iterate then stops moving while the residual
        // gradient sits on the floating-point floor. Treat three consecutive
        // sub-resolution moves as convergence.
        if step_taken * grad_sup <= 1e-11 * scale {
            stalled += 1;
            if stalled >= 3 {
                return DecisionCurve::new(grid, current);
            }
        } else {
            stalled = 0;
        }
    }

    let grad_sup = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    Err(Error::BruteForceNoConvergence {
        iterations: BRUTE_FORCE_MAX_ITERS,
        grad_sup,
        best: Box::new(DecisionCurve::new(grid, current)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::herd::HerdConfig;
    use crate::market::MarketParams;
    use crate::merton::{rational_decision, AgentProfile};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn base_problem(vartheta: f64, rho: f64) -> HerdProblem {
        let market = MarketParams::new(0.04, 0.07, 0.17);
        let follower = AgentProfile::new(0.2, 0.0).unwrap();
        let expert = AgentProfile::new(0.4, 0.0).unwrap();
        let herd = HerdConfig::from_vartheta(vartheta, rho, 50.0, &market, &follower).unwrap();
        HerdProblem::new(market, follower, expert, herd).unwrap()
    }

    #[test]
    fn deviation_of_identical_curves_is_zero() {
        let problem = base_problem(1e-3, 0.0);
        let grid = problem.grid();
        let curve = problem.rational_expert(&grid).unwrap();
        let d = average_deviation(&curve, &curve, 0.0, 0.04).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn zero_decay_reduces_to_the_euclidean_distance() {
        let problem = base_problem(1e-3, 0.0);
        let grid = problem.grid();
        let a = problem.rational_follower(&grid).unwrap();
        let b = problem.rational_expert(&grid).unwrap();
        let weighted = average_deviation(&a, &b, 0.0, 0.04).unwrap();
        let squared: Vec<f64> = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y) * (x - y))
            .collect();
        let plain = 0.5 * grid.integrate(&squared).unwrap();
        assert_relative_eq!(weighted, plain, max_relative = 1e-14);
    }

    #[test]
    fn constant_gap_matches_the_analytic_integral() {
        // For P1 - P2 = d constant and rho r > 0:
        // D = d^2 (e^{rho r T} - 1) / (2 rho r).
        let grid = TimeGrid::new(50.0, 1000).unwrap();
        let zero = DecisionCurve::zero(grid.clone());
        let offset = zero.map(|_, _| 0.7);
        let (rho, r) = (1.5, 0.04);
        let d = average_deviation(&offset, &zero, rho, r).unwrap();
        let analytic = 0.5 * 0.7 * 0.7 * ((rho * r * 50.0_f64).exp() - 1.0) / (rho * r);
        assert_relative_eq!(d, analytic, max_relative = 1e-10);
    }

    #[test]
    fn deviation_rejects_negative_rho() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let curve = DecisionCurve::zero(grid);
        assert!(average_deviation(&curve, &curve, -0.1, 0.04).is_err());
    }

    #[test]
    fn objective_breakdown_is_consistent() {
        let problem = base_problem(1.0 / 400.0, 0.0);
        let grid = problem.grid();
        let expert = problem.rational_expert(&grid).unwrap();
        // Mimicking the expert zeroes the deviation term.
        let breakdown = objective_value(&problem, &expert).unwrap();
        assert_eq!(breakdown.avg_deviation, 0.0);
        assert_eq!(breakdown.total, breakdown.expected_utility);

        let own = problem.rational_follower(&grid).unwrap();
        let b = objective_value(&problem, &own).unwrap();
        assert!(b.avg_deviation > 0.0);
        assert_eq!(b.total, b.expected_utility - problem.herd.theta() * b.avg_deviation);

        // theta -> 0: the deviation term drops out of the total.
        let market = problem.market;
        let herd = HerdConfig::new(1e-14, 0.0, 50.0).unwrap();
        let vanishing =
            HerdProblem::new(market, problem.follower, problem.expert, herd).unwrap();
        let b = objective_value(&vanishing, &own).unwrap();
        assert_relative_eq!(b.total, b.expected_utility, max_relative = 1e-12);
    }

    #[test]
    fn optimum_beats_both_rational_decisions() {
        let problem = base_problem(1.0 / 200.0, 2.0);
        let grid = problem.grid();
        let sol = problem.solve_eta().unwrap();
        let optimal = problem.optimal_decision(&sol, &grid).unwrap();
        let j_star = objective_value(&problem, &optimal).unwrap().total;
        let j_own = objective_value(&problem, &problem.rational_follower(&grid).unwrap())
            .unwrap()
            .total;
        let j_expert = objective_value(&problem, &problem.rational_expert(&grid).unwrap())
            .unwrap()
            .total;
        assert!(j_star >= j_own && j_star >= j_expert);
    }

    #[test]
    fn first_variation_vanishes_at_the_optimum() {
        let problem = base_problem(1.0 / 400.0, 0.0);
        let grid = problem.grid();
        let sol = problem.solve_eta().unwrap();
        let optimal = problem.optimal_decision(&sol, &grid).unwrap();
        let report =
            first_variation_test(&problem, &optimal, 100, VARIATION_EPSILON_REL, 99).unwrap();
        assert!(
            report.max_abs_derivative <= 1e-6,
            "dJ = {} at the optimum",
            report.max_abs_derivative
        );
        assert!(report.max_second_difference < 0.0, "objective not concave");
    }

    #[test]
    fn first_variation_flags_a_non_optimal_curve() {
        let problem = base_problem(1.0 / 400.0, 0.0);
        let grid = problem.grid();
        let own = problem.rational_follower(&grid).unwrap();
        let report = first_variation_test(&problem, &own, 100, VARIATION_EPSILON_REL, 99).unwrap();
        assert!(
            report.max_abs_derivative > 1e-4,
            "dJ = {} should be visibly nonzero at the rational decision",
            report.max_abs_derivative
        );
    }

    #[test]
    fn objective_is_strictly_concave_along_segments() {
        let problem = base_problem(1.0 / 200.0, 0.0);
        let grid = TimeGrid::new(50.0, 200).unwrap();
        let a = problem.rational_follower(&grid).unwrap();
        let b = problem.rational_expert(&grid).unwrap();
        for lambda in [0.2, 0.5, 0.8] {
            let mix = DecisionCurve::new(
                grid.clone(),
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                    .collect(),
            )
            .unwrap();
            let j_mix = objective_value(&problem, &mix).unwrap().total;
            let j_a = objective_value(&problem, &a).unwrap().total;
            let j_b = objective_value(&problem, &b).unwrap().total;
            assert!(
                j_mix > lambda * j_a + (1.0 - lambda) * j_b - 1e-12,
                "concavity violated at lambda = {lambda}"
            );
        }
    }

    #[test]
    fn oracle_recovers_the_common_rational_decision_for_equal_alphas() {
        let market = MarketParams::new(0.04, 0.07, 0.17);
        let agent = AgentProfile::new(0.4, 0.0).unwrap();
        let herd = HerdConfig::from_vartheta(1.0 / 200.0, 0.0, 50.0, &market, &agent).unwrap();
        let problem = HerdProblem::new(market, agent, agent, herd).unwrap();
        let oracle = brute_force_optimize(&problem, 50).unwrap();
        let rational = rational_decision(&market, &agent, oracle.grid()).unwrap();
        let dist = oracle.sup_distance(&rational).unwrap();
        assert!(dist < 1e-3, "oracle missed the known optimum by {dist}");
    }

    #[test]
    fn oracle_follows_the_expert_when_theta_dominates() {
        let market = MarketParams::new(0.04, 0.07, 0.17);
        let follower = AgentProfile::new(0.2, 0.0).unwrap();
        let expert = AgentProfile::new(0.4, 0.0).unwrap();
        let herd = HerdConfig::new(1e6, 0.0, 50.0).unwrap();
        let problem = HerdProblem::new(market, follower, expert, herd).unwrap();
        let oracle = brute_force_optimize(&problem, 50).unwrap();
        let expert_curve = problem.rational_expert(oracle.grid()).unwrap();
        let dist = oracle.sup_distance(&expert_curve).unwrap();
        assert!(dist < 1e-3, "oracle should mimic the expert, off by {dist}");
    }

    #[test]
    fn oracle_grid_is_capped() {
        let problem = base_problem(1e-3, 0.0);
        assert!(brute_force_optimize(&problem, 500).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn average_deviation_is_nonnegative_and_definite(
            seed in 0u64..500,
            rho in 0.0f64..4.0,
        ) {
            use rand::{Rng, SeedableRng};
            let grid = TimeGrid::new(10.0, 40).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = DecisionCurve::new(
                grid.clone(),
                (0..41).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            ).unwrap();
            let b = DecisionCurve::new(
                grid.clone(),
                (0..41).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            ).unwrap();
            let d = average_deviation(&a, &b, rho, 0.04).unwrap();
            prop_assert!(d >= 0.0);
            let identical = average_deviation(&a, &a, rho, 0.04).unwrap();
            prop_assert_eq!(identical, 0.0);
        }
    }
}
