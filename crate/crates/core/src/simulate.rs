//! Euler-Maruyama simulation of the wealth SDE under a deterministic decision
//! curve, used to validate the closed-form moments and utility stochastically.
//!
//! Every path draws from its own counter-seeded ChaCha stream, so results are
//! bit-identical regardless of thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::merton::{AgentProfile, DecisionCurve};

/// Simulation size, seeding, and retention policy. The stepping scheme is
/// fixed to Euler-Maruyama.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Keep the terminal samples so utilities can be re-evaluated later.
    pub retain_terminal: bool,
}

impl SimulationSpec {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            n_paths,
            n_steps,
            seed,
            retain_terminal: true,
        }
    }
}

/// Monte Carlo estimates of the terminal-wealth distribution and utility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub mean_terminal_wealth: f64,
    pub var_terminal_wealth: f64,
    pub mean_utility: f64,
    pub std_error_utility: f64,
    pub n_paths: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminal_samples: Option<Vec<f64>>,
}

/// Simulate the wealth SDE `dX = [rX + vP] dt + sigma P dW` with
/// Euler-Maruyama and report terminal statistics under the agent's CARA
/// utility.
///
/// The decision curve is linearly interpolated onto the simulation steps, so
/// its grid need not match `n_steps`.
pub fn simulate_wealth(
    market: &MarketParams,
    agent: &AgentProfile,
    decision: &DecisionCurve,
    spec: &SimulationSpec,
) -> Result<SimulationResult> {
    market.ensure_valid()?;
    agent.ensure_valid()?;
    if spec.n_paths == 0 || spec.n_steps == 0 {
        return Err(Error::InvalidGrid {
            reason: format!(
                "simulation needs n_paths >= 1 and n_steps >= 1, got {} and {}",
                spec.n_paths, spec.n_steps
            ),
        });
    }

    let horizon = decision.grid().horizon();
    let dt = horizon / spec.n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let (r, v, sigma) = (market.r, market.excess_return(), market.sigma);
    // Left-endpoint allocation values for each step.
    let allocations: Vec<f64> = (0..spec.n_steps)
        .map(|k| decision.value_at(k as f64 * dt))
        .collect();
    let x0 = agent.x0;
    let seed = spec.seed;

    let terminals: Vec<f64> = (0..spec.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            let mut wealth = x0;
            for &allocation in &allocations {
                let noise: f64 = StandardNormal.sample(&mut rng);
                wealth += (r * wealth + v * allocation) * dt + sigma * allocation * sqrt_dt * noise;
            }
            wealth
        })
        .collect();

    // Reductions run sequentially over the ordered sample vector so the
    // result does not depend on the parallel schedule.
    let (mean, var) = sample_mean_var(&terminals);
    let (mean_utility, std_error_utility) = utility_stats(&terminals, agent.alpha);

    Ok(SimulationResult {
        mean_terminal_wealth: mean,
        var_terminal_wealth: var,
        mean_utility,
        std_error_utility,
        n_paths: terminals.len(),
        terminal_samples: spec.retain_terminal.then_some(terminals),
    })
}

/// Re-evaluate the Monte Carlo utility estimate at a different risk aversion
/// without re-simulating. Requires retained terminal samples.
pub fn mc_expected_utility(result: &SimulationResult, alpha: f64) -> Result<(f64, f64)> {
    let samples = result
        .terminal_samples
        .as_ref()
        .ok_or(Error::SamplesNotRetained)?;
    Ok(utility_stats(samples, alpha))
}

/// Mean and unbiased sample variance, pivot-shifted by the first sample so
/// degenerate (all-equal) samples report exactly zero variance.
fn sample_mean_var(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let pivot = samples[0];
    let shifted_mean = samples.iter().map(|x| x - pivot).sum::<f64>() / n;
    let mean = pivot + shifted_mean;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples
        .iter()
        .map(|x| {
            let d = (x - pivot) - shifted_mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0);
    (mean, var)
}

fn utility_stats(terminals: &[f64], alpha: f64) -> (f64, f64) {
    let utilities: Vec<f64> = terminals
        .iter()
        .map(|&x| crate::merton::cara_utility(alpha, x))
        .collect();
    let (mean, var) = sample_mean_var(&utilities);
    (mean, (var / utilities.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::merton::{expected_cara_utility, rational_decision, terminal_wealth_moments};
    use approx::assert_relative_eq;

    fn base_market() -> MarketParams {
        MarketParams::new(0.04, 0.07, 0.17)
    }

    #[test]
    fn zero_decision_compounds_deterministically() {
        let market = base_market();
        let agent = AgentProfile::new(0.2, 1.0).unwrap();
        let grid = TimeGrid::new(50.0, 100).unwrap();
        let spec = SimulationSpec::new(64, 1000, 1);
        let result =
            simulate_wealth(&market, &agent, &DecisionCurve::zero(grid), &spec).unwrap();
        // No diffusion term: all paths identical, off e^{rT} only by the
        // O(dt) compounding error of the scheme.
        assert_eq!(result.var_terminal_wealth, 0.0);
        let exact = (0.04_f64 * 50.0).exp();
        let rel = (result.mean_terminal_wealth - exact).abs() / exact;
        let bound = 0.04 * 0.04 * 50.0 * (50.0 / 1000.0); // ~ r^2 T dt
        assert!(rel < bound, "compounding error {rel} above bound {bound}");
    }

    #[test]
    fn same_seed_gives_bit_identical_results() {
        let market = base_market();
        let agent = AgentProfile::new(0.2, 0.0).unwrap();
        let grid = TimeGrid::new(50.0, 200).unwrap();
        let decision = rational_decision(&market, &agent, &grid).unwrap();
        let spec = SimulationSpec::new(500, 250, 7);
        let a = simulate_wealth(&market, &agent, &decision, &spec).unwrap();
        let b = simulate_wealth(&market, &agent, &decision, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn results_do_not_depend_on_the_thread_count() {
        let market = base_market();
        let agent = AgentProfile::new(0.2, 0.0).unwrap();
        let grid = TimeGrid::new(50.0, 200).unwrap();
        let decision = rational_decision(&market, &agent, &grid).unwrap();
        let spec = SimulationSpec::new(600, 100, 9);
        let run_with = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_wealth(&market, &agent, &decision, &spec).unwrap())
        };
        let serial = run_with(1);
        let parallel = run_with(8);
        assert_eq!(serial, parallel);
    }

    #[test]
    fn sample_moments_match_the_closed_forms() {
        let market = base_market();
        let agent = AgentProfile::new(0.2, 0.0).unwrap();
        let grid = TimeGrid::new(50.0, 1000).unwrap();
        let decision = rational_decision(&market, &agent, &grid).unwrap();
        let moments = terminal_wealth_moments(&market, agent.x0, &decision).unwrap();

        let spec = SimulationSpec::new(100_000, 1000, 11);
        let result = simulate_wealth(&market, &agent, &decision, &spec).unwrap();

        let se_mean = (moments.variance / spec.n_paths as f64).sqrt();
        assert!(
            (result.mean_terminal_wealth - moments.mean).abs() < 3.0 * se_mean,
            "mean {} vs {} (3se = {})",
            result.mean_terminal_wealth,
            moments.mean,
            3.0 * se_mean
        );
        // Variance of the sample variance for a Gaussian: 2 sigma^4 / (n - 1).
        let se_var = (2.0 * moments.variance * moments.variance / (spec.n_paths as f64 - 1.0)).sqrt();
        assert!(
            (result.var_terminal_wealth - moments.variance).abs() < 3.0 * se_var,
            "variance {} vs {}",
            result.var_terminal_wealth,
            moments.variance
        );
    }

    #[test]
    fn utility_estimate_matches_the_lognormal_closed_form() {
        let market = base_market();
        let agent = AgentProfile::new(0.2, 0.0).unwrap();
        let grid = TimeGrid::new(50.0, 1000).unwrap();
        let decision = rational_decision(&market, &agent, &grid).unwrap();
        let closed = expected_cara_utility(&market, &agent, &decision).unwrap();

        let spec = SimulationSpec::new(100_000, 1000, 17);
        let result = simulate_wealth(&market, &agent, &decision, &spec).unwrap();
        assert!(
            (result.mean_utility - closed).abs() < 3.0 * result.std_error_utility,
            "MC {} vs closed form {} (3se = {})",
            result.mean_utility,
            closed,
            3.0 * result.std_error_utility
        );
    }

    #[test]
    fn utilities_can_be_reevaluated_without_resimulation() {
        let market = base_market();
        let agent = AgentProfile::new(0.2, 0.0).unwrap();
        let grid = TimeGrid::new(50.0, 100).unwrap();
        let decision = rational_decision(&market, &agent, &grid).unwrap();
        let spec = SimulationSpec::new(2000, 100, 3);
        let result = simulate_wealth(&market, &agent, &decision, &spec).unwrap();

        let (at_alpha, _) = mc_expected_utility(&result, 0.2).unwrap();
        assert_relative_eq!(at_alpha, result.mean_utility, max_relative = 1e-14);
        let (doubled, se) = mc_expected_utility(&result, 0.4).unwrap();
        assert!(doubled.is_finite() && se > 0.0);
        assert_ne!(doubled, at_alpha);

        let mut dropped = result.clone();
        dropped.terminal_samples = None;
        assert!(matches!(
            mc_expected_utility(&dropped, 0.4).unwrap_err(),
            Error::SamplesNotRetained
        ));
    }

    #[test]
    fn degenerate_sample_has_exact_utility_and_zero_error() {
        let result = SimulationResult {
            mean_terminal_wealth: 2.0,
            var_terminal_wealth: 0.0,
            mean_utility: 0.0,
            std_error_utility: 0.0,
            n_paths: 3,
            terminal_samples: Some(vec![2.0, 2.0, 2.0]),
        };
        let (u, se) = mc_expected_utility(&result, 0.5).unwrap();
        assert_relative_eq!(u, crate::merton::cara_utility(0.5, 2.0));
        assert_eq!(se, 0.0);
    }

    #[test]
    fn discretization_bias_shrinks_linearly_in_dt() {
        // Common random numbers across resolutions; the mean bias should fall
        // roughly in half when the step count doubles.
        let market = base_market();
        let agent = AgentProfile::new(0.2, 1.0).unwrap();
        let grid = TimeGrid::new(50.0, 1000).unwrap();
        let decision = rational_decision(&market, &agent, &grid).unwrap();
        let exact = terminal_wealth_moments(&market, agent.x0, &decision)
            .unwrap()
            .mean;
        let bias = |n_steps: usize| {
            let spec = SimulationSpec {
                n_paths: 200_000,
                n_steps,
                seed: 5,
                retain_terminal: false,
            };
            (simulate_wealth(&market, &agent, &decision, &spec)
                .unwrap()
                .mean_terminal_wealth
                - exact)
                .abs()
        };
        let (b250, b1000) = (bias(250), bias(1000));
        assert!(
            b1000 < b250,
            "bias should shrink with dt: {b250} -> {b1000}"
        );
    }

    #[test]
    fn rejects_empty_simulations() {
        let market = base_market();
        let agent = AgentProfile::new(0.2, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let curve = DecisionCurve::zero(grid);
        assert!(simulate_wealth(&market, &agent, &curve, &SimulationSpec::new(0, 10, 1)).is_err());
        assert!(simulate_wealth(&market, &agent, &curve, &SimulationSpec::new(10, 0, 1)).is_err());
    }
}
