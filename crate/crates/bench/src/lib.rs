//! Shared fixtures for the criterion benchmarks.

use herdopt::{AgentProfile, HerdConfig, HerdProblem, MarketParams};

/// The baseline problem used across all benchmarks.
pub fn baseline(vartheta: f64, rho: f64) -> HerdProblem {
    let market = MarketParams::new(0.04, 0.07, 0.17);
    let follower = AgentProfile::new(0.2, 0.0).expect("valid follower");
    let expert = AgentProfile::new(0.4, 0.0).expect("valid expert");
    let herd = HerdConfig::from_vartheta(vartheta, rho, 50.0, &market, &follower)
        .expect("valid herd config");
    HerdProblem::new(market, follower, expert, herd).expect("valid problem")
}
