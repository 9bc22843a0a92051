//! Run configuration: a single strict JSON document aggregating the market,
//! both agents, and the herd parameters.
//!
//! Unknown keys are rejected everywhere so a typo like `"alpha"` for
//! `"alpha1"` cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use herdopt::{AgentProfile, HerdConfig, HerdProblem, MarketParams};

use crate::CliError;

/// Default time-grid resolution when the document does not set one.
pub const DEFAULT_GRID_N: usize = 1000;

/// Herd block: either `theta` or `vartheta` may be given; if both are present
/// they must agree.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HerdDoc {
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub vartheta: Option<f64>,
    pub rho: f64,
    pub horizon: f64,
}

/// The full run configuration document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketParams,
    pub agent1: AgentProfile,
    pub agent2: AgentProfile,
    pub herd: HerdDoc,
    #[serde(default)]
    pub grid_n: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    /// Optional default output directory, overridden by `--out`.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parse and validate a configuration document.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<(), CliError> {
        let invalid = |msg: String| Err(CliError::Validation(msg));

        let market_check = self.market.validate();
        if !market_check.is_valid() {
            return invalid(format!("config market: {market_check}"));
        }
        self.agent1
            .ensure_valid()
            .map_err(|e| CliError::Validation(format!("config agent1: {e}")))?;
        self.agent2
            .ensure_valid()
            .map_err(|e| CliError::Validation(format!("config agent2: {e}")))?;

        let zero_theta = self.herd.theta == Some(0.0) || self.herd.vartheta == Some(0.0);
        if zero_theta {
            return invalid(
                "config herd: herd coefficient must be positive; use the merton command for theta = 0"
                    .into(),
            );
        }
        match (self.herd.theta, self.herd.vartheta) {
            (None, None) => {
                return invalid("config herd: one of `theta` or `vartheta` is required".into())
            }
            (Some(theta), Some(vartheta)) => {
                let derived = vartheta * self.agent1.alpha * self.market.sigma_sq();
                if (theta - derived).abs() > 1e-12 * theta.abs().max(1.0) {
                    return invalid(format!(
                        "config herd: theta = {theta} and vartheta = {vartheta} disagree \
                         (vartheta implies theta = {derived}); give one or make them consistent"
                    ));
                }
            }
            _ => {}
        }

        if let Some(n) = self.grid_n {
            if n < 10 || n % 2 != 0 {
                return invalid(format!("config grid_n: must be even and >= 10, got {n}"));
            }
        }
        if let Some(tol) = self.tol {
            if tol <= 0.0 || tol.is_nan() {
                return invalid(format!("config tol: must be positive, got {tol}"));
            }
        }
        Ok(())
    }

    /// The herd coefficient, whichever way it was given.
    pub fn theta(&self) -> f64 {
        match (self.herd.theta, self.herd.vartheta) {
            (Some(theta), _) => theta,
            (None, Some(vartheta)) => vartheta * self.agent1.alpha * self.market.sigma_sq(),
            (None, None) => unreachable!("validated at parse time"),
        }
    }

    /// Build the validated problem, applying CLI overrides when given.
    pub fn to_problem(
        &self,
        grid_n_override: Option<usize>,
        tol_override: Option<f64>,
    ) -> Result<HerdProblem, CliError> {
        let grid_n = grid_n_override
            .or(self.grid_n)
            .unwrap_or(DEFAULT_GRID_N);
        let mut herd = HerdConfig::new(self.theta(), self.herd.rho, self.herd.horizon)
            .and_then(|h| h.with_grid_n(grid_n))?;
        if let Some(tol) = tol_override.or(self.tol) {
            herd = herd.with_tol(tol)?;
        }
        Ok(HerdProblem::new(
            self.market,
            self.agent1,
            self.agent2,
            herd,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const BASE: &str = r#"{
        "market": {"r": 0.04, "mu": 0.07, "sigma": 0.17},
        "agent1": {"alpha": 0.2, "x0": 0.0},
        "agent2": {"alpha": 0.4, "x0": 0.0},
        "herd": {"vartheta": 0.0025, "rho": 0.0, "horizon": 50.0}
    }"#;

    #[test]
    fn baseline_config_parses() {
        let config = RunConfig::parse(BASE).unwrap();
        assert_eq!(config.agent1.alpha, 0.2);
        assert!((config.theta() - 0.0025 * 0.2 * 0.0289).abs() < 1e-15);
        let problem = config.to_problem(None, None).unwrap();
        assert!((problem.vartheta() - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn zero_theta_points_at_the_merton_command() {
        let text = BASE.replace("\"vartheta\": 0.0025", "\"theta\": 0.0");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("merton command"));
    }

    #[test]
    fn negative_rho_is_rejected() {
        let text = BASE.replace("\"rho\": 0.0", "\"rho\": -1.0");
        let config = RunConfig::parse(&text).unwrap();
        // rho is range-checked when the herd config is built.
        assert!(config.to_problem(None, None).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let text = BASE.replace("\"x0\": 0.0},\n        \"agent2\"", "\"x0\": 0.0, \"alpha2\": 1.0},\n        \"agent2\"");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("alpha2"), "{err}");
    }

    #[test]
    fn inconsistent_theta_and_vartheta_are_rejected() {
        let text = BASE.replace(
            "\"vartheta\": 0.0025",
            "\"vartheta\": 0.0025, \"theta\": 0.5",
        );
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("disagree"), "{err}");
    }

    #[test]
    fn consistent_theta_and_vartheta_are_accepted() {
        let theta = 0.0025 * 0.2 * 0.0289;
        let text = BASE.replace(
            "\"vartheta\": 0.0025",
            &format!("\"vartheta\": 0.0025, \"theta\": {theta}"),
        );
        assert!(RunConfig::parse(&text).is_ok());
    }

    #[test]
    fn odd_grid_n_is_rejected_at_the_cli_layer() {
        let text = BASE.replace(
            "\"herd\":",
            "\"grid_n\": 11, \"herd\":",
        );
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn theta_only_form_works() {
        let text = BASE.replace("\"vartheta\": 0.0025", "\"theta\": 1e-4");
        let config = RunConfig::parse(&text).unwrap();
        assert_eq!(config.theta(), 1e-4);
    }
}
