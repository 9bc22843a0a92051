//! Market model: parameters, assumption checks, and GBM estimation from
//! daily closing prices.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Year fraction of one trading day (252 trading days per year).
pub const TRADING_DAY_DT: f64 = 1.0 / 252.0;

/// Parameters of the one-risky-asset market.
///
/// The excess return rate `v = mu - r` is always derived, never stored, so it
/// cannot drift out of sync with `mu` and `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Risk-free interest rate (per year).
    pub r: f64,
    /// Appreciation rate of the risky asset (per year).
    pub mu: f64,
    /// Volatility of the risky asset (per sqrt-year).
    pub sigma: f64,
}

impl MarketParams {
    pub fn new(r: f64, mu: f64, sigma: f64) -> Self {
        Self { r, mu, sigma }
    }

    /// Excess return rate v = mu - r.
    pub fn excess_return(&self) -> f64 {
        self.mu - self.r
    }

    /// sigma squared, used pervasively in the closed forms.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// Check the model assumptions (sigma > 0 and v > 0).
    pub fn validate(&self) -> MarketValidation {
        let mut violations = Vec::new();
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            violations.push(MarketViolation::NonPositiveSigma);
        }
        if !(self.excess_return() > 0.0) || !self.excess_return().is_finite() {
            violations.push(MarketViolation::NonPositiveExcessReturn);
        }
        if !self.r.is_finite() || !self.mu.is_finite() {
            violations.push(MarketViolation::NonFinite);
        }
        MarketValidation { violations }
    }

    /// Error out unless the assumptions hold.
    pub fn ensure_valid(&self) -> Result<()> {
        let validation = self.validate();
        if validation.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidMarket {
                reasons: validation.to_string(),
            })
        }
    }
}

/// Outcome of [`MarketParams::validate`]: empty means all assumptions hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarketValidation {
    pub violations: Vec<MarketViolation>,
}

impl MarketValidation {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for MarketValidation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        let reasons: Vec<&str> = self.violations.iter().map(|v| v.as_str()).collect();
        write!(f, "{}", reasons.join(", "))
    }
}

/// A violated market assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarketViolation {
    NonPositiveSigma,
    NonPositiveExcessReturn,
    NonFinite,
}

impl MarketViolation {
    pub fn as_str(&self) -> &'static str {
        match self {
            MarketViolation::NonPositiveSigma => "sigma <= 0",
            MarketViolation::NonPositiveExcessReturn => "v <= 0",
            MarketViolation::NonFinite => "non-finite parameter",
        }
    }
}

/// Daily closing prices with their calendar dates.
#[derive(Debug, Clone)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
    dt: f64,
}

impl PriceSeries {
    /// Validating constructor: positive prices, strictly increasing dates,
    /// at least three observations (two log returns).
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>, dt: f64) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::InvalidSeries {
                reason: format!("{} dates but {} closes", dates.len(), closes.len()),
            });
        }
        if closes.len() < 3 {
            return Err(Error::InvalidSeries {
                reason: format!("need at least 3 observations, got {}", closes.len()),
            });
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidSeries {
                reason: format!("dt must be positive, got {dt}"),
            });
        }
        if let Some(p) = closes.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidSeries {
                reason: format!("non-positive close {p}"),
            });
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSeries {
                reason: format!("dates not strictly increasing at {} -> {}", w[0], w[1]),
            });
        }
        Ok(Self { dates, closes, dt })
    }

    /// Read a `date,close` CSV (header required, ISO-8601 dates).
    pub fn from_csv_reader(reader: impl Read, dt: f64) -> Result<Self> {
        let mut csv_reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);

        {
            let headers = csv_reader
                .headers()
                .map_err(|e| Error::CsvFormat {
                    line: 1,
                    reason: e.to_string(),
                })?
                .clone();
            if headers.len() < 2 || headers.get(0) != Some("date") || headers.get(1) != Some("close")
            {
                return Err(Error::CsvFormat {
                    line: 1,
                    reason: format!("expected header `date,close`, got `{}`", headers.as_slice()),
                });
            }
        }

        let mut dates = Vec::new();
        let mut closes = Vec::new();
        for (idx, record) in csv_reader.records().enumerate() {
            let line = idx + 2; // 1-based, after the header
            let record = record.map_err(|e| Error::CsvFormat {
                line,
                reason: e.to_string(),
            })?;
            let date_field = record.get(0).ok_or_else(|| Error::CsvFormat {
                line,
                reason: "missing date field".into(),
            })?;
            let close_field = record.get(1).ok_or_else(|| Error::CsvFormat {
                line,
                reason: "missing close field".into(),
            })?;
            let date = NaiveDate::parse_from_str(date_field, "%Y-%m-%d").map_err(|e| {
                Error::CsvFormat {
                    line,
                    reason: format!("bad date `{date_field}`: {e}"),
                }
            })?;
            let close: f64 = close_field.parse().map_err(|e| Error::CsvFormat {
                line,
                reason: format!("bad close `{close_field}`: {e}"),
            })?;
            dates.push(date);
            closes.push(close);
        }
        Self::new(dates, closes, dt)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, dt: f64) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, dt)
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Log returns ln(S_{k+1} / S_k).
    pub fn log_returns(&self) -> Vec<f64> {
        self.closes
            .windows(2)
            .map(|w| (w[1] / w[0]).ln())
            .collect()
    }
}

/// Estimate GBM parameters from a price series by exact maximum likelihood on
/// log returns: `sigma_hat = sd(returns)/sqrt(dt)`,
/// `mu_hat = mean(returns)/dt + sigma_hat^2/2`.
///
/// Fails when the resulting market violates the assumptions (v <= 0 or a
/// constant series with zero volatility): the caller must pick a different
/// risk-free rate or series rather than receive a market the solver rejects.
pub fn estimate_gbm_params(series: &PriceSeries, r: f64) -> Result<MarketParams> {
    let returns = series.log_returns();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sigma_hat = (var / series.dt()).sqrt();
    let mu_hat = mean / series.dt() + 0.5 * sigma_hat * sigma_hat;

    let params = MarketParams::new(r, mu_hat, sigma_hat);
    let validation = params.validate();
    if !validation.is_valid() {
        return Err(Error::EstimateFailed {
            reason: format!("estimated parameters violate assumptions: {validation}"),
        });
    }
    Ok(params)
}

/// Generate a synthetic GBM price series by exact lognormal stepping,
/// `S_{k+1} = S_k exp((mu - sigma^2/2) dt + sigma sqrt(dt) xi_k)`.
///
/// Stands in for the non-redistributable index data in tests and demos;
/// dates are consecutive calendar days starting 1972-01-03.
pub fn synthetic_gbm_series(
    mu: f64,
    sigma: f64,
    s0: f64,
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<PriceSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drift = (mu - 0.5 * sigma * sigma) * dt;
    let diffusion = sigma * dt.sqrt();

    let start = NaiveDate::from_ymd_opt(1972, 1, 3).expect("valid date");
    let mut closes = Vec::with_capacity(n_steps + 1);
    let mut dates = Vec::with_capacity(n_steps + 1);
    let mut price = s0;
    for k in 0..=n_steps {
        dates.push(start + chrono::Days::new(k as u64));
        closes.push(price);
        let xi: f64 = StandardNormal.sample(&mut rng);
        price *= (drift + diffusion * xi).exp();
    }
    PriceSeries::new(dates, closes, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn baseline_market_is_valid() {
        let v = MarketParams::new(0.04, 0.07, 0.17).validate();
        assert!(v.is_valid());
    }

    #[test]
    fn zero_excess_return_is_rejected() {
        let v = MarketParams::new(0.05, 0.05, 0.2).validate();
        assert!(!v.is_valid());
        assert_eq!(v.violations, vec![MarketViolation::NonPositiveExcessReturn]);
        assert_eq!(v.to_string(), "v <= 0");
    }

    #[test]
    fn zero_volatility_is_rejected() {
        let v = MarketParams::new(0.04, 0.07, 0.0).validate();
        assert!(v
            .violations
            .contains(&MarketViolation::NonPositiveSigma));
    }

    #[test]
    fn excess_return_is_always_derived() {
        let m = MarketParams::new(0.04, 0.07, 0.17);
        assert_relative_eq!(m.excess_return(), 0.03, max_relative = 1e-15);
    }

    #[test]
    fn series_rejects_two_points() {
        // A single return has zero sample variance; the type demands >= 3 points.
        let dates = vec![date("2020-01-01"), date("2020-01-02")];
        let closes = vec![100.0, 100.0 * (0.0004_f64).exp()];
        assert!(PriceSeries::new(dates, closes, TRADING_DAY_DT).is_err());
    }

    #[test]
    fn series_rejects_unsorted_dates_and_bad_prices() {
        let dates = vec![date("2020-01-02"), date("2020-01-01"), date("2020-01-03")];
        assert!(PriceSeries::new(dates, vec![1.0, 2.0, 3.0], TRADING_DAY_DT).is_err());

        let dates = vec![date("2020-01-01"), date("2020-01-02"), date("2020-01-03")];
        assert!(PriceSeries::new(dates, vec![1.0, -2.0, 3.0], TRADING_DAY_DT).is_err());
    }

    #[test]
    fn constant_series_fails_estimation() {
        let dates = vec![date("2020-01-01"), date("2020-01-02"), date("2020-01-03")];
        let series = PriceSeries::new(dates, vec![100.0, 100.0, 100.0], TRADING_DAY_DT).unwrap();
        let err = estimate_gbm_params(&series, 0.04).unwrap_err();
        assert!(matches!(err, Error::EstimateFailed { .. }));
    }

    #[test]
    fn csv_round_trip() {
        let text = "date,close\n2020-01-01,100.0\n2020-01-02,101.5\n2020-01-03,99.75\n";
        let series = PriceSeries::from_csv_reader(text.as_bytes(), TRADING_DAY_DT).unwrap();
        assert_eq!(series.len(), 3);
        assert_relative_eq!(series.closes()[1], 101.5);
    }

    #[test]
    fn csv_reports_offending_line() {
        let text = "date,close\n2020-01-01,100.0\n2020-01-02,not-a-number\n2020-01-03,99.0\n";
        let err = PriceSeries::from_csv_reader(text.as_bytes(), TRADING_DAY_DT).unwrap_err();
        match err {
            Error::CsvFormat { line, .. } => assert_eq!(line, 3),
            other => panic!("expected CsvFormat, got {other}"),
        }
    }

    #[test]
    fn csv_requires_header() {
        let text = "2020-01-01,100.0\n2020-01-02,101.0\n";
        assert!(PriceSeries::from_csv_reader(text.as_bytes(), TRADING_DAY_DT).is_err());
    }

    #[test]
    fn estimator_recovers_synthetic_parameters() {
        let series =
            synthetic_gbm_series(0.07, 0.17, 100.0, TRADING_DAY_DT, 12_600, 7).unwrap();
        let params = estimate_gbm_params(&series, 0.04).unwrap();
        assert!(
            (params.mu - 0.07).abs() < 0.03,
            "mu_hat = {} too far from 0.07",
            params.mu
        );
        assert!(
            (params.sigma - 0.17).abs() < 0.005,
            "sigma_hat = {} too far from 0.17",
            params.sigma
        );
    }

    #[test]
    fn estimator_is_deterministic() {
        let series = synthetic_gbm_series(0.07, 0.17, 100.0, TRADING_DAY_DT, 500, 3).unwrap();
        let a = estimate_gbm_params(&series, 0.04).unwrap();
        let b = estimate_gbm_params(&series, 0.04).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn estimator_error_shrinks_with_sample_size() {
        // |mu_hat - mu| stays inside the 3-sigma asymptotic band at each n.
        for (n, seed) in [(1_000usize, 11u64), (10_000, 12), (100_000, 13)] {
            let series =
                synthetic_gbm_series(0.07, 0.17, 100.0, TRADING_DAY_DT, n, seed).unwrap();
            let params = estimate_gbm_params(&series, 0.04).unwrap();
            let mu_band = 3.0 * 0.17 / (n as f64 * TRADING_DAY_DT).sqrt();
            let sigma_band = 3.0 * 0.17 / (2.0 * n as f64).sqrt();
            assert!(
                (params.mu - 0.07).abs() < mu_band,
                "n = {n}: mu_hat {} outside band {mu_band}",
                params.mu
            );
            assert!(
                (params.sigma - 0.17).abs() < sigma_band,
                "n = {n}: sigma_hat {} outside band {sigma_band}",
                params.sigma
            );
        }
    }
}
