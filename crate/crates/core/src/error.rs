//! Error type shared by all solver and I/O modules.

use crate::merton::DecisionCurve;

/// Errors produced by validation, solvers, and data ingestion.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Market parameters violate the model assumptions (sigma > 0, mu > r).
    #[error("invalid market parameters: {reasons}")]
    InvalidMarket { reasons: String },

    /// Risk-aversion coefficient must be strictly positive.
    #[error("invalid agent profile: alpha = {alpha} (must be > 0)")]
    InvalidAgent { alpha: f64 },

    /// Herd configuration violates its invariants.
    #[error("invalid herd configuration: {reason}")]
    InvalidHerdConfig { reason: String },

    /// Time grid could not be constructed.
    #[error("invalid time grid: {reason}")]
    InvalidGrid { reason: String },

    /// A curve does not match its grid, or two curves live on different grids.
    #[error("curve/grid mismatch: {reason}")]
    GridMismatch { reason: String },

    /// An exponent left the representable range of f64; the result would
    /// silently saturate to 0 or infinity, so we refuse to compute it.
    #[error("floating range exceeded in {context}: exponent {exponent}")]
    RangeExceeded { context: &'static str, exponent: f64 },

    /// The fixed-point iteration exhausted its budget without converging.
    #[error(
        "eta iteration did not converge after {iterations} steps (last iterate {last}, residual {residual})"
    )]
    EtaNoConvergence {
        iterations: usize,
        last: f64,
        residual: f64,
    },

    /// The decomposition denominator vanishes when both agents share one
    /// risk-aversion coefficient.
    #[error("decomposition undefined: the two rational decisions coincide (alpha1 = alpha2)")]
    DegenerateDecomposition,

    /// Backward ODE integration produced a weight outside [0, 1].
    #[error("opinion ODE left [0, 1] at t = {t}: z = {z}")]
    OpinionOutOfRange { t: f64, z: f64 },

    /// The gradient-ascent oracle ran out of iterations.
    #[error(
        "brute-force optimizer did not converge after {iterations} iterations (|grad|_inf = {grad_sup})"
    )]
    BruteForceNoConvergence {
        iterations: usize,
        grad_sup: f64,
        best: Box<DecisionCurve>,
    },

    /// Price series violates its invariants.
    #[error("invalid price series: {reason}")]
    InvalidSeries { reason: String },

    /// A CSV row could not be parsed.
    #[error("price CSV error at line {line}: {reason}")]
    CsvFormat { line: usize, reason: String },

    /// File-level I/O failure during ingestion.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// GBM estimation produced a market that violates the assumptions.
    #[error("estimation failed: {reason} (choose a different risk-free rate or series)")]
    EstimateFailed { reason: String },

    /// Monte Carlo post-processing requires retained terminal samples.
    #[error("terminal samples were not retained; rerun with retain_terminal = true")]
    SamplesNotRetained,

    /// A sensitivity/sweep operation was asked to vary an unsupported parameter.
    #[error("parameter {parameter} is not supported by {operation}")]
    UnsupportedParameter {
        parameter: &'static str,
        operation: &'static str,
    },

    /// A sweep aborted because one swept configuration is invalid or failed.
    #[error("sweep failed at {parameter} = {value}: {source}")]
    SweepPointFailed {
        parameter: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by invalid user input rather than solver failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidMarket { .. }
                | Error::InvalidAgent { .. }
                | Error::InvalidHerdConfig { .. }
                | Error::InvalidGrid { .. }
                | Error::GridMismatch { .. }
                | Error::InvalidSeries { .. }
                | Error::CsvFormat { .. }
                | Error::EstimateFailed { .. }
                | Error::UnsupportedParameter { .. }
        )
    }
}
