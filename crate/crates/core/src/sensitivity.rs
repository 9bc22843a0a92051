//! Finite-difference verification of the comparative statics: the signs of
//! the derivatives of eta and the investment opinion with respect to the
//! herd coefficient, initial wealth, excess return, and volatility, plus the
//! parameter sweeps behind the figures.
//!
//! The v and sigma statements only hold under conditions on alpha1/alpha2;
//! outside those hypotheses the derivative is still reported but no pass or
//! fail is asserted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::herd::{EtaSolution, HerdProblem};
use crate::merton::DecisionCurve;
use crate::opinion::{investment_opinion, opinion_value, OpinionCurve};

/// Default relative finite-difference step.
pub const STEP_REL: f64 = 1e-4;

/// Absolute floor for the finite-difference step (covers base values at 0).
pub const STEP_FLOOR: f64 = 1e-6;

/// Maximum number of step halvings when the two estimates disagree in sign.
const MAX_REFINEMENTS: usize = 3;

/// A parameter that sweeps and sensitivities can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Theta,
    Vartheta,
    X1,
    V,
    Sigma,
    Rho,
}

impl SweepParameter {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParameter::Theta => "theta",
            SweepParameter::Vartheta => "vartheta",
            SweepParameter::X1 => "x1",
            SweepParameter::V => "v",
            SweepParameter::Sigma => "sigma",
            SweepParameter::Rho => "rho",
        }
    }

    /// The parameter's value in a given problem.
    pub fn value_in(&self, problem: &HerdProblem) -> f64 {
        match self {
            SweepParameter::Theta => problem.herd.theta(),
            SweepParameter::Vartheta => problem.vartheta(),
            SweepParameter::X1 => problem.follower.x0,
            SweepParameter::V => problem.market.excess_return(),
            SweepParameter::Sigma => problem.market.sigma,
            SweepParameter::Rho => problem.herd.rho(),
        }
    }
}

impl std::fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rebuild the problem with one parameter replaced. Volatility changes hold
/// theta fixed (the modified coefficient vartheta is re-derived), matching
/// how the comparative statics are stated.
pub fn apply_parameter(
    base: &HerdProblem,
    parameter: SweepParameter,
    value: f64,
) -> Result<HerdProblem> {
    let mut market = base.market;
    let mut follower = base.follower;
    let mut herd = base.herd;
    match parameter {
        SweepParameter::Theta => herd = herd.with_theta(value)?,
        SweepParameter::Vartheta => {
            herd = herd.with_theta(value * follower.alpha * market.sigma_sq())?
        }
        SweepParameter::X1 => follower.x0 = value,
        SweepParameter::V => market.mu = market.r + value,
        SweepParameter::Sigma => market.sigma = value,
        SweepParameter::Rho => herd = herd.with_rho(value)?,
    }
    HerdProblem::new(market, follower, base.expert, herd)
}

/// Expected sign of a verified derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    fn matches(&self, value: f64) -> bool {
        match self {
            Sign::Positive => value > 0.0,
            Sign::Negative => value < 0.0,
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sign::Positive => write!(f, "> 0"),
            Sign::Negative => write!(f, "< 0"),
        }
    }
}

/// What a sensitivity report differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityTarget {
    /// The integral constant eta.
    Eta,
    /// The investment opinion at the probe times.
    Opinion,
}

/// Central-difference derivative estimates with their hypothesis gate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub parameter: SweepParameter,
    pub target: SensitivityTarget,
    /// Probe times (empty when the target is eta itself).
    pub probes: Vec<f64>,
    /// Derivative estimates at `step`.
    pub derivatives: Vec<f64>,
    /// Derivative estimates at `step / 2`, for reproducibility.
    pub derivatives_half_step: Vec<f64>,
    pub expected_sign: Sign,
    /// Whether the sign statement's alpha1/alpha2 hypothesis holds here.
    pub condition_met: bool,
    /// Sign agreement between the two step sizes.
    pub stable: bool,
    /// Asserted only when the hypothesis holds; `None` otherwise.
    pub pass: Option<bool>,
    /// Final absolute step used.
    pub step: f64,
}

fn ratio_condition(parameter: SweepParameter, problem: &HerdProblem) -> bool {
    let ratio = problem.follower.alpha / problem.expert.alpha;
    match parameter {
        // Stated on [0, 2]; the proof needs (ratio - 1)^2 < 1, so gate on the
        // open interval.
        SweepParameter::V => ratio > 0.0 && ratio < 2.0,
        SweepParameter::Sigma => {
            let third = 3.0_f64.sqrt() / 3.0;
            (1.0 - third..=1.0 + third).contains(&ratio)
        }
        _ => true,
    }
}

fn expected_sign(parameter: SweepParameter, target: SensitivityTarget) -> Result<Sign> {
    match (parameter, target) {
        (SweepParameter::Theta, SensitivityTarget::Opinion) => Ok(Sign::Negative),
        (SweepParameter::X1, _) => Ok(Sign::Negative),
        (SweepParameter::V, _) => Ok(Sign::Negative),
        (SweepParameter::Sigma, _) => Ok(Sign::Positive),
        _ => Err(Error::UnsupportedParameter {
            parameter: parameter.as_str(),
            operation: "sensitivity analysis",
        }),
    }
}

/// Evaluate `quantities` (one value per probe) at `base ± step` and return
/// the central-difference estimates.
fn central_differences(
    problem: &HerdProblem,
    parameter: SweepParameter,
    step: f64,
    quantities: &dyn Fn(&HerdProblem) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let base_value = parameter.value_in(problem);
    let plus = quantities(&apply_parameter(problem, parameter, base_value + step)?)?;
    let minus = quantities(&apply_parameter(problem, parameter, base_value - step)?)?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) / (2.0 * step))
        .collect())
}

fn run_sensitivity(
    problem: &HerdProblem,
    parameter: SweepParameter,
    target: SensitivityTarget,
    probes: &[f64],
    step_rel: f64,
    quantities: &dyn Fn(&HerdProblem) -> Result<Vec<f64>>,
) -> Result<SensitivityReport> {
    let expected = expected_sign(parameter, target)?;
    let condition_met = ratio_condition(parameter, problem);
    let base_value = parameter.value_in(problem);
    let mut step = (step_rel * base_value.abs()).max(STEP_FLOOR);

    let mut derivatives = central_differences(problem, parameter, step, quantities)?;
    let mut half = central_differences(problem, parameter, 0.5 * step, quantities)?;
    let mut stable = signs_agree(&derivatives, &half);
    for _ in 0..MAX_REFINEMENTS {
        if stable {
            break;
        }
        step *= 0.5;
        derivatives = half;
        half = central_differences(problem, parameter, 0.5 * step, quantities)?;
        stable = signs_agree(&derivatives, &half);
    }

    let sign_ok = derivatives.iter().chain(&half).all(|d| expected.matches(*d));
    Ok(SensitivityReport {
        parameter,
        target,
        probes: probes.to_vec(),
        derivatives,
        derivatives_half_step: half,
        expected_sign: expected,
        condition_met,
        stable,
        pass: condition_met.then_some(sign_ok && stable),
        step,
    })
}

fn signs_agree(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.signum() == y.signum())
}

fn opinion_probes(problem: &HerdProblem, probes: &[f64]) -> Result<Vec<f64>> {
    let eta = problem.solve_eta()?.eta;
    Ok(probes
        .iter()
        .map(|&t| opinion_value(problem, eta, t))
        .collect())
}

/// Sign of the opinion's derivative in the herd coefficient theta at each
/// probe time (negative everywhere, no hypothesis needed).
pub fn sensitivity_theta(
    problem: &HerdProblem,
    t_probe: &[f64],
    step_rel: f64,
) -> Result<SensitivityReport> {
    run_sensitivity(
        problem,
        SweepParameter::Theta,
        SensitivityTarget::Opinion,
        t_probe,
        step_rel,
        &|p| opinion_probes(p, t_probe),
    )
}

/// Sign of eta's derivative in x1, v, or sigma.
pub fn sensitivity_eta(
    problem: &HerdProblem,
    parameter: SweepParameter,
    step_rel: f64,
) -> Result<SensitivityReport> {
    if !matches!(
        parameter,
        SweepParameter::X1 | SweepParameter::V | SweepParameter::Sigma
    ) {
        return Err(Error::UnsupportedParameter {
            parameter: parameter.as_str(),
            operation: "sensitivity_eta",
        });
    }
    run_sensitivity(
        problem,
        parameter,
        SensitivityTarget::Eta,
        &[],
        step_rel,
        &|p| Ok(vec![p.solve_eta()?.eta]),
    )
}

/// Sign of the opinion's derivative in x1, v, or sigma at each probe time.
pub fn sensitivity_opinion(
    problem: &HerdProblem,
    parameter: SweepParameter,
    t_probe: &[f64],
    step_rel: f64,
) -> Result<SensitivityReport> {
    if !matches!(
        parameter,
        SweepParameter::X1 | SweepParameter::V | SweepParameter::Sigma
    ) {
        return Err(Error::UnsupportedParameter {
            parameter: parameter.as_str(),
            operation: "sensitivity_opinion",
        });
    }
    run_sensitivity(
        problem,
        parameter,
        SensitivityTarget::Opinion,
        t_probe,
        step_rel,
        &|p| opinion_probes(p, t_probe),
    )
}

/// A parameter sweep: the base configuration with one parameter stepped
/// through an ordered list of values.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub base: HerdProblem,
    /// Times at which the opinion is recorded for each swept value.
    pub t_probe: Vec<f64>,
    /// Also record the full decision/opinion curves per value.
    pub emit_curves: bool,
}

impl SweepSpec {
    pub fn new(base: HerdProblem, parameter: SweepParameter, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidHerdConfig {
                reason: "sweep needs at least one value".into(),
            });
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidHerdConfig {
                reason: "sweep values must be strictly increasing".into(),
            });
        }
        Ok(Self {
            parameter,
            values,
            base,
            t_probe: Vec::new(),
            emit_curves: false,
        })
    }

    pub fn with_probes(mut self, t_probe: Vec<f64>) -> Self {
        self.t_probe = t_probe;
        self
    }

    pub fn with_curves(mut self, emit: bool) -> Self {
        self.emit_curves = emit;
        self
    }
}

/// Full curves recorded for one swept value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurves {
    pub optimal: DecisionCurve,
    pub rational_follower: DecisionCurve,
    pub rational_expert: DecisionCurve,
    pub opinion: OpinionCurve,
}

/// One row of sweep output.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub eta: EtaSolution,
    pub z_at_probes: Vec<f64>,
    pub curves: Option<SweepCurves>,
}

/// Run the sweep in the order given by `spec.values`; the first failing value
/// aborts the whole sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let row = sweep_point(spec, value).map_err(|e| Error::SweepPointFailed {
            parameter: spec.parameter.as_str(),
            value,
            source: Box::new(e),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn sweep_point(spec: &SweepSpec, value: f64) -> Result<SweepRow> {
    let problem = apply_parameter(&spec.base, spec.parameter, value)?;
    let eta = problem.solve_eta()?;
    let z_at_probes = spec
        .t_probe
        .iter()
        .map(|&t| opinion_value(&problem, eta.eta, t))
        .collect();
    let curves = if spec.emit_curves {
        let grid = problem.grid();
        Some(SweepCurves {
            optimal: problem.optimal_decision(&eta, &grid)?,
            rational_follower: problem.rational_follower(&grid)?,
            rational_expert: problem.rational_expert(&grid)?,
            opinion: investment_opinion(&problem, &eta, &grid)?,
        })
    } else {
        None
    };
    Ok(SweepRow {
        value,
        eta,
        z_at_probes,
        curves,
    })
}
