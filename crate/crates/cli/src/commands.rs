//! The seven subcommands: estimate, solve, merton, opinion, simulate,
//! verify, and sweep. Each writes plot-ready files under the output
//! directory and echoes a JSON summary to stdout.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use herdopt::herd::SolverMethod;
use herdopt::market::{estimate_gbm_params, PriceSeries};
use herdopt::merton::{expected_cara_utility, terminal_wealth_moments, DecisionCurve};
use herdopt::objective::{
    average_deviation, brute_force_optimize, first_variation_test, VARIATION_EPSILON_REL,
};
use herdopt::opinion::{
    decompose, equivalence_lambda, integrate_opinion_ode, investment_opinion, opinion_penalty,
    recompose,
};
use herdopt::sensitivity::{run_sweep, SweepParameter, SweepSpec};
use herdopt::simulate::{simulate_wealth, SimulationSpec};
use herdopt::{EtaSolution, HerdProblem};

use crate::config::RunConfig;
use crate::output::{emit_json, write_csv};
use crate::CliError;

pub const DECISION_HEADER: [&str; 5] = ["t", "p1_star", "p1_rational", "p2_rational", "z1"];

fn ensure_out_dir(out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", out_dir.display())))
}

/// Summary emitted by `solve`, one row of which also backs `sweep`.
#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub eta: f64,
    pub eta_lower: f64,
    pub eta_upper: f64,
    pub method: SolverMethod,
    pub iterations: usize,
    pub residual: f64,
    pub contraction_ok: bool,
    pub lambda: f64,
    pub z1_terminal: f64,
    pub theta: f64,
    pub vartheta: f64,
    pub rho: f64,
    pub varrho: f64,
    pub grid_n: usize,
}

fn solve_summary(problem: &HerdProblem, eta: &EtaSolution) -> SolveSummary {
    SolveSummary {
        eta: eta.eta,
        eta_lower: eta.eta_lower,
        eta_upper: eta.eta_upper,
        method: eta.method,
        iterations: eta.iterations,
        residual: eta.residual,
        contraction_ok: eta.contraction_ok,
        lambda: equivalence_lambda(problem),
        z1_terminal: eta.eta / (eta.eta + problem.vartheta()),
        theta: problem.herd.theta(),
        vartheta: problem.vartheta(),
        rho: problem.herd.rho(),
        varrho: problem.varrho(),
        grid_n: problem.herd.grid_n(),
    }
}

fn decision_rows(problem: &HerdProblem, eta: &EtaSolution) -> Result<Vec<Vec<f64>>, CliError> {
    let grid = problem.grid();
    let optimal = problem.optimal_decision(eta, &grid)?;
    let own = problem.rational_follower(&grid)?;
    let expert = problem.rational_expert(&grid)?;
    let opinion = investment_opinion(problem, eta, &grid)?;
    Ok(grid
        .points()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            vec![
                t,
                optimal.values()[i],
                own.values()[i],
                expert.values()[i],
                opinion.values()[i],
            ]
        })
        .collect())
}

/// Solve the herd problem: emit `decision.csv` and `summary.json`.
pub fn cmd_solve(problem: &HerdProblem, out_dir: &Path) -> Result<SolveSummary, CliError> {
    ensure_out_dir(out_dir)?;
    let eta = problem.solve_eta()?;
    write_csv(
        &out_dir.join("decision.csv"),
        &DECISION_HEADER,
        &decision_rows(problem, &eta)?,
    )?;
    let summary = solve_summary(problem, &eta);
    emit_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct EstimateSummary {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    pub v: f64,
    pub n_observations: usize,
}

/// Estimate GBM parameters from a `date,close` CSV: emit `market.json`.
pub fn cmd_estimate(
    csv_path: &Path,
    risk_free: f64,
    dt: f64,
    out_dir: &Path,
) -> Result<EstimateSummary, CliError> {
    ensure_out_dir(out_dir)?;
    let series = PriceSeries::from_csv_path(csv_path, dt)?;
    let params = estimate_gbm_params(&series, risk_free)?;
    let summary = EstimateSummary {
        r: params.r,
        mu: params.mu,
        sigma: params.sigma,
        v: params.excess_return(),
        n_observations: series.len(),
    };
    emit_json(&out_dir.join("market.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct MertonAgentSummary {
    pub alpha: f64,
    pub x0: f64,
    pub expected_utility: f64,
    pub terminal_mean: f64,
    pub terminal_variance: f64,
}

#[derive(Debug, Serialize)]
pub struct MertonSummary {
    pub agent1: MertonAgentSummary,
    pub agent2: MertonAgentSummary,
}

/// The theta = 0 baseline: both agents' standalone rational decisions.
/// Emits `merton.csv` and `merton.json`.
pub fn cmd_merton(problem: &HerdProblem, out_dir: &Path) -> Result<MertonSummary, CliError> {
    ensure_out_dir(out_dir)?;
    let grid = problem.grid();
    let own = problem.rational_follower(&grid)?;
    let expert = problem.rational_expert(&grid)?;
    let rows: Vec<Vec<f64>> = grid
        .points()
        .iter()
        .enumerate()
        .map(|(i, &t)| vec![t, own.values()[i], expert.values()[i]])
        .collect();
    write_csv(
        &out_dir.join("merton.csv"),
        &["t", "p1_rational", "p2_rational"],
        &rows,
    )?;

    let agent_summary = |agent: &herdopt::AgentProfile,
                         curve: &DecisionCurve|
     -> Result<MertonAgentSummary, CliError> {
        let moments = terminal_wealth_moments(&problem.market, agent.x0, curve)?;
        Ok(MertonAgentSummary {
            alpha: agent.alpha,
            x0: agent.x0,
            expected_utility: expected_cara_utility(&problem.market, agent, curve)?,
            terminal_mean: moments.mean,
            terminal_variance: moments.variance,
        })
    };
    let summary = MertonSummary {
        agent1: agent_summary(&problem.follower, &own)?,
        agent2: agent_summary(&problem.expert, &expert)?,
    };
    emit_json(&out_dir.join("merton.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct OpinionSummary {
    pub eta: f64,
    pub z1_terminal: f64,
    pub max_abs_diff: f64,
    pub monotonicity: &'static str,
}

/// Opinion dynamics: backward fourth-order integration against the closed
/// form. Emits `opinion.csv` and `opinion.json`.
pub fn cmd_opinion(problem: &HerdProblem, out_dir: &Path) -> Result<OpinionSummary, CliError> {
    ensure_out_dir(out_dir)?;
    let grid = problem.grid();
    let eta = problem.solve_eta()?;
    let closed = investment_opinion(problem, &eta, &grid)?;
    let terminal = eta.eta / (eta.eta + problem.vartheta());
    let integrated = integrate_opinion_ode(terminal, &problem.herd, &problem.market, &grid)?;

    let rows: Vec<Vec<f64>> = grid
        .points()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (a, b) = (closed.values()[i], integrated.values()[i]);
            vec![t, a, b, (a - b).abs()]
        })
        .collect();
    write_csv(
        &out_dir.join("opinion.csv"),
        &["t", "z1_closed", "z1_ode", "abs_diff"],
        &rows,
    )?;

    let decay = problem.varrho() * problem.market.r;
    let summary = OpinionSummary {
        eta: eta.eta,
        z1_terminal: terminal,
        max_abs_diff: closed.sup_distance(&integrated)?,
        monotonicity: if decay > 0.0 {
            "decreasing"
        } else if decay < 0.0 {
            "increasing"
        } else {
            "constant"
        },
    };
    emit_json(&out_dir.join("opinion.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct ClosedFormSummary {
    pub terminal_mean: f64,
    pub terminal_variance: f64,
    pub expected_utility: f64,
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub mean_terminal_wealth: f64,
    pub var_terminal_wealth: f64,
    pub mean_utility: f64,
    pub std_error_utility: f64,
    pub closed_form: ClosedFormSummary,
    /// (MC utility - closed form) / standard error.
    pub utility_z_score: f64,
}

/// Monte Carlo validation of the optimal decision. Emits `simulate.json`.
pub fn cmd_simulate(
    problem: &HerdProblem,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<SimulateSummary, CliError> {
    ensure_out_dir(out_dir)?;
    let grid = problem.grid();
    let eta = problem.solve_eta()?;
    let optimal = problem.optimal_decision(&eta, &grid)?;
    let moments = terminal_wealth_moments(&problem.market, problem.follower.x0, &optimal)?;
    let closed_utility = expected_cara_utility(&problem.market, &problem.follower, &optimal)?;

    let spec = SimulationSpec {
        n_paths,
        n_steps,
        seed,
        retain_terminal: false,
    };
    let result = simulate_wealth(&problem.market, &problem.follower, &optimal, &spec)?;
    let summary = SimulateSummary {
        n_paths,
        n_steps,
        seed,
        mean_terminal_wealth: result.mean_terminal_wealth,
        var_terminal_wealth: result.var_terminal_wealth,
        mean_utility: result.mean_utility,
        std_error_utility: result.std_error_utility,
        closed_form: ClosedFormSummary {
            terminal_mean: moments.mean,
            terminal_variance: moments.variance,
            expected_utility: closed_utility,
        },
        utility_z_score: (result.mean_utility - closed_utility) / result.std_error_utility,
    };
    emit_json(&out_dir.join("simulate.json"), &summary)?;
    Ok(summary)
}

/// Knobs for the verification bundle.
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub directions: usize,
    pub coarse_n: usize,
    pub mc_paths: usize,
    pub seed: u64,
    /// Test hook: replace the solved eta with `eta_lower * scale`.
    pub inject_eta_scale: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            directions: 100,
            coarse_n: 50,
            mc_paths: 50_000,
            seed: 42,
            inject_eta_scale: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub measured: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

/// Run every optimality and consistency check; each check failure is
/// isolated so the rest still run. Emits `verify.json`.
pub fn cmd_verify(
    problem: &HerdProblem,
    options: &VerifyOptions,
    out_dir: &Path,
) -> Result<VerificationReport, CliError> {
    ensure_out_dir(out_dir)?;
    let mut checks = Vec::new();
    let mut record =
        |name: &'static str, threshold: f64, result: Result<f64, CliError>| match result {
            Ok(measured) => checks.push(Check {
                name,
                pass: measured <= threshold,
                measured,
                threshold,
                error: None,
            }),
            Err(err) => checks.push(Check {
                name,
                pass: false,
                measured: f64::NAN,
                threshold,
                error: Some(err.to_string()),
            }),
        };

    let grid = problem.grid();
    let tol = problem.herd.tol();
    let solved = problem.solve_eta()?;
    // The hook corrupts everything downstream of eta while the solver checks
    // keep seeing the honest solution.
    let eta = match options.inject_eta_scale {
        Some(scale) => EtaSolution {
            eta: solved.eta_lower * scale,
            ..solved
        },
        None => solved,
    };
    let optimal = problem.optimal_decision(&eta, &grid)?;

    record("eta-residual", tol, Ok(solved.residual));
    record(
        "eta-bracket",
        0.0,
        Ok((solved.eta_lower - solved.eta).max(solved.eta - solved.eta_upper)),
    );
    record("solver-path-agreement", 10.0 * tol, {
        let fixed = problem.solve_eta_via(SolverMethod::FixedPoint);
        let bisect = problem.solve_eta_via(SolverMethod::Bisection);
        match (fixed, bisect) {
            (Ok(a), Ok(b)) => Ok((a.eta - b.eta).abs()),
            (Err(e), _) | (_, Err(e)) => Err(e.into()),
        }
    });

    record("first-variation", 1e-6, {
        first_variation_test(
            problem,
            &optimal,
            options.directions,
            VARIATION_EPSILON_REL,
            options.seed,
        )
        .map(|r| r.max_abs_derivative)
        .map_err(CliError::from)
    });
    record("concavity", 0.0, {
        first_variation_test(problem, &optimal, 16, VARIATION_EPSILON_REL, options.seed)
            .map(|r| r.max_second_difference)
            .map_err(CliError::from)
    });

    record("oracle-agreement", 1e-3, {
        brute_force_optimize(problem, options.coarse_n)
            .map_err(CliError::from)
            .and_then(|oracle| {
                let analytical = problem.optimal_decision(&eta, oracle.grid())?;
                Ok(oracle.sup_distance(&analytical)?)
            })
    });

    record("opinion-ode", 1e-8, {
        let terminal = eta.eta / (eta.eta + problem.vartheta());
        investment_opinion(problem, &eta, &grid)
            .and_then(|closed| {
                let integrated =
                    integrate_opinion_ode(terminal, &problem.herd, &problem.market, &grid)?;
                closed.sup_distance(&integrated)
            })
            .map_err(CliError::from)
    });

    record("decomposition-roundtrip", 1e-12, {
        let own = problem.rational_follower(&grid)?;
        let expert = problem.rational_expert(&grid)?;
        decompose(&optimal, &own, &expert)
            .and_then(|z| {
                let rebuilt = recompose(&z, &own, &expert)?;
                rebuilt.sup_distance(&optimal)
            })
            .map_err(CliError::from)
    });
    record("decomposition-closed-form", 1e-10, {
        let own = problem.rational_follower(&grid)?;
        let expert = problem.rational_expert(&grid)?;
        decompose(&optimal, &own, &expert)
            .and_then(|z| {
                let closed = investment_opinion(problem, &eta, &grid)?;
                z.sup_distance(&closed)
            })
            .map_err(CliError::from)
    });

    record("equivalence-ratio", 1e-8, {
        let own = problem.rational_follower(&grid)?;
        let expert = problem.rational_expert(&grid)?;
        investment_opinion(problem, &eta, &grid)
            .and_then(|z| {
                let p1 = recompose(&z, &own, &expert)?;
                let deviation =
                    average_deviation(&p1, &expert, problem.herd.rho(), problem.market.r)?;
                let penalty = opinion_penalty(&problem.herd, &problem.market, &z);
                let lambda = equivalence_lambda(problem);
                Ok((problem.herd.theta() * deviation / penalty - lambda).abs() / lambda)
            })
            .map_err(CliError::from)
    });

    record("monte-carlo-3se", 3.0, {
        let spec = SimulationSpec {
            n_paths: options.mc_paths,
            n_steps: 1000,
            seed: options.seed,
            retain_terminal: false,
        };
        expected_cara_utility(&problem.market, &problem.follower, &optimal)
            .map_err(CliError::from)
            .and_then(|closed| {
                let result = simulate_wealth(&problem.market, &problem.follower, &optimal, &spec)?;
                Ok((result.mean_utility - closed).abs() / result.std_error_utility)
            })
    });

    let all_pass = checks.iter().all(|c| c.pass);
    for check in &checks {
        match &check.error {
            Some(error) => println!("check {:<28} FAIL ({error})", check.name),
            None => println!(
                "check {:<28} {} (measured {:.3e}, threshold {:.3e})",
                check.name,
                if check.pass { "PASS" } else { "FAIL" },
                check.measured,
                check.threshold
            ),
        }
    }
    let report = VerificationReport { checks, all_pass };
    emit_json(&out_dir.join("verify.json"), &report)?;
    Ok(report)
}

/// Sweep specification document: a base run configuration plus the parameter
/// grid to walk.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDoc {
    pub base: RunConfig,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default)]
    pub t_probe: Vec<f64>,
    #[serde(default)]
    pub emit_curves: bool,
}

impl SweepDoc {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("sweep spec {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("sweep spec: {e}")))
    }
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub parameter: SweepParameter,
    pub rows: usize,
    pub table: PathBuf,
    pub curve_files: Vec<PathBuf>,
}

/// Walk the parameter grid: one CSV row per swept value, plus optional
/// per-value curve files.
pub fn cmd_sweep(
    doc: &SweepDoc,
    grid_n_override: Option<usize>,
    tol_override: Option<f64>,
    out_dir: &Path,
) -> Result<SweepSummary, CliError> {
    ensure_out_dir(out_dir)?;
    let base = doc.base.to_problem(grid_n_override, tol_override)?;
    let spec = SweepSpec::new(base, doc.parameter, doc.values.clone())?
        .with_probes(doc.t_probe.clone())
        .with_curves(doc.emit_curves);
    let rows = run_sweep(&spec)?;

    let mut header: Vec<String> = vec!["parameter_value".into(), "eta".into()];
    for t in &doc.t_probe {
        header.push(format!("z1_at_t{t}"));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let table_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| {
            let mut cells = vec![row.value, row.eta.eta];
            cells.extend_from_slice(&row.z_at_probes);
            cells
        })
        .collect();
    let table = out_dir.join(format!("sweep_{}.csv", doc.parameter));
    write_csv(&table, &header_refs, &table_rows)?;

    let mut curve_files = Vec::new();
    for row in &rows {
        if let Some(curves) = &row.curves {
            let path = out_dir.join(format!("curves_{}_{}.csv", doc.parameter, row.value));
            let grid = curves.optimal.grid();
            let data: Vec<Vec<f64>> = grid
                .points()
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    vec![
                        t,
                        curves.optimal.values()[i],
                        curves.rational_follower.values()[i],
                        curves.rational_expert.values()[i],
                        curves.opinion.values()[i],
                    ]
                })
                .collect();
            write_csv(&path, &DECISION_HEADER, &data)?;
            curve_files.push(path);
        }
    }

    let summary = SweepSummary {
        parameter: doc.parameter,
        rows: rows.len(),
        table,
        curve_files,
    };
    emit_json(&out_dir.join("sweep.json"), &summary)?;
    Ok(summary)
}
