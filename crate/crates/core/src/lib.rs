//! Dual-agent optimal investment under herd behaviour.
//!
//! A following agent allocates wealth to one risky asset while being pulled
//! toward a leading expert's allocation by a deviation penalty. The optimal
//! allocation has a closed form up to one scalar constant found by a
//! fixed-point iteration, and decomposes into a convex combination of the two
//! agents' standalone (Merton) decisions; the weight is the follower's
//! investment opinion. This crate computes that solution, validates it with
//! independent oracles (perturbation tests, a gradient-ascent optimizer, and
//! Monte Carlo simulation), and verifies the comparative statics by finite
//! differences.

// Validations use `!(x > 0.0)` on purpose: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod herd;
pub mod market;
pub mod merton;
pub mod objective;
pub mod opinion;
pub mod sensitivity;
pub mod simulate;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use herd::{EtaSolution, HerdConfig, HerdProblem, SolverMethod};
pub use market::{MarketParams, PriceSeries};
pub use merton::{AgentProfile, DecisionCurve};
pub use opinion::OpinionCurve;
pub use sensitivity::{SweepParameter, SweepSpec};
pub use simulate::{SimulationResult, SimulationSpec};
