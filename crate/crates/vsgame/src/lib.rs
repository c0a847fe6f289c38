//! Voltage-stability security-investment analysis.
//!
//! This crate models a power network's proximity to voltage collapse through
//! the instability index Δ = ‖Q_crit⁻¹·Q_L‖_∞ and solves the discrete
//! Stackelberg game between a load-altering attacker (leader follower order:
//! defender leads, attacker follows) and a reactive-compensation defender,
//! using cost-based backward induction.
//!
//! Modules:
//! - [`case_model`]: case parsing (native JSON + MATPOWER text) and canonical
//!   per-unit normalization with load-first bus ordering.
//! - [`stability`]: Y-bus assembly, susceptance partition, the instability
//!   index, Newton-Raphson AC power flow, and covertness limits.
//! - [`game`]: discrete action grids, attack outcomes, budgets, and clipped
//!   expected utilities.
//! - [`solver`]: cost-based backward induction, the exhaustive SE oracle,
//!   importance ranking, subset selection, baselines, and cost sweeps.

pub mod case_model;
pub mod game;
pub mod solver;
pub mod stability;
