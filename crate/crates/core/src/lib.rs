//! Estimation of cumulative survival under stochastic treatment interventions
//! whose intervention distribution may depend on the observed treatment process.
//!
//! The crate provides:
//!
//! * a longitudinal data model for interval-structured survival records
//!   ([`data`]),
//! * intervention treatment distributions (multiplicative and odds shifts,
//!   grace periods, representative, static and dynamic rules) together with a
//!   generalized positivity checker ([`intervene`]),
//! * nuisance model fitting: weighted quasi-logistic regression with
//!   declarative design formulas, and a cross-validated convex-stacking
//!   ensemble ([`nuisance`]),
//! * the generic efficient-influence-function machinery driven by the
//!   backward T/Q recursion, with point-treatment closed forms ([`eif`]),
//! * four estimators of counterfactual survival — IPW, ICE, weighted ICE and
//!   cross-fit TMLE — with censoring support and bootstrap intervals
//!   ([`estimators`]),
//! * exhaustive and Monte Carlo ground-truth oracles ([`oracle`]), and
//! * the two simulation-study data generating programs with a replicate
//!   harness ([`simlab`]).
//!
//! The crate is `no_std`-compatible (`alloc` required); all transcendental
//! math goes through `libm` so results are bit-identical across targets.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod eif;
pub mod estimators;
pub mod intervene;
pub mod math;
pub mod nuisance;
pub mod oracle;
pub mod seed;
pub mod simlab;

pub mod fixtures;

pub use data::{HistoryView, IntervalRecord, Panel, Trajectory};
pub use intervene::{GeneralSpec, InterventionSpec, StructuredSpec};
