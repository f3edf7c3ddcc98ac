//! Fairness engineering toolkit for tabular binary classification.
//!
//! The crate is organised around the stages of a fairness project:
//!
//! - [`dataset`] — column-oriented tables, CSV ingestion, quartile/one-hot
//!   encoding, splitting and slicing;
//! - [`biasgen`] — synthetic data with controllable historical, measurement,
//!   representation and omission bias;
//! - [`metrics`] — observational group and individual fairness metrics;
//! - [`fftree`] — a fairness-constrained decision tree;
//! - [`mitigate`] — pre-processing transforms and group-threshold
//!   post-processing;
//! - [`compare`] — trade-off scoring and Pareto frontiers across models;
//! - [`contrast`] — per-group surrogate rules and worldview evidence;
//! - [`monitor`] — temporal drift evaluation, stress shocks and exact
//!   Shapley attributions.

pub mod biasgen;
pub mod compare;
pub mod contrast;
pub mod dataset;
pub mod error;
pub mod fftree;
pub mod metrics;
pub mod mitigate;
pub mod monitor;
pub mod report;

pub use error::{Error, Result};
