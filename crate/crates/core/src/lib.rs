//! Causally admissible feature selection for predictive optimization.
//!
//! A feature selector that keeps the Markov blanket of the decision *and*
//! target variables (rather than of the targets alone) returns an adjustment
//! set whenever the full feature set is one, without relying on faithfulness.
//! The features it adds are useless for prediction but turn confounding bias
//! into estimator variance, which a variance-regularized optimizer can avoid.
//!
//! Modules:
//! - [`graph`]: causal DAGs, d-separation, back-door checks and an exact
//!   discrete-network oracle.
//! - [`sem`]: the synthetic price/demand linear SEM, sampling and exact
//!   interventional and conditional expectations.
//! - [`selection`]: group-lasso Markov blanket approximation and the FS / CF
//!   selection policies.
//! - [`regression`]: least-squares demand models.
//! - [`optimizer`]: robust price optimization and the true-optimum oracle.
//! - [`analysis`]: bias–variance–confounding decomposition.
//! - [`experiment`]: the reproducible experiment harness and its charts.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod optimizer;
pub mod regression;
pub mod seed;
pub mod selection;
pub mod sem;

pub use error::{Error, Result};
