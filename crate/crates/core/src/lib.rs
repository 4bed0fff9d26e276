//! Singular value shrinkage priors for the matrix-variate Normal model.
//!
//! The crate covers prior and marginal evaluation, Bayes estimators, Bayesian
//! predictive densities built on the confluent hypergeometric function of
//! matrix argument, superharmonicity checks, the general-covariance prior
//! transform used for regression, and Monte Carlo risk experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod matnorm;
pub mod predictive;
pub mod priors;
pub mod regression;
pub mod riskbench;
pub mod stats;
pub mod zonal;

pub use error::{Error, Result};
pub use matnorm::{MeanMatrix, ModelSpec};
pub use priors::PriorKind;
pub use zonal::{Partition, SeriesControl};
