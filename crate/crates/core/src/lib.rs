//! Bayesian random-effects meta-analysis of sparse binary outcomes.
//!
//! The data model is the binomial-normal hierarchical model: each study
//! contributes a 2x2 table, arm-level event counts are binomial on the
//! logit scale, and study-level log odds ratios are normal around a mean
//! effect `theta` with heterogeneity `tau`. The crate provides
//!
//! - the joint log density and its analytic gradient in the non-centred
//!   parametrization ([`model`]),
//! - weakly informative prior construction ([`priors`]),
//! - a NUTS sampler with warmup adaptation and convergence diagnostics
//!   ([`sampler`]),
//! - a maximum-likelihood comparator using adaptive Gauss-Hermite
//!   quadrature ([`mle`]),
//! - posterior/frequentist summaries and forest-plot rows ([`inference`]),
//! - a seeded Monte-Carlo simulation harness ([`simulation`]).

pub mod data;
pub mod error;
pub mod inference;
pub mod math;
pub mod mle;
pub mod model;
pub mod priors;
pub mod sampler;
pub mod simulation;

pub use data::{MetaDataset, Study, StudyArm};
pub use error::{Error, Result};
pub use model::{ParameterVector, PriorConfig, TauPrior};
