//! Quantification learning: estimating the class prevalence of unlabeled
//! datasets from classifier scores, with calibrated uncertainty.
//!
//! The crate ships a Bayesian quantifier (`pq`) whose prediction intervals
//! come from a posterior over binned score distributions, the standard
//! aggregative baselines (`baselines`), percentile bootstrap confidence
//! intervals for point estimators (`bootstrap`), and the simulation plus
//! evaluation protocol used to measure coverage, precision, and bias
//! (`protocol`, `metrics`).

pub mod baselines;
pub mod binning;
pub mod bootstrap;
pub mod classifier;
pub mod data;
pub mod error;
pub mod interval;
pub mod metrics;
pub mod pq;
pub mod protocol;
pub mod sampler;
pub mod seed;

pub use data::{LabeledPool, ScoredSample, UnlabeledPool};
pub use error::{Error, Result};
pub use interval::{central_interval, EstimateWithInterval, Interval, Method};
