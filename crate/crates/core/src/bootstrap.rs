//! Percentile bootstrap confidence intervals around any point-estimate
//! quantifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledPool, ScoredSample, UnlabeledPool};
use crate::error::{Error, Result};
use crate::interval::{central_interval, EstimateWithInterval, Method};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub mass: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            mass: 0.5,
            seed: 0,
        }
    }
}

/// Percentile bootstrap around `quantifier`. Each iteration resamples the
/// validation pool with replacement stratified by class (exact class counts
/// preserved) and the test pool with replacement at its original size, then
/// re-applies the quantifier. The point estimate is the quantifier on the
/// original data; the interval is the central interval of the bootstrap
/// estimates. Iterations that fail are skipped, but more than 10% failures
/// abort the whole call.
pub fn bootstrap_interval<F>(
    quantifier: F,
    validation: &LabeledPool,
    test: &UnlabeledPool,
    config: &BootstrapConfig,
    method: Method,
) -> Result<EstimateWithInterval>
where
    F: Fn(&LabeledPool, &[f64]) -> Result<f64>,
{
    if config.iterations < 1 {
        return Err(Error::InvalidParameter(
            "bootstrap iterations must be >= 1".into(),
        ));
    }
    let point = quantifier(validation, test.scores())?;

    let positives: Vec<ScoredSample> = validation
        .samples()
        .iter()
        .copied()
        .filter(|s| s.label() == Some(true))
        .collect();
    let negatives: Vec<ScoredSample> = validation
        .samples()
        .iter()
        .copied()
        .filter(|s| s.label() == Some(false))
        .collect();

    let mut estimates = Vec::with_capacity(config.iterations);
    let mut failed = 0usize;
    for iter in 0..config.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, iter as u64));
        let resampled_val = resample_stratified(&positives, &negatives, &mut rng)?;
        let resampled_test = resample_with_replacement(test.scores(), &mut rng);
        match quantifier(&resampled_val, &resampled_test) {
            Ok(est) => estimates.push(est),
            Err(_) => failed += 1,
        }
    }
    if failed * 10 > config.iterations {
        return Err(Error::UnstableQuantifier {
            failed,
            total: config.iterations,
        });
    }

    let interval = central_interval(&estimates, config.mass)?;
    Ok(EstimateWithInterval::from_point(point, interval, method))
}

fn resample_stratified(
    positives: &[ScoredSample],
    negatives: &[ScoredSample],
    rng: &mut ChaCha8Rng,
) -> Result<LabeledPool> {
    let mut samples = Vec::with_capacity(positives.len() + negatives.len());
    for _ in 0..positives.len() {
        samples.push(positives[rng.random_range(0..positives.len())]);
    }
    for _ in 0..negatives.len() {
        samples.push(negatives[rng.random_range(0..negatives.len())]);
    }
    LabeledPool::new(samples)
}

fn resample_with_replacement(scores: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..scores.len())
        .map(|_| scores[rng.random_range(0..scores.len())])
        .collect()
}
