//! Aggregation of per-case results into coverage, precision (mean interval
//! length), and bias (mean absolute error), with bootstrap error bars.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{central_interval, EstimateWithInterval};
use crate::seed::derive_seed;

/// Outcome of one quantification run on one test case. `method` is the
/// series label (the method name, possibly suffixed with a bin count when an
/// experiment sweeps bins).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub method: String,
    pub test_size: usize,
    pub true_prevalence: f64,
    pub estimate: EstimateWithInterval,
    pub wall_time_s: f64,
    pub seed: u64,
}

/// A point metric with a 95% bootstrap confidence interval over cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub method: String,
    pub test_size: usize,
    pub n_cases: usize,
    pub coverage: MetricSummary,
    pub mean_interval_length: MetricSummary,
    pub mean_abs_error: MetricSummary,
}

/// Per-(method, test size) summaries, sorted by group key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub groups: Vec<GroupSummary>,
}

/// Fraction of cases whose interval contains the true prevalence (closed
/// endpoints).
pub fn coverage(results: &[CaseResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyPool);
    }
    let hits = results
        .iter()
        .filter(|r| r.estimate.interval.contains(r.true_prevalence))
        .count();
    Ok(hits as f64 / results.len() as f64)
}

/// Group results by (method, test size) and summarize each group's three
/// metrics with percentile bootstrap error bars from `bootstrap_iterations`
/// case resamples.
pub fn summarize(
    results: &[CaseResult],
    bootstrap_iterations: usize,
    seed: u64,
) -> Result<EvalReport> {
    if results.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut by_group: BTreeMap<(String, usize), Vec<&CaseResult>> = BTreeMap::new();
    for r in results {
        by_group
            .entry((r.method.clone(), r.test_size))
            .or_default()
            .push(r);
    }

    let mut groups = Vec::with_capacity(by_group.len());
    for (group_index, ((method, test_size), cases)) in by_group.into_iter().enumerate() {
        let group_seed = derive_seed(seed, group_index as u64);
        groups.push(summarize_group(
            method,
            test_size,
            &cases,
            bootstrap_iterations,
            group_seed,
        )?);
    }
    Ok(EvalReport { groups })
}

fn summarize_group(
    method: String,
    test_size: usize,
    cases: &[&CaseResult],
    bootstrap_iterations: usize,
    seed: u64,
) -> Result<GroupSummary> {
    let n = cases.len();
    let cov = cases
        .iter()
        .filter(|r| r.estimate.interval.contains(r.true_prevalence))
        .count() as f64
        / n as f64;
    let lengths: Vec<f64> = cases.iter().map(|r| r.estimate.interval.length()).collect();
    let errors: Vec<f64> = cases
        .iter()
        .map(|r| (r.estimate.point - r.true_prevalence).abs())
        .collect();
    let hits: Vec<f64> = cases
        .iter()
        .map(|r| r.estimate.interval.contains(r.true_prevalence) as u8 as f64)
        .collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;

    // shared resample indices keep the three error bars consistent
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cov_boot = Vec::with_capacity(bootstrap_iterations);
    let mut len_boot = Vec::with_capacity(bootstrap_iterations);
    let mut err_boot = Vec::with_capacity(bootstrap_iterations);
    for _ in 0..bootstrap_iterations {
        let mut cov_sum = 0.0;
        let mut len_sum = 0.0;
        let mut err_sum = 0.0;
        for _ in 0..n {
            let i = rng.random_range(0..n);
            cov_sum += hits[i];
            len_sum += lengths[i];
            err_sum += errors[i];
        }
        cov_boot.push(cov_sum / n as f64);
        len_boot.push(len_sum / n as f64);
        err_boot.push(err_sum / n as f64);
    }

    let bar = |value: f64, boot: &[f64]| -> Result<MetricSummary> {
        let iv = central_interval(boot, 0.95)?;
        Ok(MetricSummary {
            value,
            ci_low: iv.low(),
            ci_high: iv.high(),
        })
    };

    Ok(GroupSummary {
        method,
        test_size,
        n_cases: n,
        coverage: bar(cov, &cov_boot)?,
        mean_interval_length: bar(mean(&lengths), &len_boot)?,
        mean_abs_error: bar(mean(&errors), &err_boot)?,
    })
}
