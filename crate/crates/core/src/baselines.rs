//! The comparison quantifiers: classify-and-count variants, Hellinger
//! distance matching, expectation-maximization reweighting, and the Bayesian
//! confusion-matrix model.

use serde::{Deserialize, Serialize};

use crate::binning::{bin_test, fit_bins};
use crate::classifier::mcc_optimal_threshold;
use crate::data::{LabeledPool, UnlabeledPool};
use crate::error::{Error, Result};
use crate::interval::{EstimateWithInterval, Method};
use crate::sampler::{sample, Block, ParamSpace, SamplerConfig};

/// Confusion-matrix counts of a hard classifier on the validation set plus
/// the predicted-positive test count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    /// True positives on validation.
    pub n_pp: u64,
    /// False positives on validation.
    pub n_np: u64,
    /// Validation positives.
    pub n_pos: u64,
    /// Validation negatives.
    pub n_neg: u64,
    /// Test samples predicted positive.
    pub n_hat_pos_t: u64,
    /// Test size.
    pub n_t: u64,
}

impl ConfusionCounts {
    pub fn from_threshold(
        validation: &LabeledPool,
        test_scores: &[f64],
        threshold: f64,
    ) -> Result<Self> {
        validation.require_two_class()?;
        let n_pp = validation
            .positive_scores()
            .filter(|&s| s >= threshold)
            .count() as u64;
        let n_np = validation
            .negative_scores()
            .filter(|&s| s >= threshold)
            .count() as u64;
        let n_hat_pos_t = test_scores.iter().filter(|&&s| s >= threshold).count() as u64;
        Ok(Self {
            n_pp,
            n_np,
            n_pos: validation.n_pos() as u64,
            n_neg: validation.n_neg() as u64,
            n_hat_pos_t,
            n_t: test_scores.len() as u64,
        })
    }
}

/// Per-bin relative frequencies over a shared bin model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    masses: Vec<f64>,
}

impl ScoreHistogram {
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyPool);
        }
        Ok(Self {
            masses: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

/// Classify and count: the fraction of test scores at or above the
/// threshold.
pub fn cc(test_scores: &[f64], threshold: f64) -> f64 {
    if test_scores.is_empty() {
        return 0.0;
    }
    test_scores.iter().filter(|&&s| s >= threshold).count() as f64 / test_scores.len() as f64
}

/// Probabilistic classify and count: the mean test score.
pub fn pcc(test_scores: &[f64]) -> Result<f64> {
    if test_scores.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(test_scores.iter().sum::<f64>() / test_scores.len() as f64)
}

/// Adjusted classify and count before clipping:
/// (cc - FPR) / (TPR - FPR) with rates taken on the validation set.
pub fn acc_raw(validation: &LabeledPool, test_scores: &[f64], threshold: f64) -> Result<f64> {
    validation.require_two_class()?;
    let tpr = validation
        .positive_scores()
        .filter(|&s| s >= threshold)
        .count() as f64
        / validation.n_pos() as f64;
    let fpr = validation
        .negative_scores()
        .filter(|&s| s >= threshold)
        .count() as f64
        / validation.n_neg() as f64;
    if tpr == fpr {
        return Err(Error::UninformativeClassifier);
    }
    Ok((cc(test_scores, threshold) - fpr) / (tpr - fpr))
}

/// [`acc_raw`] clipped to [0, 1].
pub fn acc(validation: &LabeledPool, test_scores: &[f64], threshold: f64) -> Result<f64> {
    Ok(acc_raw(validation, test_scores, threshold)?.clamp(0.0, 1.0))
}

/// Probabilistic adjusted classify and count before clipping:
/// (mean_T - E[f|neg]) / (E[f|pos] - E[f|neg]).
pub fn pacc_raw(validation: &LabeledPool, test_scores: &[f64]) -> Result<f64> {
    validation.require_two_class()?;
    if test_scores.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mean_pos = validation.positive_scores().sum::<f64>() / validation.n_pos() as f64;
    let mean_neg = validation.negative_scores().sum::<f64>() / validation.n_neg() as f64;
    let denom = mean_pos - mean_neg;
    if denom.abs() < 1e-12 {
        return Err(Error::UninformativeClassifier);
    }
    let mean_t = test_scores.iter().sum::<f64>() / test_scores.len() as f64;
    Ok((mean_t - mean_neg) / denom)
}

/// [`pacc_raw`] clipped to [0, 1].
pub fn pacc(validation: &LabeledPool, test_scores: &[f64]) -> Result<f64> {
    Ok(pacc_raw(validation, test_scores)?.clamp(0.0, 1.0))
}

/// Hellinger distance between two discrete distributions.
pub fn hellinger(a: &[f64], b: &[f64]) -> f64 {
    let bc: f64 = a.iter().zip(b).map(|(&x, &y)| (x * y).sqrt()).sum();
    (1.0 - bc).max(0.0).sqrt()
}

/// Grid argmin of the Hellinger distance between the test histogram and the
/// p-mixture of the class histograms, over p in {0, 0.001, ..., 1}. Ties
/// resolve to the smaller p.
pub fn hdy_mixture_argmin(f_pos: &[f64], f_neg: &[f64], f_test: &[f64]) -> f64 {
    let mut best_p = 0.0;
    let mut best_hd = f64::INFINITY;
    let mut mix = vec![0.0; f_test.len()];
    for step in 0..=1000u32 {
        let p = step as f64 / 1000.0;
        for (m, (&fp, &fn_)) in mix.iter_mut().zip(f_pos.iter().zip(f_neg)) {
            *m = p * fp + (1.0 - p) * fn_;
        }
        let hd = hellinger(f_test, &mix);
        if hd < best_hd {
            best_hd = hd;
            best_p = p;
        }
    }
    best_p
}

/// HDy: bin the pooled validation scores into `n_bins` equal-frequency bins,
/// form per-class and test histograms over them, and return the mixture
/// weight minimizing the Hellinger distance.
pub fn hdy(validation: &LabeledPool, test_scores: &[f64], n_bins: usize) -> Result<f64> {
    validation.require_two_class()?;
    let model = fit_bins(validation, n_bins)?;
    let f_pos = ScoreHistogram::from_counts(model.v_pos())?;
    let f_neg = ScoreHistogram::from_counts(model.v_neg())?;
    let test_pool = UnlabeledPool::new(test_scores.to_vec())?;
    let binned = bin_test(&model, &test_pool);
    let f_test = ScoreHistogram::from_counts(binned.counts())?;
    Ok(hdy_mixture_argmin(
        f_pos.masses(),
        f_neg.masses(),
        f_test.masses(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmqConfig {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for EmqConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iter: 1000,
        }
    }
}

/// Internal clipping that keeps the E-step denominators away from zero.
const EMQ_EPS: f64 = 1e-9;

/// Expectation-maximization quantifier over calibrated scores. Both the
/// validation pool and the test scores must already be calibrated with the
/// same map. The starting estimate is the mean calibrated validation score;
/// each iteration reweights the test posteriors by the current prevalence
/// ratio against the validation prevalence and averages them.
pub fn emq(validation: &LabeledPool, test_scores: &[f64], config: &EmqConfig) -> Result<f64> {
    validation.require_two_class()?;
    if test_scores.is_empty() {
        return Err(Error::EmptyPool);
    }
    let pv = validation.prevalence();
    let omega = validation.scores().sum::<f64>() / validation.len() as f64;

    let mut theta = omega.clamp(EMQ_EPS, 1.0 - EMQ_EPS);
    for _ in 0..config.max_iter {
        let next = emq_step(theta, pv, test_scores).clamp(EMQ_EPS, 1.0 - EMQ_EPS);
        let delta = (next - theta).abs();
        theta = next;
        if delta < config.tolerance {
            break;
        }
    }
    Ok(theta)
}

fn emq_step(theta: f64, pv: f64, test_scores: &[f64]) -> f64 {
    let mut total = 0.0;
    for &s in test_scores {
        let s = s.clamp(EMQ_EPS, 1.0 - EMQ_EPS);
        let num = theta / pv * s;
        let den = num + (1.0 - theta) / (1.0 - pv) * (1.0 - s);
        total += num / den;
    }
    total / test_scores.len() as f64
}

/// Bayesian classify and count: binarize scores at the MCC-optimal
/// validation threshold, then sample the three-parameter posterior
/// (prevalence, TPR, FPR) whose likelihood is the product of the three
/// binomial terms, all under uniform priors. Point is the posterior mean of
/// the prevalence, interval its central quantiles.
pub fn bayesian_cc(
    validation: &LabeledPool,
    test_scores: &[f64],
    sampler_config: &SamplerConfig,
    mass: f64,
) -> Result<EstimateWithInterval> {
    validation.require_two_class()?;
    let val_scores: Vec<f64> = validation.scores().collect();
    let val_labels: Vec<bool> = validation
        .samples()
        .iter()
        .map(|s| s.label() == Some(true))
        .collect();
    let threshold = mcc_optimal_threshold(&val_scores, &val_labels)?.threshold;
    let counts = ConfusionCounts::from_threshold(validation, test_scores, threshold)?;
    bayesian_cc_from_counts(&counts, sampler_config, mass)
}

/// The BayesianCC posterior given precomputed confusion counts.
pub fn bayesian_cc_from_counts(
    counts: &ConfusionCounts,
    sampler_config: &SamplerConfig,
    mass: f64,
) -> Result<EstimateWithInterval> {
    let space = ParamSpace::new(vec![
        Block::UnitInterval,
        Block::UnitInterval,
        Block::UnitInterval,
    ])?;
    let c = *counts;
    let target = move |p: &[f64]| bayesian_cc_log_likelihood(&c, p[0], p[1], p[2]);
    let out = sample(&space, target, sampler_config)?;
    let theta_draws: Vec<f64> = out.draws.iter().map(|d| d[0]).collect();
    EstimateWithInterval::from_draws(theta_draws, mass, Method::BayesianCc)
}

/// Log likelihood of (theta, p_pp, p_np) up to the constant binomial
/// coefficients.
pub fn bayesian_cc_log_likelihood(
    counts: &ConfusionCounts,
    theta: f64,
    p_pp: f64,
    p_np: f64,
) -> f64 {
    let mix = theta * p_pp + (1.0 - theta) * p_np;
    ln_binom_term(counts.n_pp, counts.n_pos, p_pp)
        + ln_binom_term(counts.n_np, counts.n_neg, p_np)
        + ln_binom_term(counts.n_hat_pos_t, counts.n_t, mix)
}

fn ln_binom_term(successes: u64, trials: u64, p: f64) -> f64 {
    ln_count_term(successes, p) + ln_count_term(trials - successes, 1.0 - p)
}

fn ln_count_term(count: u64, prob: f64) -> f64 {
    if count == 0 {
        0.0
    } else if prob > 0.0 {
        count as f64 * prob.ln()
    } else {
        f64::NEG_INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(scores: &[f64], labels: &[bool]) -> LabeledPool {
        LabeledPool::from_scores_labels(scores, labels).unwrap()
    }

    #[test]
    fn cc_examples() {
        assert_eq!(cc(&[0.9, 0.9, 0.1, 0.1], 0.5), 0.5);
        assert_eq!(cc(&[0.1, 0.2], 0.5), 0.0);
        assert_eq!(cc(&[0.5], 0.5), 1.0);
    }

    #[test]
    fn pcc_examples() {
        assert_eq!(pcc(&[0.2, 0.4, 0.6, 0.8]).unwrap(), 0.5);
        assert_eq!(pcc(&[0.9, 0.9, 0.9]).unwrap(), 0.9);
        assert!((pcc(&[0.0, 1.0, 1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(pcc(&[]).is_err());
    }

    #[test]
    fn acc_perfect_classifier_passes_through() {
        // TPR = 1, FPR = 0
        let v = pool(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]);
        let mut test = vec![0.9; 37];
        test.extend(vec![0.1; 63]);
        let est = acc(&v, &test, 0.5).unwrap();
        assert!((est - 0.37).abs() < 1e-12);
    }

    #[test]
    fn acc_adjusts_for_imperfect_rates() {
        // TPR = 0.8, FPR = 0.2 on a validation pool of 5 + 5
        let v = pool(
            &[0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.9],
            &[
                true, true, true, true, true, false, false, false, false, false,
            ],
        );
        // cc_test = 0.5
        let test = vec![0.9, 0.9, 0.1, 0.1];
        let raw = acc_raw(&v, &test, 0.5).unwrap();
        assert!((raw - 0.5).abs() < 1e-12, "raw {raw}");

        // cc_test = 0.1 -> raw (0.1 - 0.2) / 0.6 = -1/6, clipped to 0
        let mut test = vec![0.9];
        test.extend(vec![0.1; 9]);
        let raw = acc_raw(&v, &test, 0.5).unwrap();
        assert!((raw + 1.0 / 6.0).abs() < 1e-12, "raw {raw}");
        assert_eq!(acc(&v, &test, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn acc_rejects_uninformative_rates() {
        let v = pool(&[0.9, 0.9, 0.1, 0.1], &[true, false, true, false]);
        assert!(matches!(
            acc(&v, &[0.5], 0.5),
            Err(Error::UninformativeClassifier)
        ));
    }

    #[test]
    fn pacc_examples() {
        // oracle classifier: E+ = 1, E- = 0
        let v = pool(&[1.0, 1.0, 0.0, 0.0], &[true, true, false, false]);
        assert!((pacc(&v, &[0.3, 0.3]).unwrap() - 0.3).abs() < 1e-12);

        // E+ = 0.8, E- = 0.2, mean_T = 0.5 -> 0.5
        let v = pool(&[0.8, 0.8, 0.2, 0.2], &[true, true, false, false]);
        assert!((pacc_raw(&v, &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-12);

        // mean_T = 0.9 -> raw 7/6, clipped to 1
        let raw = pacc_raw(&v, &[0.9]).unwrap();
        assert!((raw - 7.0 / 6.0).abs() < 1e-12);
        assert_eq!(pacc(&v, &[0.9]).unwrap(), 1.0);

        // degenerate: equal class means
        let v = pool(&[0.5, 0.5, 0.5, 0.5], &[true, true, false, false]);
        assert!(matches!(
            pacc(&v, &[0.4]),
            Err(Error::UninformativeClassifier)
        ));
    }

    #[test]
    fn hdy_identifies_exact_mixture() {
        let f_pos = [0.8, 0.2];
        let f_neg = [0.2, 0.8];
        let f_test = [0.3 * 0.8 + 0.7 * 0.2, 0.3 * 0.2 + 0.7 * 0.8];
        let p = hdy_mixture_argmin(&f_pos, &f_neg, &f_test);
        assert!((p - 0.3).abs() < 1e-9);

        // pure positive mixture
        let p = hdy_mixture_argmin(&f_pos, &f_neg, &f_pos);
        assert!((p - 1.0).abs() < 1e-9);

        // unidentifiable: identical class histograms tie-break to 0
        let p = hdy_mixture_argmin(&f_pos, &f_pos, &[0.5, 0.5]);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn hdy_end_to_end_recovers_mixture() {
        // validation: 10 positives (8 low bin, 2 high), 10 negatives (2, 8)
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            scores.push(if i < 8 { 0.2 } else { 0.8 });
            labels.push(true);
        }
        for i in 0..10 {
            scores.push(if i < 2 { 0.2 } else { 0.8 });
            labels.push(false);
        }
        let v = pool(&scores, &labels);
        // test histogram = 0.3 * F+ + 0.7 * F-: masses {0.38, 0.62} over 100
        let mut test = vec![0.2; 38];
        test.extend(vec![0.8; 62]);
        let p = hdy(&v, &test, 2).unwrap();
        assert!((p - 0.3).abs() < 1e-9, "p = {p}");
    }

    #[test]
    fn hdy_argmin_matches_independent_grid_loop() {
        let f_pos = [0.5, 0.3, 0.15, 0.05];
        let f_neg = [0.1, 0.2, 0.3, 0.4];
        let f_test = [0.3, 0.25, 0.25, 0.2];
        let fast = hdy_mixture_argmin(&f_pos, &f_neg, &f_test);

        let mut best = (f64::INFINITY, 0.0);
        for step in 0..=1000 {
            let p = step as f64 / 1000.0;
            let mix: Vec<f64> = f_pos
                .iter()
                .zip(&f_neg)
                .map(|(&a, &b)| p * a + (1.0 - p) * b)
                .collect();
            let hd = hellinger(&f_test, &mix);
            if hd < best.0 {
                best = (hd, p);
            }
        }
        assert_eq!(fast, best.1);
    }

    #[test]
    fn emq_fixed_point_when_scores_match_prevalence() {
        let v = pool(&[0.5, 0.5, 0.5, 0.5], &[true, true, false, false]);
        let est = emq(&v, &[0.5, 0.5, 0.5], &EmqConfig::default()).unwrap();
        assert!((est - 0.5).abs() < 1e-12);
    }

    #[test]
    fn emq_hard_scores_count_directly() {
        let v = pool(&[1.0, 1.0, 0.0, 0.0], &[true, true, false, false]);
        let test = [1.0, 1.0, 1.0, 0.0];
        let est = emq(&v, &test, &EmqConfig::default()).unwrap();
        assert!((est - 0.75).abs() < 1e-6, "est {est}");
    }

    #[test]
    fn emq_matches_long_reference_iteration() {
        let v = pool(&[0.9, 0.2, 0.8, 0.3], &[true, false, true, false]);
        let test = [0.9, 0.9, 0.9, 0.2];

        // independent reference: same recurrence, fixed 10000 steps
        let pv = 0.5;
        let omega = (0.9 + 0.2 + 0.8 + 0.3) / 4.0;
        let mut reference: f64 = omega;
        for _ in 0..10_000 {
            let mut total = 0.0;
            for &s in &test {
                let num = reference / pv * s;
                let den = num + (1.0 - reference) / (1.0 - pv) * (1.0 - s);
                total += num / den;
            }
            reference = (total / test.len() as f64).clamp(1e-9, 1.0 - 1e-9);
        }

        // The EM contraction rate on this instance is about 0.92, so the
        // default stopping rule halts ~1e-5 short of the limit; a tight
        // tolerance pins the same limit to within 1e-6.
        let tight = EmqConfig {
            tolerance: 1e-12,
            max_iter: 20_000,
        };
        let est = emq(&v, &test, &tight).unwrap();
        assert!(
            (est - reference).abs() < 1e-6,
            "est {est} vs reference {reference}"
        );

        let default_est = emq(&v, &test, &EmqConfig::default()).unwrap();
        assert!((default_est - reference).abs() < 1e-4);
    }

    #[test]
    fn emq_output_is_a_fixed_point() {
        let v = pool(&[0.7, 0.6, 0.3, 0.2], &[true, true, false, false]);
        let test = [0.8, 0.7, 0.4, 0.3, 0.2];
        let config = EmqConfig::default();
        let est = emq(&v, &test, &config).unwrap();
        let moved = emq_step(est, v.prevalence(), &test);
        assert!(
            (moved - est).abs() < 10.0 * config.tolerance,
            "residual {}",
            (moved - est).abs()
        );
    }

    #[test]
    fn bayesian_cc_concentrates_with_perfect_classifier() {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..500 {
            scores.push(0.9);
            labels.push(true);
            scores.push(0.1);
            labels.push(false);
        }
        let v = pool(&scores, &labels);
        let mut test = vec![0.9; 400];
        test.extend(vec![0.1; 600]);
        let config = SamplerConfig {
            keep: 4000,
            seed: 12,
            ..SamplerConfig::default()
        };
        let est = bayesian_cc(&v, &test, &config, 0.5).unwrap();
        assert!((est.point - 0.4).abs() < 0.03, "point {}", est.point);
        assert_eq!(est.method, Method::BayesianCc);
    }

    #[test]
    fn bayesian_cc_symmetric_counts_center_at_half() {
        // tpr = 0.8 = 1 - fpr, balanced validation, half the test predicted
        // positive: the posterior is symmetric under theta -> 1 - theta.
        let counts = ConfusionCounts {
            n_pp: 16,
            n_np: 4,
            n_pos: 20,
            n_neg: 20,
            n_hat_pos_t: 25,
            n_t: 50,
        };
        let config = SamplerConfig {
            keep: 8000,
            seed: 13,
            ..SamplerConfig::default()
        };
        let est = bayesian_cc_from_counts(&counts, &config, 0.5).unwrap();
        assert!((est.point - 0.5).abs() < 0.02, "point {}", est.point);
    }

    #[test]
    fn bayesian_cc_draws_stay_in_unit_interval() {
        let counts = ConfusionCounts {
            n_pp: 9,
            n_np: 1,
            n_pos: 10,
            n_neg: 10,
            n_hat_pos_t: 12,
            n_t: 20,
        };
        let config = SamplerConfig {
            warmup: 500,
            keep: 1000,
            seed: 14,
            ..SamplerConfig::default()
        };
        let est = bayesian_cc_from_counts(&counts, &config, 0.5).unwrap();
        for &d in est.draws.as_ref().unwrap() {
            assert!((0.0..=1.0).contains(&d));
        }
    }
}
