//! Logistic-regression classifier for the simulated experiments, plus the
//! calibration and threshold utilities the quantifiers need.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Keeps sigmoid outputs strictly inside (0, 1) even when the linear
/// predictor saturates in f64.
const PROB_CLAMP: f64 = 1e-16;

pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iter: usize,
    pub tolerance: f64,
    /// L2 penalty on the weights (the bias is never penalized).
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tolerance: 1e-8,
            l2: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    weights: Vec<f64>,
    bias: f64,
}

impl LogisticModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "logistic parameters must be finite".into(),
            ));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }
}

/// One-dimensional logistic map applied to raw scores (Platt scaling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    slope: f64,
    intercept: f64,
}

impl CalibrationMap {
    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn apply(&self, score: f64) -> f64 {
        sigmoid(self.slope * score + self.intercept)
    }
}

/// Maximize the L2-penalized log-likelihood by iteratively reweighted least
/// squares with step halving, stopping when the gradient norm drops below
/// `tolerance` or `max_iter` is reached.
pub fn train_logistic(
    features: &[Vec<f64>],
    labels: &[bool],
    config: &TrainConfig,
) -> Result<LogisticModel> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::InvalidParameter(
            "features and labels must be nonempty and parallel".into(),
        ));
    }
    let dim = features[0].len();
    for row in features {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::DegenerateLabels);
    }

    let p = dim + 1; // weights + bias, bias last
    let mut beta = DVector::<f64>::zeros(p);

    let linear = |beta: &DVector<f64>, row: &[f64]| -> f64 {
        row.iter()
            .enumerate()
            .map(|(j, &x)| beta[j] * x)
            .sum::<f64>()
            + beta[p - 1]
    };
    let penalized_ll = |beta: &DVector<f64>| -> f64 {
        let mut ll = 0.0;
        for (row, &y) in features.iter().zip(labels) {
            let z = linear(beta, row);
            ll += if y { z } else { 0.0 } - softplus(z);
        }
        let penalty: f64 = (0..dim).map(|j| beta[j] * beta[j]).sum();
        ll - 0.5 * config.l2 * penalty
    };

    let mut ll = penalized_ll(&beta);
    for _ in 0..config.max_iter {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for (row, &y) in features.iter().zip(labels) {
            let prob = sigmoid(linear(&beta, row));
            let resid = (y as u8 as f64) - prob;
            let w = prob * (1.0 - prob);
            for j in 0..p {
                let xj = if j < dim { row[j] } else { 1.0 };
                grad[j] += resid * xj;
                for k in j..p {
                    let xk = if k < dim { row[k] } else { 1.0 };
                    hess[(j, k)] += w * xj * xk;
                }
            }
        }
        for j in 0..dim {
            grad[j] -= config.l2 * beta[j];
            hess[(j, j)] += config.l2;
        }
        // jitter keeps the solve well-posed near separation
        for j in 0..p {
            hess[(j, j)] += 1e-12;
            for k in 0..j {
                hess[(j, k)] = hess[(k, j)];
            }
        }

        if grad.norm() < config.tolerance {
            break;
        }

        let delta = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => hess
                .lu()
                .solve(&grad)
                .ok_or_else(|| Error::InvalidParameter("singular IRLS system".into()))?,
        };

        let mut step = 1.0;
        loop {
            let candidate = &beta + &delta * step;
            let cand_ll = penalized_ll(&candidate);
            if cand_ll >= ll {
                beta = candidate;
                ll = cand_ll;
                break;
            }
            step *= 0.5;
            if step < 1e-10 {
                break;
            }
        }
    }

    LogisticModel::new(beta.as_slice()[..dim].to_vec(), beta[p - 1])
}

/// sigmoid(weights . x + bias), strictly inside (0, 1).
pub fn predict_proba(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            got: x.len(),
        });
    }
    let z = model.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + model.bias;
    Ok(sigmoid(z))
}

/// Unpenalized 1-D logistic regression of labels on raw scores; the fitted
/// map recalibrates scores for EMQ.
pub fn fit_platt(scores: &[f64], labels: &[bool]) -> Result<CalibrationMap> {
    let features: Vec<Vec<f64>> = scores.iter().map(|&s| vec![s]).collect();
    let config = TrainConfig {
        l2: 0.0,
        ..TrainConfig::default()
    };
    let model = train_logistic(&features, labels, &config)?;
    Ok(CalibrationMap {
        slope: model.weights[0],
        intercept: model.bias,
    })
}

/// Probability a random positive outscores a random negative, ties counted
/// as one half (the Mann-Whitney statistic, computed with average ranks).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_two_class(scores, labels)?;
    let n = scores.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("non-finite score"));

    let mut rank_sum_pos = 0.0;
    let mut n_pos = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based average rank for the tie group [i, j)
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            if labels[k] {
                rank_sum_pos += avg_rank;
                n_pos += 1;
            }
        }
        i = j;
    }
    let n_neg = n as u64 - n_pos;
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMcc {
    pub threshold: f64,
    pub mcc: f64,
}

/// Scan candidate thresholds (0, 1, and midpoints between consecutive
/// distinct scores) and return the one maximizing the Matthews correlation
/// coefficient. Predictions use `score >= threshold`; ties in MCC resolve to
/// the smaller threshold; a zero confusion-matrix margin gives MCC 0.
pub fn mcc_optimal_threshold(scores: &[f64], labels: &[bool]) -> Result<ThresholdMcc> {
    check_two_class(scores, labels)?;
    let n = scores.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("non-finite score"));

    let total_pos: u64 = labels.iter().filter(|&&l| l).count() as u64;
    let total_neg = n as u64 - total_pos;

    let mut candidates = vec![0.0];
    for w in idx.windows(2) {
        let (a, b) = (scores[w[0]], scores[w[1]]);
        if a < b {
            candidates.push((a + b) / 2.0);
        }
    }
    candidates.push(1.0);

    let mut best = ThresholdMcc {
        threshold: 0.0,
        mcc: f64::NEG_INFINITY,
    };
    // walk thresholds ascending; `cut` = first sorted index with score >= t
    let mut cut = 0usize;
    let mut pos_below = 0u64;
    for t in candidates {
        while cut < n && scores[idx[cut]] < t {
            if labels[idx[cut]] {
                pos_below += 1;
            }
            cut += 1;
        }
        let tp = total_pos - pos_below;
        let fp = total_neg - (cut as u64 - pos_below);
        let fn_ = pos_below;
        let tn = total_neg - fp;
        let mcc = matthews(tp, fp, tn, fn_);
        if mcc > best.mcc {
            best = ThresholdMcc { threshold: t, mcc };
        }
    }
    Ok(best)
}

fn matthews(tp: u64, fp: u64, tn: u64, fn_: u64) -> f64 {
    let denom = (tp + fp) as f64 * (tp + fn_) as f64 * (tn + fp) as f64 * (tn + fn_) as f64;
    if denom == 0.0 {
        return 0.0;
    }
    ((tp * tn) as f64 - (fp * fn_) as f64) / denom.sqrt()
}

fn check_two_class(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::InvalidParameter(
            "scores and labels must be nonempty and parallel".into(),
        ));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn log_loss(model: &LogisticModel, features: &[Vec<f64>], labels: &[bool]) -> f64 {
        let mut loss = 0.0;
        for (x, &y) in features.iter().zip(labels) {
            let p = predict_proba(model, x).unwrap();
            loss -= if y { p.ln() } else { (1.0 - p).ln() };
        }
        loss / features.len() as f64
    }

    fn gaussian_sample(
        rng: &mut ChaCha8Rng,
        n_pos: usize,
        n_neg: usize,
        mean_pos: f64,
    ) -> (Vec<Vec<f64>>, Vec<bool>) {
        let pos = Normal::new(mean_pos, 1.0).unwrap();
        let neg = Normal::new(0.0, 1.0).unwrap();
        let mut xs = Vec::with_capacity(n_pos + n_neg);
        let mut ys = Vec::with_capacity(n_pos + n_neg);
        for _ in 0..n_pos {
            xs.push(vec![pos.sample(rng)]);
            ys.push(true);
        }
        for _ in 0..n_neg {
            xs.push(vec![neg.sample(rng)]);
            ys.push(false);
        }
        (xs, ys)
    }

    #[test]
    fn separable_data_fits_tightly() {
        let features: Vec<Vec<f64>> = [-2.0, -1.5, -1.0, 1.0, 1.5, 2.0]
            .iter()
            .map(|&x| vec![x])
            .collect();
        let labels = vec![false, false, false, true, true, true];
        let config = TrainConfig {
            l2: 1e-4,
            ..TrainConfig::default()
        };
        let model = train_logistic(&features, &labels, &config).unwrap();
        assert!(log_loss(&model, &features, &labels) < 0.01);
        let scores: Vec<f64> = features
            .iter()
            .map(|x| predict_proba(&model, x).unwrap())
            .collect();
        assert_eq!(auc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn recovers_analytic_gaussian_slope() {
        // For equal-variance Gaussians the Bayes log-odds slope is
        // (mu1 - mu0) / sigma^2 = 2.5.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (xs, ys) = gaussian_sample(&mut rng, 10_000, 10_000, 2.5);
        let model = train_logistic(&xs, &ys, &TrainConfig::default()).unwrap();
        assert!(
            (model.weights()[0] - 2.5).abs() < 0.15,
            "slope = {}",
            model.weights()[0]
        );
    }

    #[test]
    fn symmetric_data_gives_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pos = Normal::new(1.0, 1.0).unwrap();
        let neg = Normal::new(-1.0, 1.0).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..20_000 {
            xs.push(vec![pos.sample(&mut rng)]);
            ys.push(true);
            xs.push(vec![neg.sample(&mut rng)]);
            ys.push(false);
        }
        let model = train_logistic(&xs, &ys, &TrainConfig::default()).unwrap();
        assert!(model.bias().abs() < 0.05, "bias = {}", model.bias());
    }

    #[test]
    fn gradient_small_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (xs, ys) = gaussian_sample(&mut rng, 300, 300, 1.0);
        let config = TrainConfig::default();
        let model = train_logistic(&xs, &ys, &config).unwrap();
        let mut grad_w = 0.0;
        let mut grad_b = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            let resid = (y as u8 as f64) - predict_proba(&model, x).unwrap();
            grad_w += resid * x[0];
            grad_b += resid;
        }
        grad_w -= config.l2 * model.weights()[0];
        let norm = (grad_w * grad_w + grad_b * grad_b).sqrt();
        assert!(norm < config.tolerance * 10.0, "gradient norm {norm}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (xs, ys) = gaussian_sample(&mut rng, 50, 50, 1.0);
        let config = TrainConfig {
            l2: 0.01,
            ..TrainConfig::default()
        };
        let ll = |w: f64, b: f64| -> f64 {
            let mut total = 0.0;
            for (x, &y) in xs.iter().zip(&ys) {
                let z = w * x[0] + b;
                total += if y { z } else { 0.0 } - softplus(z);
            }
            total - 0.5 * config.l2 * w * w
        };
        let (w0, b0) = (0.4, -0.2);
        let h = 1e-6;
        let fd_w = (ll(w0 + h, b0) - ll(w0 - h, b0)) / (2.0 * h);
        let fd_b = (ll(w0, b0 + h) - ll(w0, b0 - h)) / (2.0 * h);
        // analytic form used inside IRLS
        let mut grad_w = 0.0;
        let mut grad_b = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            let resid = (y as u8 as f64) - sigmoid(w0 * x[0] + b0);
            grad_w += resid * x[0];
            grad_b += resid;
        }
        grad_w -= config.l2 * w0;
        assert!((fd_w - grad_w).abs() < 1e-4 * (1.0 + grad_w.abs()));
        assert!((fd_b - grad_b).abs() < 1e-4 * (1.0 + grad_b.abs()));
    }

    #[test]
    fn predict_proba_examples() {
        let flat = LogisticModel::new(vec![0.0], 0.0).unwrap();
        assert_eq!(predict_proba(&flat, &[3.0]).unwrap(), 0.5);

        let unit = LogisticModel::new(vec![1.0], 0.0).unwrap();
        assert_eq!(predict_proba(&unit, &[0.0]).unwrap(), 0.5);

        // decision boundary of the 0-vs-2.5 design sits at the midpoint
        let design = LogisticModel::new(vec![2.5], -3.125).unwrap();
        assert!((predict_proba(&design, &[1.25]).unwrap() - 0.5).abs() < 1e-12);

        assert!(predict_proba(&unit, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn predict_proba_monotone_in_linear_predictor() {
        let model = LogisticModel::new(vec![2.0], -0.5).unwrap();
        let mut prev = 0.0;
        for i in 0..50 {
            let x = -5.0 + i as f64 * 0.2;
            let p = predict_proba(&model, &[x]).unwrap();
            assert!(p > prev);
            assert!(p > 0.0 && p < 1.0);
            prev = p;
        }
    }

    #[test]
    fn platt_on_calibrated_scores_is_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut scores = Vec::with_capacity(10_000);
        let mut labels = Vec::with_capacity(10_000);
        for _ in 0..10_000 {
            let s: f64 = rand::Rng::random(&mut rng);
            scores.push(s);
            labels.push(rand::Rng::random_bool(&mut rng, s));
        }
        let map = fit_platt(&scores, &labels).unwrap();
        // binned reliability: calibrated means stay close to raw means
        for bin in 0..10 {
            let (lo, hi) = (bin as f64 / 10.0, (bin + 1) as f64 / 10.0);
            let in_bin: Vec<f64> = scores
                .iter()
                .copied()
                .filter(|s| *s >= lo && *s < hi)
                .collect();
            let raw_mean = in_bin.iter().sum::<f64>() / in_bin.len() as f64;
            let cal_mean = in_bin.iter().map(|&s| map.apply(s)).sum::<f64>() / in_bin.len() as f64;
            assert!(
                (cal_mean - raw_mean).abs() < 0.05,
                "bin {bin}: raw {raw_mean} calibrated {cal_mean}"
            );
        }
    }

    #[test]
    fn platt_rejects_single_class() {
        assert!(matches!(
            fit_platt(&[0.1, 0.9], &[true, true]),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn platt_flat_when_scores_carry_no_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut scores = Vec::with_capacity(5000);
        let mut labels = Vec::with_capacity(5000);
        for i in 0..5000 {
            scores.push(rand::Rng::random(&mut rng));
            labels.push(i % 2 == 0);
        }
        let map = fit_platt(&scores, &labels).unwrap();
        assert!(map.slope().abs() < 0.3, "slope = {}", map.slope());
        assert!((map.apply(0.5) - 0.5).abs() < 0.05);
    }

    #[test]
    fn auc_examples() {
        let scores = [0.9, 0.9, 0.1, 0.1];
        let labels = [true, true, false, false];
        assert_eq!(auc(&scores, &labels).unwrap(), 1.0);

        let tied = [0.5, 0.5, 0.5, 0.5];
        assert_eq!(auc(&tied, &labels).unwrap(), 0.5);

        assert!(auc(&[0.1, 0.9], &[true, true]).is_err());
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            scores.push(rand::Rng::random::<f64>(&mut rng));
            labels.push(i % 3 == 0);
        }
        let base = auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|&s| sigmoid(4.0 * s - 2.0)).collect();
        assert!((auc(&squashed, &labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn mcc_perfect_separation() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [false, false, true, true];
        let best = mcc_optimal_threshold(&scores, &labels).unwrap();
        assert_eq!(best.mcc, 1.0);
        assert!(best.threshold > 0.2 && best.threshold <= 0.8);
    }

    #[test]
    fn mcc_near_zero_without_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..1000 {
            scores.push(rand::Rng::random::<f64>(&mut rng));
            labels.push(i % 2 == 0);
        }
        let best = mcc_optimal_threshold(&scores, &labels).unwrap();
        assert!(best.mcc.abs() < 0.15, "mcc = {}", best.mcc);
    }

    #[test]
    fn mcc_sweep_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let n = 5 + (trial % 40);
            let mut scores = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                // quantized scores force ties
                let raw: f64 = rand::Rng::random(&mut rng);
                scores.push((raw * 8.0).round() / 8.0);
                labels.push(i % 2 == 0);
            }
            let fast = mcc_optimal_threshold(&scores, &labels).unwrap();

            // independent brute force over the same candidate set
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sorted.dedup();
            let mut cands = vec![0.0, 1.0];
            for w in sorted.windows(2) {
                cands.push((w[0] + w[1]) / 2.0);
            }
            cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut best = (f64::NEG_INFINITY, 0.0);
            for t in cands {
                let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
                for (&s, &y) in scores.iter().zip(&labels) {
                    match (s >= t, y) {
                        (true, true) => tp += 1,
                        (true, false) => fp += 1,
                        (false, false) => tn += 1,
                        (false, true) => fn_ += 1,
                    }
                }
                let m = matthews(tp, fp, tn, fn_);
                if m > best.0 {
                    best = (m, t);
                }
            }
            assert!((fast.mcc - best.0).abs() < 1e-12, "trial {trial}");
            assert_eq!(fast.threshold, best.1, "trial {trial}");
        }
    }
}
