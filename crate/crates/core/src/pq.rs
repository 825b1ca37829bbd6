//! The Precise Quantifier: a multi-level Bayesian model over binned
//! classifier scores. The latent parameters are a prior prevalence and the
//! per-class bin distributions; the test prevalence posterior is obtained by
//! sampling those parameters with MCMC and then drawing per-bin binomial
//! label counts for the test set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::binning::{bin_test, fit_bins, BinModel, BinnedTest, DEFAULT_N_BINS};
use crate::data::{LabeledPool, UnlabeledPool};
use crate::error::{Error, Result};
use crate::interval::{EstimateWithInterval, Method};
use crate::sampler::{sample, Block, ParamSpace, SamplerConfig};

/// The latent triple: prior prevalence plus the positive- and
/// negative-class bin distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PQParams {
    pub theta_pr: f64,
    pub p_pos: Vec<f64>,
    pub p_neg: Vec<f64>,
}

impl PQParams {
    fn from_flat(flat: &[f64], n_bins: usize) -> Self {
        Self {
            theta_pr: flat[0],
            p_pos: flat[1..1 + n_bins].to_vec(),
            p_neg: flat[1 + n_bins..1 + 2 * n_bins].to_vec(),
        }
    }
}

/// Posterior draws of the parameters and of the test prevalence, with the
/// binned inputs they came from.
#[derive(Debug, Clone)]
pub struct PQPosterior {
    pub param_draws: Vec<PQParams>,
    pub theta_draws: Vec<f64>,
    pub bin_model: BinModel,
    pub binned_test: BinnedTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PQConfig {
    pub n_bins: usize,
    pub sampler: SamplerConfig,
    pub mass: f64,
}

impl Default for PQConfig {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_N_BINS,
            sampler: SamplerConfig::default(),
            mass: 0.5,
        }
    }
}

fn ln_term(count: u64, prob: f64) -> f64 {
    if count == 0 {
        0.0
    } else if prob > 0.0 {
        count as f64 * prob.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Joint log posterior of (theta_pr, {p+}, {p-}) given the binned validation
/// and test counts, up to an additive constant. With the default uniform and
/// Dirichlet(1) priors the prior term is constant and omitted. Zero counts
/// contribute nothing; a positive count on a zero-probability bin yields
/// negative infinity.
pub fn pq_log_posterior(params: &PQParams, bins: &BinModel, test: &BinnedTest) -> f64 {
    let k = bins.n_bins();
    debug_assert_eq!(params.p_pos.len(), k);
    debug_assert_eq!(params.p_neg.len(), k);
    debug_assert_eq!(test.counts().len(), k);

    let mut total = 0.0;
    for i in 0..k {
        let mix = params.theta_pr * params.p_pos[i] + (1.0 - params.theta_pr) * params.p_neg[i];
        total += ln_term(test.counts()[i], mix);
        total += ln_term(bins.v_pos()[i], params.p_pos[i]);
        total += ln_term(bins.v_neg()[i], params.p_neg[i]);
    }
    total
}

/// Sample the parameter posterior with the adaptive Metropolis sampler over
/// one unit-interval scalar and two simplex blocks.
pub fn pq_fit(
    bins: &BinModel,
    test: &BinnedTest,
    sampler_config: &SamplerConfig,
) -> Result<Vec<PQParams>> {
    let k = bins.n_bins();
    let space = ParamSpace::new(vec![
        Block::UnitInterval,
        Block::Simplex { dim: k },
        Block::Simplex { dim: k },
    ])?;
    let target = |flat: &[f64]| {
        let params = PQParams::from_flat(flat, k);
        pq_log_posterior(&params, bins, test)
    };
    let out = sample(&space, target, sampler_config)?;
    Ok(out
        .draws
        .iter()
        .map(|flat| PQParams::from_flat(flat, k))
        .collect())
}

/// Probability that a test sample landing in a bin is positive, given the
/// parameters. Defined as zero when the bin has no mass under either class.
pub fn positive_given_bin(params: &PQParams, bin: usize) -> f64 {
    let num = params.theta_pr * params.p_pos[bin];
    let denom = num + (1.0 - params.theta_pr) * params.p_neg[bin];
    if denom > 0.0 {
        num / denom
    } else {
        0.0
    }
}

/// One test-prevalence draw per parameter draw: for each bin sample the
/// number of positives among its test count from a binomial, sum, and divide
/// by the test size. Every draw therefore lies on the lattice {0, 1/n_T, ..., 1}.
pub fn pq_prevalence_draws(
    param_draws: &[PQParams],
    test: &BinnedTest,
    seed: u64,
) -> Result<Vec<f64>> {
    if param_draws.is_empty() {
        return Err(Error::NoDraws);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_t = test.n_t();
    let mut draws = Vec::with_capacity(param_draws.len());
    for params in param_draws {
        let mut positives = 0u64;
        for (bin, &t_k) in test.counts().iter().enumerate() {
            if t_k == 0 {
                continue;
            }
            let pi = positive_given_bin(params, bin);
            positives += sample_binomial(&mut rng, t_k, pi);
        }
        draws.push(positives as f64 / n_t as f64);
    }
    Ok(draws)
}

fn sample_binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("valid binomial").sample(rng)
    }
}

/// End-to-end quantification: bin the validation pool, count the test pool,
/// sample the parameter posterior, draw test prevalences, and summarize them
/// as a posterior-mean point with a central interval.
pub fn pq_quantify(
    validation: &LabeledPool,
    test: &UnlabeledPool,
    config: &PQConfig,
) -> Result<EstimateWithInterval> {
    let posterior = pq_posterior(validation, test, config)?;
    EstimateWithInterval::from_draws(posterior.theta_draws, config.mass, Method::Pq)
}

/// Like [`pq_quantify`] but keeps the full posterior object.
pub fn pq_posterior(
    validation: &LabeledPool,
    test: &UnlabeledPool,
    config: &PQConfig,
) -> Result<PQPosterior> {
    let bin_model = fit_bins(validation, config.n_bins)?;
    let binned_test = bin_test(&bin_model, test);
    let param_draws = pq_fit(&bin_model, &binned_test, &config.sampler)?;
    let theta_draws = pq_prevalence_draws(
        &param_draws,
        &binned_test,
        config.sampler.seed.wrapping_add(0x9E37_79B9_7F4A_7C15),
    )?;
    Ok(PQPosterior {
        param_draws,
        theta_draws,
        bin_model,
        binned_test,
    })
}
