//! Adaptive random-walk Metropolis for low-dimensional constrained
//! posteriors. Parameters live in blocks (unit-interval scalars and
//! simplexes) that are mapped to an unconstrained space by logit and
//! stick-breaking transforms; proposals are per-coordinate Gaussians whose
//! step sizes adapt during warmup.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LOG_STEP_MIN: f64 = -20.0;
const LOG_STEP_MAX: f64 = 5.0;

/// One constraint block of the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// Scalar in [0, 1].
    UnitInterval,
    /// Probability vector with `dim` components summing to one.
    Simplex { dim: usize },
}

impl Block {
    fn constrained_len(&self) -> usize {
        match self {
            Block::UnitInterval => 1,
            Block::Simplex { dim } => *dim,
        }
    }

    fn unconstrained_len(&self) -> usize {
        match self {
            Block::UnitInterval => 1,
            Block::Simplex { dim } => dim - 1,
        }
    }
}

/// Ordered constraint blocks describing the constrained parameter layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpace {
    blocks: Vec<Block>,
}

impl ParamSpace {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        for b in &blocks {
            if let Block::Simplex { dim } = b {
                if *dim == 0 {
                    return Err(Error::InvalidParameter("zero-dimensional simplex".into()));
                }
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn constrained_len(&self) -> usize {
        self.blocks.iter().map(Block::constrained_len).sum()
    }

    pub fn unconstrained_len(&self) -> usize {
        self.blocks.iter().map(Block::unconstrained_len).sum()
    }

    /// Logit / stick-breaking transform of strictly interior constrained
    /// values. Exact boundary values are rejected.
    pub fn to_unconstrained(&self, constrained: &[f64]) -> Result<Vec<f64>> {
        if constrained.len() != self.constrained_len() {
            return Err(Error::DimensionMismatch {
                expected: self.constrained_len(),
                got: constrained.len(),
            });
        }
        let mut z = Vec::with_capacity(self.unconstrained_len());
        let mut offset = 0;
        for block in &self.blocks {
            let vals = &constrained[offset..offset + block.constrained_len()];
            match block {
                Block::UnitInterval => {
                    let x = vals[0];
                    if !(x > 0.0 && x < 1.0) {
                        return Err(Error::NonInteriorPoint);
                    }
                    z.push(logit(x));
                }
                Block::Simplex { dim } => {
                    let mut rest = 1.0;
                    for (i, &v) in vals.iter().enumerate().take(dim - 1) {
                        // comparisons are false for NaN, so non-finite input fails too
                        let interior = v > 0.0 && rest - v > 0.0;
                        if !interior {
                            return Err(Error::NonInteriorPoint);
                        }
                        let w = v / rest;
                        if !(w > 0.0 && w < 1.0) {
                            return Err(Error::NonInteriorPoint);
                        }
                        z.push(logit(w) + ((dim - i - 1) as f64).ln());
                        rest -= v;
                    }
                    let last_interior = vals[dim - 1] > 0.0;
                    if !last_interior {
                        return Err(Error::NonInteriorPoint);
                    }
                }
            }
            offset += block.constrained_len();
        }
        Ok(z)
    }

    /// Inverse transform; simplex blocks are renormalized so components sum
    /// to one exactly.
    pub fn to_constrained(&self, z: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.constrained_len());
        let mut offset = 0;
        for block in &self.blocks {
            match block {
                Block::UnitInterval => {
                    out.push(raw_sigmoid(z[offset]));
                    offset += 1;
                }
                Block::Simplex { dim } => {
                    let start = out.len();
                    let mut stick = 1.0;
                    for i in 0..dim - 1 {
                        let w = raw_sigmoid(z[offset + i] - ((dim - i - 1) as f64).ln());
                        let x = stick * w;
                        out.push(x);
                        stick -= x;
                    }
                    out.push(stick.max(0.0));
                    let total: f64 = out[start..].iter().sum();
                    if total > 0.0 {
                        for v in &mut out[start..] {
                            *v /= total;
                        }
                    }
                    offset += dim - 1;
                }
            }
        }
        out
    }

    /// Log absolute determinant of the unconstrained-to-constrained map.
    pub fn log_jacobian(&self, z: &[f64]) -> f64 {
        let mut log_j = 0.0;
        let mut offset = 0;
        for block in &self.blocks {
            match block {
                Block::UnitInterval => {
                    let w = raw_sigmoid(z[offset]);
                    log_j += safe_ln(w) + safe_ln(1.0 - w);
                    offset += 1;
                }
                Block::Simplex { dim } => {
                    let mut stick = 1.0;
                    for i in 0..dim - 1 {
                        let w = raw_sigmoid(z[offset + i] - ((dim - i - 1) as f64).ln());
                        log_j += safe_ln(stick) + safe_ln(w) + safe_ln(1.0 - w);
                        stick -= stick * w;
                    }
                    offset += dim - 1;
                }
            }
        }
        log_j
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn raw_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn safe_ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Target density in unconstrained coordinates: the constrained target plus
/// the transform's log Jacobian. Non-finite targets collapse to negative
/// infinity so the proposal is rejected.
pub fn log_density_unconstrained(
    space: &ParamSpace,
    target_log_density: &dyn Fn(&[f64]) -> f64,
    z: &[f64],
) -> f64 {
    let constrained = space.to_constrained(z);
    let lt = target_log_density(&constrained);
    let lt = if lt.is_nan() || lt == f64::INFINITY {
        f64::NEG_INFINITY
    } else {
        lt
    };
    lt + space.log_jacobian(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub warmup: usize,
    pub keep: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub initial_step: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            warmup: 2000,
            keep: 1000,
            seed: 0,
            target_accept: 0.3,
            initial_step: 0.5,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.keep < 1 {
            return Err(Error::InvalidParameter("keep must be >= 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidParameter(
                "target_accept must be in (0, 1)".into(),
            ));
        }
        let step_valid = self.initial_step > 0.0;
        if !step_valid {
            return Err(Error::InvalidParameter("initial_step must be > 0".into()));
        }
        Ok(())
    }
}

/// Retained draws (one row per kept iteration) plus the post-warmup
/// acceptance rate.
#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub draws: Vec<Vec<f64>>,
    pub accept_rate: f64,
}

/// Sample the constrained target. The chain starts at the symmetric center
/// of every block (z = 0: scalars at 1/2, simplexes uniform), adapts
/// per-coordinate step sizes toward `target_accept` during warmup via
/// Robbins-Monro on the log step, then freezes and returns `keep` draws
/// mapped back to constrained space. Deterministic given the seed.
pub fn sample(
    space: &ParamSpace,
    target_log_density: impl Fn(&[f64]) -> f64,
    config: &SamplerConfig,
) -> Result<SampleOutput> {
    let target = &target_log_density as &dyn Fn(&[f64]) -> f64;
    let ldu = |z: &[f64]| log_density_unconstrained(space, target, z);
    let out = run_chain(space.unconstrained_len(), &ldu, config)?;
    Ok(SampleOutput {
        draws: out
            .draws
            .into_iter()
            .map(|z| space.to_constrained(&z))
            .collect(),
        accept_rate: out.accept_rate,
    })
}

/// The raw unconstrained kernel, exposed for direct checks against targets
/// defined on all of R^dim.
pub fn sample_unconstrained(
    dim: usize,
    log_density: impl Fn(&[f64]) -> f64,
    config: &SamplerConfig,
) -> Result<SampleOutput> {
    run_chain(dim, &log_density, config)
}

fn run_chain(
    dim: usize,
    log_density: &dyn Fn(&[f64]) -> f64,
    config: &SamplerConfig,
) -> Result<SampleOutput> {
    config.validate()?;
    let mut z = vec![0.0; dim];
    let mut lp = log_density(&z);
    if !lp.is_finite() {
        return Err(Error::InvalidInitialization);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log_step = vec![config.initial_step.ln(); dim];
    let mut draws = Vec::with_capacity(config.keep);
    let mut accepted = 0u64;
    let mut proposed = 0u64;

    for iter in 0..config.warmup + config.keep {
        for j in 0..dim {
            let old = z[j];
            let noise: f64 = StandardNormal.sample(&mut rng);
            z[j] = old + noise * log_step[j].exp();
            let lp_new = log_density(&z);
            let log_ratio = lp_new - lp;
            let alpha = if log_ratio >= 0.0 {
                1.0
            } else {
                log_ratio.exp()
            };
            let u: f64 = rng.random();
            let accept = u < alpha;
            if accept {
                lp = lp_new;
            } else {
                z[j] = old;
            }
            if iter < config.warmup {
                let eta = ((iter + 1) as f64).powf(-0.6);
                log_step[j] = (log_step[j] + eta * (alpha - config.target_accept))
                    .clamp(LOG_STEP_MIN, LOG_STEP_MAX);
            } else {
                proposed += 1;
                accepted += accept as u64;
            }
        }
        if iter >= config.warmup {
            draws.push(z.clone());
        }
    }

    let accept_rate = if proposed > 0 {
        accepted as f64 / proposed as f64
    } else {
        1.0
    };
    Ok(SampleOutput { draws, accept_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_scalar() -> ParamSpace {
        ParamSpace::new(vec![Block::UnitInterval]).unwrap()
    }

    #[test]
    fn scalar_transform_centers_at_zero() {
        let space = unit_scalar();
        let z = space.to_unconstrained(&[0.5]).unwrap();
        assert_eq!(z, vec![0.0]);
        assert_eq!(space.to_constrained(&[0.0]), vec![0.5]);
    }

    #[test]
    fn symmetric_simplex_maps_to_origin() {
        let space = ParamSpace::new(vec![Block::Simplex { dim: 2 }]).unwrap();
        let z = space.to_unconstrained(&[0.5, 0.5]).unwrap();
        assert!(z[0].abs() < 1e-14);

        let space3 = ParamSpace::new(vec![Block::Simplex { dim: 3 }]).unwrap();
        let z = space3
            .to_unconstrained(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])
            .unwrap();
        for v in z {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_points_rejected() {
        let space = unit_scalar();
        assert!(matches!(
            space.to_unconstrained(&[0.0]),
            Err(Error::NonInteriorPoint)
        ));
        assert!(matches!(
            space.to_unconstrained(&[1.0]),
            Err(Error::NonInteriorPoint)
        ));
        let simplex = ParamSpace::new(vec![Block::Simplex { dim: 3 }]).unwrap();
        assert!(matches!(
            simplex.to_unconstrained(&[0.0, 0.5, 0.5]),
            Err(Error::NonInteriorPoint)
        ));
    }

    #[test]
    fn round_trip_random_interior_points() {
        let space = ParamSpace::new(vec![
            Block::UnitInterval,
            Block::Simplex { dim: 4 },
            Block::Simplex { dim: 4 },
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let theta: f64 = rng.random_range(0.01..0.99);
            let mut vals = vec![theta];
            for _ in 0..2 {
                let mut parts: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..1.0)).collect();
                let total: f64 = parts.iter().sum();
                for p in &mut parts {
                    *p /= total;
                }
                vals.extend(parts);
            }
            let z = space.to_unconstrained(&vals).unwrap();
            let back = space.to_constrained(&z);
            for (a, b) in vals.iter().zip(&back) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn scalar_log_jacobian_at_origin() {
        let space = unit_scalar();
        let lj = space.log_jacobian(&[0.0]);
        assert!((lj - 0.25f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn uniform_target_log_density_includes_jacobian() {
        let space = unit_scalar();
        let target = |_: &[f64]| 0.0;
        let ld = log_density_unconstrained(&space, &target, &[0.0]);
        assert!((ld - 0.25f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn non_finite_targets_become_rejections() {
        let space = unit_scalar();
        let nan_target = |_: &[f64]| f64::NAN;
        assert_eq!(
            log_density_unconstrained(&space, &nan_target, &[0.0]),
            f64::NEG_INFINITY
        );
        let inf_target = |_: &[f64]| f64::INFINITY;
        assert_eq!(
            log_density_unconstrained(&space, &inf_target, &[0.0]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn pushforward_of_uniform_simplex_matches_monte_carlo() {
        // Constant Dirichlet(1) target on a 2-component simplex: the exact
        // pushforward CDF of the single unconstrained coordinate is the
        // sigmoid, so expected bin masses are sigmoid differences. Compare a
        // fine midpoint integration of exp(log_density_unconstrained)
        // against a large Monte Carlo histogram of transformed draws.
        let space = ParamSpace::new(vec![Block::Simplex { dim: 2 }]).unwrap();
        let target = |_: &[f64]| 0.0;

        let n_draws = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bins = 16;
        let (lo, hi) = (-4.0, 4.0);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        let mut in_range = 0u64;
        for _ in 0..n_draws {
            let x: f64 = rng.random();
            if !(x > 0.0 && x < 1.0) {
                continue;
            }
            let z = space.to_unconstrained(&[x, 1.0 - x]).unwrap()[0];
            if z >= lo && z < hi {
                let b = ((z - lo) / width) as usize;
                counts[b.min(bins - 1)] += 1;
                in_range += 1;
            }
        }
        let _ = in_range;

        for (b, &count) in counts.iter().enumerate() {
            let mut mass = 0.0;
            let sub = 200;
            for s in 0..sub {
                let z = lo + (b as f64 + (s as f64 + 0.5) / sub as f64) * width;
                mass += log_density_unconstrained(&space, &target, &[z]).exp();
            }
            mass *= width / sub as f64;
            let expected = mass * n_draws as f64;
            let sigma = (expected * (1.0 - mass)).sqrt().max(1.0);
            let observed = count as f64;
            assert!(
                (observed - expected).abs() < 3.0 * sigma + 1e-9,
                "bin {b}: observed {observed}, expected {expected}, sigma {sigma}"
            );
        }
    }

    #[test]
    fn constant_target_recovers_uniform_simplex() {
        // Dir(1,1,1) pushforward: each component is marginally Beta(1,2).
        let space = ParamSpace::new(vec![Block::Simplex { dim: 3 }]).unwrap();
        let config = SamplerConfig {
            keep: 20_000,
            seed: 99,
            ..SamplerConfig::default()
        };
        let out = sample(&space, |_| 0.0, &config).unwrap();
        for comp in 0..3 {
            let mean: f64 = out.draws.iter().map(|d| d[comp]).sum::<f64>() / out.draws.len() as f64;
            assert!((mean - 1.0 / 3.0).abs() < 0.02, "component {comp}: {mean}");
        }
        // KS distance of the first component against Beta(1,2):
        // F(x) = 1 - (1 - x)^2.
        let mut first: Vec<f64> = out.draws.iter().map(|d| d[0]).collect();
        first.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = first.len() as f64;
        let mut ks: f64 = 0.0;
        for (i, x) in first.iter().enumerate() {
            let cdf = 1.0 - (1.0 - x) * (1.0 - x);
            let emp_hi = (i + 1) as f64 / n;
            let emp_lo = i as f64 / n;
            ks = ks.max((cdf - emp_lo).abs()).max((cdf - emp_hi).abs());
        }
        assert!(ks < 0.03, "KS distance {ks}");
    }

    #[test]
    fn beta_binomial_conjugate_mean() {
        // Binomial(n = 20, k = 14) with uniform prior: posterior is
        // Beta(15, 7), mean 15/22.
        let space = unit_scalar();
        let target = |p: &[f64]| {
            let theta = p[0];
            ln_pow(theta, 14) + ln_pow(1.0 - theta, 6)
        };
        let config = SamplerConfig {
            keep: 10_000,
            seed: 4,
            ..SamplerConfig::default()
        };
        let out = sample(&space, target, &config).unwrap();
        let mean: f64 = out.draws.iter().map(|d| d[0]).sum::<f64>() / out.draws.len() as f64;
        assert!((mean - 15.0 / 22.0).abs() < 0.02, "mean = {mean}");
    }

    #[test]
    fn dirichlet_multinomial_conjugate_means() {
        // Multinomial counts {5, 3, 2} with Dirichlet(1) prior: posterior is
        // Dirichlet(6, 4, 3) with component means {6, 4, 3} / 13.
        let space = ParamSpace::new(vec![Block::Simplex { dim: 3 }]).unwrap();
        let counts = [5u64, 3, 2];
        let target = move |p: &[f64]| {
            counts
                .iter()
                .zip(p)
                .map(|(&c, &pi)| ln_pow(pi, c))
                .sum::<f64>()
        };
        let config = SamplerConfig {
            keep: 10_000,
            seed: 5,
            ..SamplerConfig::default()
        };
        let out = sample(&space, target, &config).unwrap();
        let expected = [6.0 / 13.0, 4.0 / 13.0, 3.0 / 13.0];
        for comp in 0..3 {
            let mean: f64 = out.draws.iter().map(|d| d[comp]).sum::<f64>() / out.draws.len() as f64;
            assert!(
                (mean - expected[comp]).abs() < 0.02,
                "component {comp}: {mean} vs {}",
                expected[comp]
            );
        }
    }

    #[test]
    fn draws_satisfy_block_constraints() {
        let space = ParamSpace::new(vec![Block::UnitInterval, Block::Simplex { dim: 4 }]).unwrap();
        let config = SamplerConfig {
            warmup: 200,
            keep: 500,
            seed: 8,
            ..SamplerConfig::default()
        };
        let out = sample(&space, |_| 0.0, &config).unwrap();
        for d in &out.draws {
            assert!(d[0] >= 0.0 && d[0] <= 1.0);
            let sum: f64 = d[1..5].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(d[1..5].iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn same_seed_gives_identical_chains() {
        let space = ParamSpace::new(vec![Block::UnitInterval, Block::Simplex { dim: 3 }]).unwrap();
        let target = |p: &[f64]| ln_pow(p[0], 3) + ln_pow(1.0 - p[0], 2) + ln_pow(p[1], 4);
        let config = SamplerConfig {
            warmup: 300,
            keep: 300,
            seed: 1234,
            ..SamplerConfig::default()
        };
        let a = sample(&space, target, &config).unwrap();
        let b = sample(&space, target, &config).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.accept_rate, b.accept_rate);
    }

    #[test]
    fn rejects_invalid_initialization() {
        let space = unit_scalar();
        let err = sample(&space, |_| f64::NEG_INFINITY, &SamplerConfig::default());
        assert!(matches!(err, Err(Error::InvalidInitialization)));
    }

    #[test]
    fn standard_normal_moments_via_unconstrained_kernel() {
        let config = SamplerConfig {
            warmup: 2000,
            keep: 20_000,
            seed: 31,
            ..SamplerConfig::default()
        };
        let out = sample_unconstrained(1, |z| -0.5 * z[0] * z[0], &config).unwrap();
        let xs: Vec<f64> = out.draws.iter().map(|d| d[0]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);

        // batch-means standard error accounts for chain autocorrelation
        let batches = 100;
        let per = xs.len() / batches;
        let batch_means: Vec<f64> = (0..batches)
            .map(|b| xs[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
            .collect();
        let bm = batch_means.iter().sum::<f64>() / batches as f64;
        let bvar =
            batch_means.iter().map(|m| (m - bm) * (m - bm)).sum::<f64>() / (batches as f64 - 1.0);
        let se = (bvar / batches as f64).sqrt();

        assert!(mean.abs() < 4.0 * se, "mean {mean}, se {se}");
        assert!((var - 1.0).abs() < 0.2, "variance {var}");
        assert!(out.accept_rate > 0.1 && out.accept_rate < 0.6);
    }

    fn ln_pow(base: f64, count: u64) -> f64 {
        if count == 0 {
            0.0
        } else if base > 0.0 {
            count as f64 * base.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}
