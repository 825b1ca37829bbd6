//! Dataset generation for the simulated experiments, the
//! artificial-prevalence evaluation protocol, and ingestion of externally
//! produced classifier scores.

use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifier::{predict_proba, LogisticModel};
use crate::data::{LabeledPool, ScoredSample, UnlabeledPool};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Prevalence levels of the artificial-prevalence protocol: 0.00, 0.01,
/// ..., 1.00.
pub const APP_PREVALENCE_LEVELS: usize = 101;

/// Replicates per prevalence level in the full protocol.
pub const DEFAULT_REPLICATES: usize = 10;

/// Two unit-variance Gaussian class-conditional feature distributions, the
/// negative class centered at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDesign {
    pub mean_neg: f64,
    pub mean_pos: f64,
}

impl GaussianDesign {
    pub fn new(mean_pos: f64) -> Self {
        Self {
            mean_neg: 0.0,
            mean_pos,
        }
    }

    /// Strongly overlapping classes (positive mean 1).
    pub fn hard() -> Self {
        Self::new(1.0)
    }

    /// Well separated classes (positive mean 2.5).
    pub fn easy() -> Self {
        Self::new(2.5)
    }
}

/// One generated test set with its realized prevalence.
#[derive(Debug, Clone)]
pub struct TestCase {
    pub test: UnlabeledPool,
    pub true_prevalence: f64,
    pub case_id: String,
    pub seed: u64,
}

/// Round-half-up count of positives for a target prevalence.
pub fn positives_for_prevalence(prevalence: f64, n: usize) -> usize {
    ((prevalence * n as f64) + 0.5)
        .floor()
        .min(n as f64)
        .max(0.0) as usize
}

/// Draw `n` labeled raw features with exactly round(prevalence * n)
/// positives from N(mean_pos, 1) and the rest from N(mean_neg, 1).
pub fn gen_gaussian_labeled(
    design: &GaussianDesign,
    n: usize,
    prevalence: f64,
    seed: u64,
) -> Result<Vec<(f64, bool)>> {
    if n < 1 {
        return Err(Error::EmptyPool);
    }
    if !(0.0..=1.0).contains(&prevalence) {
        return Err(Error::InvalidParameter(format!(
            "prevalence {prevalence} outside [0, 1]"
        )));
    }
    let n_pos = positives_for_prevalence(prevalence, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(gen_gaussian_counts(design, n_pos, n - n_pos, &mut rng))
}

fn gen_gaussian_counts(
    design: &GaussianDesign,
    n_pos: usize,
    n_neg: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, bool)> {
    let pos = Normal::new(design.mean_pos, 1.0).expect("unit variance");
    let neg = Normal::new(design.mean_neg, 1.0).expect("unit variance");
    let mut out = Vec::with_capacity(n_pos + n_neg);
    for _ in 0..n_pos {
        out.push((pos.sample(rng), true));
    }
    for _ in 0..n_neg {
        out.push((neg.sample(rng), false));
    }
    out
}

/// Where test cases come from: fresh Gaussian draws scored by a classifier,
/// or per-class sampling without replacement from a finite labeled score
/// pool (restored between cases).
pub enum SuiteSource<'a> {
    Gaussian {
        design: GaussianDesign,
        model: &'a LogisticModel,
    },
    Pool(&'a LabeledPool),
}

/// Build the artificial-prevalence suite: `replicates` test sets at each of
/// the 101 prevalence levels, every case carrying its own derived seed. The
/// recorded prevalence is the realized positive fraction, which the
/// rounding rule makes exact.
pub fn app_suite(
    source: &SuiteSource,
    test_size: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<TestCase>> {
    if test_size < 1 || replicates < 1 {
        return Err(Error::InvalidParameter(
            "test_size and replicates must be >= 1".into(),
        ));
    }
    if let SuiteSource::Pool(pool) = source {
        // prevalence 1 needs test_size positives, prevalence 0 the same in
        // negatives
        if pool.n_pos() < test_size {
            return Err(Error::PoolExhausted {
                class: "positive",
                needed: test_size,
                available: pool.n_pos(),
            });
        }
        if pool.n_neg() < test_size {
            return Err(Error::PoolExhausted {
                class: "negative",
                needed: test_size,
                available: pool.n_neg(),
            });
        }
    }

    let mut cases = Vec::with_capacity(APP_PREVALENCE_LEVELS * replicates);
    let mut counter = 0u64;
    for level in 0..APP_PREVALENCE_LEVELS {
        // integer rounding keeps the count exact: round-half-up of
        // (level / 100) * test_size
        let n_pos = (level * test_size + 50) / 100;
        let n_neg = test_size - n_pos;
        for rep in 0..replicates {
            let case_seed = derive_seed(seed, counter);
            counter += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
            let scores = match source {
                SuiteSource::Gaussian { design, model } => {
                    let raw = gen_gaussian_counts(design, n_pos, n_neg, &mut rng);
                    raw.iter()
                        .map(|(x, _)| predict_proba(model, &[*x]))
                        .collect::<Result<Vec<_>>>()?
                }
                SuiteSource::Pool(pool) => {
                    let positives: Vec<f64> = pool.positive_scores().collect();
                    let negatives: Vec<f64> = pool.negative_scores().collect();
                    let mut scores = sample_without_replacement(&positives, n_pos, &mut rng);
                    scores.extend(sample_without_replacement(&negatives, n_neg, &mut rng));
                    scores
                }
            };
            cases.push(TestCase {
                test: UnlabeledPool::new(scores)?,
                true_prevalence: n_pos as f64 / test_size as f64,
                case_id: format!("n{test_size:05}_p{level:03}_r{rep:02}"),
                seed: case_seed,
            });
        }
    }
    Ok(cases)
}

/// Partial Fisher-Yates: the first `k` entries of a random permutation.
fn sample_without_replacement(items: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    debug_assert!(k <= items.len());
    let mut indices: Vec<usize> = (0..items.len()).collect();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
        out.push(items[indices[i]]);
    }
    out
}

/// A parsed score file.
#[derive(Debug, Clone, PartialEq)]
pub enum IngestedPool {
    Labeled(LabeledPool),
    Unlabeled(UnlabeledPool),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestSchema {
    pub has_labels: bool,
    /// Skip the first line.
    pub header: bool,
}

/// Read a comma-separated score file: one `score[,label]` record per line,
/// UTF-8, no header unless the schema says so. Row numbers in errors are
/// physical line numbers.
pub fn ingest_scores(path: &Path, schema: IngestSchema) -> Result<IngestedPool> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut samples = Vec::new();
    let mut scores = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let row = idx + 1;
        let line = line?;
        if row == 1 && schema.header {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let score_text = parts.next().unwrap_or("").trim();
        let score: f64 = score_text.parse().map_err(|_| Error::MalformedRow {
            row,
            line: line.clone(),
        })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRangeAt { row, score });
        }
        if schema.has_labels {
            let label_text = parts
                .next()
                .ok_or_else(|| Error::MalformedRow {
                    row,
                    line: line.clone(),
                })?
                .trim();
            let label = match label_text {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::LabelOutOfRangeAt {
                        row,
                        value: other.to_string(),
                    })
                }
            };
            samples.push(ScoredSample::labeled(score, label)?);
        } else {
            scores.push(score);
        }
        if parts.next().is_some() {
            return Err(Error::MalformedRow { row, line });
        }
    }
    if schema.has_labels {
        Ok(IngestedPool::Labeled(LabeledPool::new(samples)?))
    } else {
        Ok(IngestedPool::Unlabeled(UnlabeledPool::new(scores)?))
    }
}
