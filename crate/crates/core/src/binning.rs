//! Equal-frequency binning of validation scores and assignment of test
//! scores to the fitted bins.

use serde::{Deserialize, Serialize};

use crate::data::{LabeledPool, UnlabeledPool};
use crate::error::{Error, Result};

/// Default bin count used by the Bayesian quantifier and HDy.
pub const DEFAULT_N_BINS: usize = 4;

/// Equal-frequency bins over the pooled validation scores, with per-bin
/// class counts. `edges` has `n_bins - 1` thresholds; assignment is
/// left-closed/right-open with the outer bins absorbing everything beyond
/// the observed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinModel {
    edges: Vec<f64>,
    n_bins: usize,
    v_pos: Vec<u64>,
    v_neg: Vec<u64>,
}

impl BinModel {
    /// Assemble a model from precomputed parts (useful when bin counts come
    /// from elsewhere than [`fit_bins`]).
    pub fn from_parts(edges: Vec<f64>, v_pos: Vec<u64>, v_neg: Vec<u64>) -> Result<Self> {
        let n_bins = v_pos.len();
        if n_bins == 0 || v_neg.len() != n_bins || edges.len() + 1 != n_bins {
            return Err(Error::InvalidParameter(
                "bin counts and edges have inconsistent lengths".into(),
            ));
        }
        if edges.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("edges must be ascending".into()));
        }
        if v_pos.iter().sum::<u64>() == 0 || v_neg.iter().sum::<u64>() == 0 {
            return Err(Error::DegenerateLabels);
        }
        Ok(Self {
            edges,
            n_bins,
            v_pos,
            v_neg,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Per-bin counts of positive validation samples.
    pub fn v_pos(&self) -> &[u64] {
        &self.v_pos
    }

    /// Per-bin counts of negative validation samples.
    pub fn v_neg(&self) -> &[u64] {
        &self.v_neg
    }

    pub fn n_val_pos(&self) -> u64 {
        self.v_pos.iter().sum()
    }

    pub fn n_val_neg(&self) -> u64 {
        self.v_neg.iter().sum()
    }
}

/// Per-bin test counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedTest {
    t: Vec<u64>,
    n_t: u64,
}

impl BinnedTest {
    pub fn from_counts(t: Vec<u64>) -> Result<Self> {
        if t.is_empty() {
            return Err(Error::EmptyPool);
        }
        let n_t = t.iter().sum();
        Ok(Self { t, n_t })
    }

    pub fn counts(&self) -> &[u64] {
        &self.t
    }

    pub fn n_t(&self) -> u64 {
        self.n_t
    }
}

/// Sort the pooled validation samples by score and cut them into `n_bins`
/// rank ranges of (near-)equal size; bin k covers sort ranks
/// [k*n/n_bins, (k+1)*n/n_bins). Edge k is the score of the first sample of
/// bin k+1, so duplicate scores can produce repeated edges (assignment stays
/// deterministic via the half-open rule).
pub fn fit_bins(pool: &LabeledPool, n_bins: usize) -> Result<BinModel> {
    let n = pool.len();
    if n_bins < 1 || n_bins > n {
        return Err(Error::InvalidBinCount {
            n_bins,
            pool_size: n,
        });
    }
    pool.require_two_class()?;

    let mut sorted: Vec<(f64, bool)> = pool
        .samples()
        .iter()
        .map(|s| (s.score(), s.label() == Some(true)))
        .collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("non-finite score"));

    let boundary = |k: usize| k * n / n_bins;
    let mut edges = Vec::with_capacity(n_bins - 1);
    let mut v_pos = vec![0u64; n_bins];
    let mut v_neg = vec![0u64; n_bins];
    for k in 0..n_bins {
        let (start, end) = (boundary(k), boundary(k + 1));
        if k > 0 {
            edges.push(sorted[start].0);
        }
        for &(_, positive) in &sorted[start..end] {
            if positive {
                v_pos[k] += 1;
            } else {
                v_neg[k] += 1;
            }
        }
    }

    Ok(BinModel {
        edges,
        n_bins,
        v_pos,
        v_neg,
    })
}

/// Bin index for a score: the number of edges at or below it, i.e. bin k
/// covers [edges[k-1], edges[k]) with edges[-1] = -inf and the last bin open
/// above.
pub fn assign_bin(model: &BinModel, score: f64) -> usize {
    model.edges.partition_point(|&e| e <= score)
}

/// Count test scores per bin.
pub fn bin_test(model: &BinModel, test: &UnlabeledPool) -> BinnedTest {
    let mut t = vec![0u64; model.n_bins];
    for &s in test.scores() {
        t[assign_bin(model, s)] += 1;
    }
    BinnedTest {
        t,
        n_t: test.len() as u64,
    }
}
