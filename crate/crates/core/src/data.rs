//! Score pools: the labeled validation data quantifiers are trained on and
//! the unlabeled test data whose prevalence is estimated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One classifier output, optionally paired with the true binary class.
/// Test samples carry no label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    score: f64,
    label: Option<bool>,
}

impl ScoredSample {
    pub fn new(score: f64, label: Option<bool>) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange(score));
        }
        Ok(Self { score, label })
    }

    pub fn labeled(score: f64, positive: bool) -> Result<Self> {
        Self::new(score, Some(positive))
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn label(&self) -> Option<bool> {
        self.label
    }
}

/// Ordered collection of labeled scores with cached class counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPool {
    samples: Vec<ScoredSample>,
    n_pos: usize,
    n_neg: usize,
}

impl LabeledPool {
    /// Every sample must carry a label. Single-class pools are allowed here;
    /// quantifiers that need both classes check [`LabeledPool::require_two_class`].
    pub fn new(samples: Vec<ScoredSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyPool);
        }
        let mut n_pos = 0;
        let mut n_neg = 0;
        for s in &samples {
            match s.label() {
                Some(true) => n_pos += 1,
                Some(false) => n_neg += 1,
                None => return Err(Error::MissingLabel),
            }
        }
        Ok(Self {
            samples,
            n_pos,
            n_neg,
        })
    }

    /// Build from parallel score/label slices.
    pub fn from_scores_labels(scores: &[f64], labels: &[bool]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                got: labels.len(),
            });
        }
        let samples = scores
            .iter()
            .zip(labels)
            .map(|(&s, &l)| ScoredSample::labeled(s, l))
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    pub fn samples(&self) -> &[ScoredSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_neg(&self) -> usize {
        self.n_neg
    }

    /// Empirical positive-class prevalence.
    pub fn prevalence(&self) -> f64 {
        self.n_pos as f64 / self.samples.len() as f64
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.score())
    }

    pub fn positive_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples
            .iter()
            .filter(|s| s.label() == Some(true))
            .map(|s| s.score())
    }

    pub fn negative_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples
            .iter()
            .filter(|s| s.label() == Some(false))
            .map(|s| s.score())
    }

    /// Quantifier-fitting precondition: at least one sample of each class.
    pub fn require_two_class(&self) -> Result<()> {
        if self.n_pos == 0 || self.n_neg == 0 {
            return Err(Error::DegenerateLabels);
        }
        Ok(())
    }

    /// Apply a score transform (e.g. a calibration map) to every sample.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| ScoredSample::new(f(s.score()), s.label()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }
}

/// Ordered collection of unlabeled test scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledPool {
    scores: Vec<f64>,
}

impl UnlabeledPool {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyPool);
        }
        for &s in &scores {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::ScoreOutOfRange(s));
            }
        }
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}
