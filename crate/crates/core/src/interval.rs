//! Central intervals over prevalence draws and the estimate type every
//! quantifier returns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Central interval with its nominal probability content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    low: f64,
    high: f64,
    mass: f64,
}

impl Interval {
    pub fn new(low: f64, high: f64, mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass < 1.0) {
            return Err(Error::InvalidMass(mass));
        }
        if !(0.0 <= low && low <= high && high <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "interval bounds [{low}, {high}] invalid"
            )));
        }
        Ok(Self { low, high, mass })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn length(&self) -> f64 {
        self.high - self.low
    }

    /// Closed-endpoint containment.
    pub fn contains(&self, value: f64) -> bool {
        self.low <= value && value <= self.high
    }
}

/// Identifier for the quantification methods shipped with this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cc,
    Acc,
    Pcc,
    Pacc,
    Hdy,
    Emq,
    BayesianCc,
    Pq,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Cc,
        Method::Acc,
        Method::Pcc,
        Method::Pacc,
        Method::Hdy,
        Method::Emq,
        Method::BayesianCc,
        Method::Pq,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cc => "cc",
            Method::Acc => "acc",
            Method::Pcc => "pcc",
            Method::Pacc => "pacc",
            Method::Hdy => "hdy",
            Method::Emq => "emq",
            Method::BayesianCc => "bayesian-cc",
            Method::Pq => "pq",
        }
    }

    /// Bayesian methods produce prediction intervals from posterior draws;
    /// the rest get bootstrap confidence intervals.
    pub fn is_bayesian(&self) -> bool {
        matches!(self, Method::BayesianCc | Method::Pq)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cc" => Ok(Method::Cc),
            "acc" => Ok(Method::Acc),
            "pcc" => Ok(Method::Pcc),
            "pacc" => Ok(Method::Pacc),
            "hdy" => Ok(Method::Hdy),
            "emq" => Ok(Method::Emq),
            "bayesian-cc" | "bayesiancc" => Ok(Method::BayesianCc),
            "pq" => Ok(Method::Pq),
            _ => Err(Error::InvalidParameter(format!("unknown method {s:?}"))),
        }
    }
}

/// Point estimate plus central interval. For Bayesian methods the posterior
/// prevalence draws are kept alongside; the point is their mean and the
/// interval their central quantiles, so `low <= point <= high` is not
/// guaranteed in general.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithInterval {
    pub point: f64,
    pub interval: Interval,
    pub method: Method,
    pub draws: Option<Vec<f64>>,
}

impl EstimateWithInterval {
    pub fn from_point(point: f64, interval: Interval, method: Method) -> Self {
        Self {
            point,
            interval,
            method,
            draws: None,
        }
    }

    /// Point = arithmetic mean of the draws, interval = their central
    /// quantiles at `mass`.
    pub fn from_draws(draws: Vec<f64>, mass: f64, method: Method) -> Result<Self> {
        let interval = central_interval(&draws, mass)?;
        let point = draws.iter().sum::<f64>() / draws.len() as f64;
        Ok(Self {
            point,
            interval,
            method,
            draws: Some(draws),
        })
    }
}

/// Empirical central interval containing `mass` probability: quantiles at
/// (1-mass)/2 and (1+mass)/2 with linear interpolation between order
/// statistics, clipped to [0, 1].
pub fn central_interval(draws: &[f64], mass: f64) -> Result<Interval> {
    if draws.is_empty() {
        return Err(Error::NoDraws);
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::InvalidMass(mass));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite draw"));
    let low = quantile_sorted(&sorted, (1.0 - mass) / 2.0).clamp(0.0, 1.0);
    let high = quantile_sorted(&sorted, (1.0 + mass) / 2.0).clamp(0.0, 1.0);
    Interval::new(low, high.max(low), mass)
}

/// Linear-interpolation quantile of pre-sorted data (the common "type 7"
/// convention): h = (n-1)q, result interpolates between the floor(h)-th and
/// next order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}
