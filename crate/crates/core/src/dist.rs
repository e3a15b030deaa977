use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};
use crate::params::ZipfExponent;

pub const NORM_TOL: f64 = 1e-12;

/// Shape of a per-level rule distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DistKind {
    Uniform,
    Zipf { a: f64 },
    /// All mass on rank 1 (the `a -> infinity` limit).
    Delta,
}

impl DistKind {
    pub fn from_exponent(e: ZipfExponent) -> Self {
        match e {
            ZipfExponent::Finite(a) => DistKind::Zipf { a },
            ZipfExponent::Infinity => DistKind::Delta,
        }
    }
}

/// Rank-sorted rule probabilities `f_1 >= f_2 >= ... >= f_m`, kept in both
/// linear and log space (rule products underflow for deep grammars).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleDistribution {
    kind: DistKind,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

/// `f_k = k^-(1+a) / sum_j j^-(1+a)`, `k = 1..=m`; uniform and delta are the
/// `a -> 0+`-like and `a -> infinity` ends handled exactly.
pub fn make_distribution(m: usize, kind: DistKind) -> Result<RuleDistribution> {
    if m == 0 {
        return Err(RhmError::InvalidParameter("m must be >= 1".into()));
    }
    let weights: Vec<f64> = match kind {
        DistKind::Uniform => vec![1.0 / m as f64; m],
        DistKind::Zipf { a } => {
            if !(a > 0.0) {
                return Err(RhmError::InvalidParameter(format!(
                    "zipf exponent must be positive, got {a}"
                )));
            }
            let raw: Vec<f64> = (1..=m).map(|k| (k as f64).powf(-(1.0 + a))).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / z).collect()
        }
        DistKind::Delta => {
            let mut w = vec![0.0; m];
            w[0] = 1.0;
            w
        }
    };
    RuleDistribution::from_weights(kind, weights)
}

impl RuleDistribution {
    pub fn from_weights(kind: DistKind, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(RhmError::InvalidParameter(format!(
                "weights sum to {total}, expected 1 within {NORM_TOL}"
            )));
        }
        if weights.windows(2).any(|w| w[1] > w[0] + NORM_TOL) {
            return Err(RhmError::InvalidParameter(
                "weights must be non-increasing in rank".into(),
            ));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(RhmError::InvalidParameter("negative weight".into()));
        }
        let log_weights = weights.iter().map(|&w| w.ln()).collect();
        Ok(Self { kind, weights, log_weights })
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Probability of rank `k` (1-based).
    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k - 1]
    }

    pub fn log_weight(&self, k: usize) -> f64 {
        self.log_weights[k - 1]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Inverse participation ratio `sum_k f_k^2`, in `[1/m, 1]`.
    pub fn participation_ratio(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// Shannon entropy in nats (0 log 0 = 0).
    pub fn entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| w * w.ln())
            .sum::<f64>()
    }

    /// Draw a rank (1-based) by inverse-cdf walk; deterministic given the rng.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i + 1;
            }
        }
        self.weights.len()
    }
}
