//! Closed-form learning-curve predictions: memorization error, per-rank
//! sample complexities, classification curves and asymptotes, next-token
//! complexities and scaling exponent, and the two-rule entropy estimate.

use serde::{Deserialize, Serialize};

use crate::dist::RuleDistribution;
use crate::error::{Result, RhmError};
use crate::params::{RhmParams, ZipfExponent};
use crate::series::{CurvePoint, CurveSeries, Provenance, ValueKind};

/// Riemann zeta for real `x > 1` by direct summation with an integral tail
/// correction; relative error well under 1e-10 for x >= 1.05.
pub fn zeta(x: f64) -> f64 {
    assert!(x > 1.0, "zeta requires x > 1");
    let n = 2000usize;
    let head: f64 = (1..=n).map(|k| (k as f64).powf(-x)).sum();
    let nf = n as f64;
    // Euler-Maclaurin tail: integral + half-term + first Bernoulli correction
    head + nf.powf(1.0 - x) / (x - 1.0) - 0.5 * nf.powf(-x) + x / 12.0 * nf.powf(-x - 1.0)
}

/// Memorization error `sum_k f_k (1 - f_k)^P` for a finite rule distribution;
/// `p` may be a real (continuous relaxation of the sample count).
pub fn hutter_error(dist: &RuleDistribution, p: f64) -> f64 {
    dist.weights()
        .iter()
        .map(|&f| {
            if f >= 1.0 {
                0.0
            } else {
                f * ((1.0 - f).ln() * p).exp()
            }
        })
        .sum()
}

/// Memorization error for an untruncated Zipf law `f_k ∝ k^-(1+a)`.
/// Heads are summed directly; the tail (where `P f_k` is negligible) is
/// integrated with the leading `(1 - f)^P` expansion terms.
pub fn hutter_error_infinite_zipf(a: f64, p: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(RhmError::InvalidParameter("zipf exponent must be positive".into()));
    }
    let z = zeta(1.0 + a);
    let amp = 1.0 / z;
    let kstar = (p.max(1.0) / z).powf(1.0 / (1.0 + a));
    let cut = ((64.0 * kstar) as usize).max(10_000);
    let mut head = 0.0;
    for k in 1..=cut {
        let f = amp * (k as f64).powf(-(1.0 + a));
        head += f * ((1.0 - f).ln() * p).exp();
    }
    // tail: integral of f(x) (1 - P f + P(P-1)/2 f^2), f(x) = amp x^-(1+a)
    let xc = cut as f64;
    let t1 = amp * xc.powf(-a) / a;
    let t2 = p * amp * amp * xc.powf(-(1.0 + 2.0 * a)) / (1.0 + 2.0 * a);
    let t3 = p * (p - 1.0) / 2.0 * amp.powi(3) * xc.powf(-(2.0 + 3.0 * a)) / (2.0 + 3.0 * a);
    let fb = amp * xc.powf(-(1.0 + a));
    Ok(head + t1 - t2 + t3 + 0.5 * fb * ((1.0 - fb).ln() * p).exp())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let lx = x.ln();
        let ly = y.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Classification,
    NextToken,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexityEntry {
    pub level: usize,
    pub rank: usize,
    pub threshold: f64,
}

/// Per-rank (and, for next-token, per-level) sample-complexity thresholds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleComplexitySet {
    pub task: Task,
    pub entries: Vec<ComplexityEntry>,
    /// Set when successive levels' thresholds interleave instead of forming
    /// separated steps.
    pub interleaved: bool,
}

fn bottom_distribution(p: &RhmParams) -> Result<RuleDistribution> {
    let kind = match (p.zipf_layer, p.zipf_exponent) {
        (Some(_), Some(e)) => crate::dist::DistKind::from_exponent(e),
        _ => crate::dist::DistKind::Uniform,
    };
    crate::dist::make_distribution(p.m, kind)
}

/// Classification thresholds: `P*_k = v m^(L-1) / f_k` for the Zipf layer
/// (any layer keeps the same form), or the single uniform threshold `v m^L`.
pub fn class_sample_complexities(p: &RhmParams) -> Result<SampleComplexitySet> {
    p.validate()?;
    let level = p.zipf_layer.unwrap_or(1);
    let base = p.v as f64 * (p.m as f64).powi(p.depth as i32 - 1);
    let entries = match p.zipf_layer {
        None => (1..=p.m)
            .map(|rank| ComplexityEntry {
                level: 1,
                rank,
                threshold: p.v as f64 * (p.m as f64).powi(p.depth as i32),
            })
            .collect(),
        Some(_) => {
            let dist = bottom_distribution(p)?;
            (1..=p.m)
                .map(|rank| {
                    let f = dist.weight(rank);
                    ComplexityEntry {
                        level,
                        rank,
                        threshold: if f > 0.0 { base / f } else { f64::INFINITY },
                    }
                })
                .collect()
        }
    };
    Ok(SampleComplexitySet { task: Task::Classification, entries, interleaved: false })
}

/// Eq.-style classification curve: `eps(P) = 1 - (sum of learnable rule
/// mass)^(number of patches resolvable at the Zipf layer)`.
pub fn class_learning_curve(p: &RhmParams, grid: &[f64]) -> Result<CurveSeries> {
    p.validate()?;
    let set = class_sample_complexities(p)?;
    let layer = p.zipf_layer.unwrap_or(1);
    let patches = (p.s as f64).powi((p.depth - layer) as i32);
    let dist = bottom_distribution(p)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut prev = f64::NEG_INFINITY;
    for &pp in grid {
        if pp <= prev {
            return Err(RhmError::InvalidParameter("grid must be strictly increasing".into()));
        }
        prev = pp;
        let mass: f64 = set
            .entries
            .iter()
            .filter(|e| e.threshold < pp)
            .map(|e| dist.weight(e.rank))
            .sum();
        points.push(CurvePoint {
            p: pp,
            value: (1.0 - mass.powf(patches)).clamp(0.0, 1.0),
            se: None,
        });
    }
    CurveSeries::new(
        format!("class-theory v{} m{} s{} L{}", p.v, p.m, p.s, p.depth),
        Provenance::Theory,
        ValueKind::ErrorRate,
        points,
    )
}

/// Large-`P` asymptote of the classification curve:
/// `s^(L-1) c (P / (v m^(L-1)))^(-a/(1+a))` with `c = 1/(a zeta(1+a))`.
pub fn class_asymptote(p: &RhmParams, pp: f64) -> Result<f64> {
    let a = match (p.zipf_layer, p.zipf_exponent) {
        (Some(_), Some(ZipfExponent::Finite(a))) if a > 0.0 => a,
        _ => {
            return Err(RhmError::InvalidParameter(
                "asymptote requires a finite zipf exponent".into(),
            ))
        }
    };
    let c = 1.0 / (a * zeta(1.0 + a));
    let scale = p.v as f64 * (p.m as f64).powi(p.depth as i32 - 1);
    Ok((p.s as f64).powi((p.depth - 1) as i32) * c * (pp / scale).powf(-a / (1.0 + a)))
}

/// Learnable rank at sample count `P`, in the asymptotic form
/// `k(P) = floor((P / (v m^(L-1)))^(1/(1+a)))`.
pub fn learnable_rank(p_rescaled: f64, a: f64) -> usize {
    p_rescaled.powf(1.0 / (1.0 + a)).floor() as usize
}

/// Total learnable rule mass `g(P) = sum_{k <= k(P)} f_k`.
pub fn learnable_mass(dist: &RuleDistribution, p_rescaled: f64, a: f64) -> f64 {
    let k = learnable_rank(p_rescaled, a).min(dist.len());
    (1..=k).map(|i| dist.weight(i)).sum()
}

/// Next-token thresholds. Level 1 entries are the memorization costs
/// `v/f_k`; levels `2..=L` follow
/// `P_{l,k} = v m^(2l-3) / ((1 - m/v^(s-1)) f_k sum f^2)`.
pub fn next_sample_complexities(p: &RhmParams) -> Result<SampleComplexitySet> {
    p.validate()?;
    let budget = (p.v as f64).powi(p.s as i32 - 1);
    let gap = 1.0 - p.m as f64 / budget;
    if gap <= 0.0 {
        return Err(RhmError::Divergent(
            "m = v^(s-1): the (1 - m/v^(s-1)) prefactor vanishes".into(),
        ));
    }
    let dist = bottom_distribution(p)?;
    let ipr = dist.participation_ratio();
    let mut entries = Vec::new();
    for rank in 1..=p.m {
        let f = dist.weight(rank);
        entries.push(ComplexityEntry {
            level: 1,
            rank,
            threshold: if f > 0.0 { p.v as f64 / f } else { f64::INFINITY },
        });
    }
    for level in 2..=p.depth {
        for rank in 1..=p.m {
            let f = dist.weight(rank);
            let threshold = if f > 0.0 {
                p.v as f64 * (p.m as f64).powi(2 * level as i32 - 3) / (gap * f * ipr)
            } else {
                f64::INFINITY
            };
            entries.push(ComplexityEntry { level, rank, threshold });
        }
    }
    // steps are separated when each level's easiest rule is harder than the
    // previous level's hardest
    let mut interleaved = false;
    for level in 2..=p.depth {
        let prev_max = entries
            .iter()
            .filter(|e| e.level == level - 1 && e.threshold.is_finite())
            .map(|e| e.threshold)
            .fold(0.0f64, f64::max);
        let cur_min = entries
            .iter()
            .filter(|e| e.level == level)
            .map(|e| e.threshold)
            .fold(f64::INFINITY, f64::min);
        if cur_min <= prev_max {
            interleaved = true;
        }
    }
    Ok(SampleComplexitySet { task: Task::NextToken, entries, interleaved })
}

/// Exponent of the next-token scaling law: `log(m / v^(s-1)) / (2 log m)`.
pub fn next_scaling_exponent(p: &RhmParams) -> Result<f64> {
    let budget = (p.v as f64).powi(p.s as i32 - 1);
    if p.m <= 1 || (p.m as f64) >= budget {
        return Err(RhmError::InvalidParameter(
            "exponent requires 1 < m < v^(s-1)".into(),
        ));
    }
    Ok((p.m as f64 / budget).ln() / (2.0 * (p.m as f64).ln()))
}

/// Average two-rule entropic contribution: the generating rule is drawn with
/// probability `f_k1`, the competitor uniformly among the others, and each
/// pair contributes the binary entropy of its normalization.
pub fn h2_average(dist: &RuleDistribution) -> Result<f64> {
    let positive = dist.weights().iter().filter(|&&f| f > 0.0).count();
    if dist.len() < 2 || positive < 2 {
        return Err(RhmError::InvalidParameter(
            "two-rule entropy needs at least two rules with positive mass".into(),
        ));
    }
    let m = dist.len();
    let mut h = 0.0;
    for k1 in 1..=m {
        let f1 = dist.weight(k1);
        if f1 == 0.0 {
            continue;
        }
        for k2 in 1..=m {
            if k2 == k1 {
                continue;
            }
            let f2 = dist.weight(k2);
            let q = f1 / (f1 + f2);
            let pair = if f2 == 0.0 {
                0.0
            } else {
                -(q * q.ln() + (1.0 - q) * (1.0 - q).ln())
            };
            h += f1 / (m as f64 - 1.0) * pair;
        }
    }
    Ok(h)
}

/// Limit estimate of the window cross-entropy,
/// `H * [ x/(1-x) + v x^l ]` with `x = m/v^(s-1)`. The bool flags parameter
/// ranges outside the dilute regime the estimate assumes.
pub fn ce_limit(p: &RhmParams, ell: usize, h: f64) -> Result<(f64, bool)> {
    p.validate()?;
    let budget = (p.v as f64).powi(p.s as i32 - 1);
    let x = p.m as f64 / budget;
    if x >= 1.0 {
        return Err(RhmError::Divergent("m = v^(s-1) has no dilute limit".into()));
    }
    let value = h * (x / (1.0 - x) + p.v as f64 * x.powi(ell as i32));
    let regime_ok = p.m >= 4 && (p.m as f64) <= budget / 4.0;
    Ok((value, !regime_ok))
}
