//! Monte Carlo averages over independent grammar realizations. Each
//! realization gets a derived seed; per-realization work uses the exact
//! oracles, and reductions run in a fixed order so results are
//! bit-reproducible and independent of worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};
use crate::grammar::{build_grammar, GrammarInstance};
use crate::oracle::correlation::{class_correlation_table, token_correlation_table};
use crate::oracle::marginal::level_marginal;
use crate::oracle::spine::{entropy_ladder, mean_compat_size};
use crate::params::RhmParams;

/// Seed for realization `i` of a sweep, spread by a fixed odd stride.
pub fn realization_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McStats {
    pub mean: f64,
    pub var: f64,
    pub se: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Result<McStats> {
    let n = values.len();
    if n < 2 {
        return Err(RhmError::InvalidParameter(
            "need at least 2 realizations".into(),
        ));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(McStats { mean, var, se: (var / n as f64).sqrt(), n })
}

fn sweep<T, F>(params: &RhmParams, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&GrammarInstance) -> Result<T> + Sync,
{
    params.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let p = params.with_seed(realization_seed(params.seed, i));
            let g = build_grammar(&p)?;
            f(&g)
        })
        .collect()
}

/// The quantities exposed through the sweep front-end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum McQuantity {
    /// Ensemble variance of one token-tuple correlation entry at the given
    /// lowest-common-ancestor level and rule rank.
    TokenCorrVariance { ell: usize, rank: usize },
    /// Ensemble variance of one label-tuple correlation entry.
    ClassCorrVariance,
    /// Exact per-instance mean compatibility-set size.
    AvgCompatSize { ell: usize },
    /// Window cross-entropy at one level.
    CrossEntropy { ell: usize },
}

/// `C_j(mu, nu)^2` for a canonical index: block 0, the rank-`rank` tuple of
/// the lexicographically first parent, last token 0. One value per
/// realization is the faithful estimator of the ensemble variance at a
/// fixed index.
fn token_corr_sq(g: &GrammarInstance, ell: usize, rank: usize) -> Result<f64> {
    let j = block_with_lca(g, ell)?;
    let table = token_correlation_table(g, j)?;
    let code = g.rhs_code(1, 0, rank);
    Ok(table.value(0, code).powi(2))
}

/// First block index whose lowest common ancestor with the last token sits
/// at `ell`.
pub fn block_with_lca(g: &GrammarInstance, ell: usize) -> Result<usize> {
    let blocks = g.s().pow((g.depth() - 1) as u32);
    for j in 0..blocks.saturating_sub(1) {
        if crate::oracle::correlation::lca_level(g, j)? == ell {
            return Ok(j);
        }
    }
    Err(RhmError::InvalidParameter(format!(
        "no block has a level-{ell} lowest common ancestor at depth {}",
        g.depth()
    )))
}

fn class_corr_sq(g: &GrammarInstance) -> Result<f64> {
    let table = class_correlation_table(g, 0)?;
    let code = g.rhs_code(1, 0, 1);
    Ok(table.value(0, code).powi(2))
}

pub fn mc_realization_stats(
    params: &RhmParams,
    quantity: McQuantity,
    n: usize,
) -> Result<McStats> {
    let values = match quantity {
        McQuantity::TokenCorrVariance { ell, rank } => {
            sweep(params, n, |g| token_corr_sq(g, ell, rank))?
        }
        McQuantity::ClassCorrVariance => sweep(params, n, class_corr_sq)?,
        McQuantity::AvgCompatSize { ell } => sweep(params, n, |g| mean_compat_size(g, ell))?,
        McQuantity::CrossEntropy { ell } => {
            sweep(params, n, |g| crate::oracle::spine::window_cross_entropy(g, ell))?
        }
    };
    summarize(&values)
}

/// Ladder of cross-entropies averaged over realizations; one `McStats`
/// per level `0..=depth`.
pub fn mc_entropy_ladder(params: &RhmParams, n: usize) -> Result<Vec<McStats>> {
    let ladders = sweep(params, n, |g| entropy_ladder(g).map(|l| l.values))?;
    (0..=params.depth)
        .map(|ell| summarize(&ladders.iter().map(|l| l[ell]).collect::<Vec<_>>()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub ratio: f64,
    pub se: f64,
    pub n: usize,
}

/// Ratio of ensemble means with a delta-method standard error accounting for
/// the within-realization coupling of numerator and denominator.
pub fn ratio_of_means(pairs: &[(f64, f64)]) -> Result<RatioStats> {
    let n = pairs.len();
    if n < 2 {
        return Err(RhmError::InvalidParameter("need at least 2 realizations".into()));
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut cxy = 0.0;
    for &(x, y) in pairs {
        vx += (x - mx).powi(2);
        vy += (y - my).powi(2);
        cxy += (x - mx) * (y - my);
    }
    vx /= nf - 1.0;
    vy /= nf - 1.0;
    cxy /= nf - 1.0;
    let ratio = mx / my;
    let var = ratio * ratio * (vx / (mx * mx) + vy / (my * my) - 2.0 * cxy / (mx * my)) / nf;
    Ok(RatioStats { ratio, se: var.max(0.0).sqrt(), n })
}

/// Per-realization pair for the variance-recursion check at a level-`ell`
/// lowest common ancestor: numerator averages `C^2` over the rank-`rank`
/// tuples of every parent and every last-token value; the denominator is the
/// matching symbol-symbol `C'^2` average on the bottom-collapsed grammar.
pub fn corr_recursion_pair(g: &GrammarInstance, ell: usize, rank: usize) -> Result<(f64, f64)> {
    let v = g.v();
    let j = block_with_lca(g, ell)?;
    let table = token_correlation_table(g, j)?;
    let mut num = 0.0;
    for parent in 0..v {
        let code = g.rhs_code(1, parent as u16, rank);
        for nu in 0..v {
            num += table.value(nu as u16, code).powi(2);
        }
    }
    num /= (v * v) as f64;

    // collapsed grammar: symbol-symbol correlation between the block's
    // level-1 node (a collapsed token at position j) and the last collapsed
    // token, whose lowest common ancestor now sits one level lower
    let sub = g.collapse_bottom()?;
    let d_sub = sub.params().d();
    let marg_a = level_marginal(&sub, 0, j)?;
    let marg_b = level_marginal(&sub, 0, d_sub - 1)?;
    let joint = pair_joint(&sub, j, d_sub - 1)?;
    let mut den = 0.0;
    for a in 0..v {
        for b in 0..v {
            den += (joint[a][b] - marg_a[a] * marg_b[b]).powi(2);
        }
    }
    den /= (v * v) as f64;
    Ok((num, den))
}

/// Unconditional joint law of the symbols at two level-0 positions, by
/// descending both branches from their lowest common ancestor.
fn pair_joint(g: &GrammarInstance, pos_a: usize, pos_b: usize) -> Result<Vec<Vec<f64>>> {
    use crate::oracle::marginal::{apply_matrix, child_matrix};
    let v = g.v();
    let s = g.s();
    let depth = g.depth();
    if pos_a == pos_b {
        return Err(RhmError::InvalidParameter("positions must differ".into()));
    }
    // lowest common ancestor of the two leaves
    let mut la = pos_a;
    let mut lb = pos_b;
    let mut lca = 0;
    for t in 1..=depth {
        la /= s;
        lb /= s;
        if la == lb {
            lca = t;
            break;
        }
    }
    let q = level_marginal(g, lca, pos_a / s.pow(lca as u32))?;
    // offsets of the two branches at the LCA expansion
    let off_a = (pos_a / s.pow((lca - 1) as u32)) % s;
    let off_b = (pos_b / s.pow((lca - 1) as u32)) % s;
    // descent matrices below the LCA
    let descend = |mut pos: usize, from_level: usize| -> Vec<Vec<f64>> {
        let mut mat: Vec<Vec<f64>> = (0..v)
            .map(|c| {
                let mut e = vec![0.0; v];
                e[c] = 1.0;
                e
            })
            .collect();
        let mut offs = Vec::new();
        for _ in 0..from_level {
            offs.push(pos % s);
            pos /= s;
        }
        offs.reverse();
        for (i, &off) in offs.iter().enumerate() {
            let lev = from_level - i;
            let m = child_matrix(g, lev, off);
            for row in mat.iter_mut() {
                *row = apply_matrix(row, &m);
            }
        }
        mat
    };
    let da = descend(pos_a % s.pow((lca - 1) as u32), lca - 1);
    let db = descend(pos_b % s.pow((lca - 1) as u32), lca - 1);
    let dist = g.distribution(lca);
    let mut joint = vec![vec![0.0; v]; v];
    for alpha in 0..v {
        if q[alpha] == 0.0 {
            continue;
        }
        for k in 1..=g.m() {
            let w = q[alpha] * dist.weight(k);
            if w == 0.0 {
                continue;
            }
            let rhs = g.rhs(lca, alpha as u16, k);
            let ca = rhs[off_a] as usize;
            let cb = rhs[off_b] as usize;
            for a in 0..v {
                if da[ca][a] == 0.0 {
                    continue;
                }
                for b in 0..v {
                    joint[a][b] += w * da[ca][a] * db[cb][b];
                }
            }
        }
    }
    Ok(joint)
}


/// Sweep the recursion pair over realizations.
pub fn mc_corr_recursion(
    params: &RhmParams,
    ell: usize,
    rank: usize,
    n: usize,
) -> Result<RatioStats> {
    let pairs = sweep(params, n, |g| corr_recursion_pair(g, ell, rank))?;
    ratio_of_means(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn se_shrinks_with_n() {
        let params = RhmParams::uniform(8, 4, 2, 2, 42);
        let a = mc_realization_stats(&params, McQuantity::ClassCorrVariance, 64).unwrap();
        let b = mc_realization_stats(&params, McQuantity::ClassCorrVariance, 256).unwrap();
        // SE should shrink roughly as n^(-1/2): ratio near 2 for 4x the data
        let ratio = a.se / b.se;
        assert!(ratio > 1.3 && ratio < 3.0, "se ratio {ratio}");
    }

    #[test]
    fn n_must_be_at_least_two() {
        let params = RhmParams::uniform(4, 2, 2, 2, 0);
        assert!(mc_realization_stats(&params, McQuantity::ClassCorrVariance, 1).is_err());
    }

    #[test]
    fn sweeps_are_deterministic() {
        let params = RhmParams::zipf(8, 4, 2, 2, 1.0, 7);
        let a = mc_realization_stats(&params, McQuantity::AvgCompatSize { ell: 2 }, 16).unwrap();
        let b = mc_realization_stats(&params, McQuantity::AvgCompatSize { ell: 2 }, 16).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn class_corr_variance_saturated_exact() {
        // saturated uniform case (m = v^{s-1}): the ensemble variance of one
        // correlation entry is (1-1/v) (v^s - m)/(v^s - 1) / (v^3 m^3); the
        // hypergeometric count variance is exact for the without-replacement
        // rule draw. 3-sigma band with n = 400.
        let v = 8usize;
        let m = 8usize;
        let params = RhmParams::uniform(v, m, 2, 2, 2024);
        let stats = mc_realization_stats(&params, McQuantity::ClassCorrVariance, 400).unwrap();
        let exact = (1.0 - 1.0 / v as f64) * ((v * v - m) as f64 / (v * v - 1) as f64)
            / ((v as f64).powi(3) * (m as f64).powi(3));
        assert!(
            (stats.mean - exact).abs() < 3.0 * stats.se,
            "mean {} exact {exact} se {}",
            stats.mean,
            stats.se
        );
        // the scaling form (v^3 m^(L+1))^-1 holds up to an O(1) prefactor
        let scaling = 1.0 / ((v as f64).powi(3) * (m as f64).powi(3));
        assert!(stats.mean > 0.4 * scaling && stats.mean < 1.6 * scaling);
    }
}
