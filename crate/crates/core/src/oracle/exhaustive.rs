//! Brute-force reference oracles by full enumeration of the derivation
//! ensemble. Independent of the dynamic-programming oracles: everything here
//! is a plain weighted count over all derivations.

use std::collections::HashMap;

use crate::error::{Result, RhmError};
use crate::grammar::{encode_tuple, GrammarInstance, Symbol};
use crate::sample::Derivation;

pub const DEFAULT_ENUM_BUDGET: u128 = 1 << 22;

/// Number of derivations `v * m^((s^L - 1)/(s - 1))`.
pub fn derivation_count(g: &GrammarInstance) -> u128 {
    let nodes = ((g.s().pow(g.depth() as u32) - 1) / (g.s() - 1)) as u32;
    (g.v() as u128) * (g.m() as u128).pow(nodes)
}

/// Every derivation with its exact probability (zero-probability rule
/// choices under a delta distribution are skipped).
pub fn enumerate_derivations(g: &GrammarInstance) -> Result<Vec<(Derivation, f64)>> {
    let count = derivation_count(g);
    if count > DEFAULT_ENUM_BUDGET {
        return Err(RhmError::BudgetExceeded { required: count, budget: DEFAULT_ENUM_BUDGET });
    }
    let depth = g.depth();
    let mut out = Vec::new();
    for label in 0..g.v() as Symbol {
        // frontier of partial derivations, expanded level by level
        let mut frontier: Vec<(Vec<Vec<Symbol>>, Vec<Vec<u16>>, f64)> =
            vec![(vec![vec![label]], Vec::new(), 1.0 / g.v() as f64)];
        for level in (1..=depth).rev() {
            let dist = g.distribution(level);
            let mut next = Vec::new();
            for (nodes, ranks, prob) in frontier {
                let parents = nodes.last().unwrap().clone();
                // all rank assignments for this level's parents
                let mut combos: Vec<(Vec<Symbol>, Vec<u16>, f64)> =
                    vec![(Vec::new(), Vec::new(), prob)];
                for &p in &parents {
                    let mut grown = Vec::with_capacity(combos.len() * g.m());
                    for (children, ks, pr) in &combos {
                        for k in 1..=g.m() {
                            let w = dist.weight(k);
                            if w == 0.0 {
                                continue;
                            }
                            let mut c2 = children.clone();
                            c2.extend_from_slice(&g.rhs(level, p, k));
                            let mut k2 = ks.clone();
                            k2.push(k as u16);
                            grown.push((c2, k2, pr * w));
                        }
                    }
                    combos = grown;
                }
                for (children, ks, pr) in combos {
                    let mut nodes2 = nodes.clone();
                    nodes2.push(children);
                    let mut ranks2 = ranks.clone();
                    ranks2.push(ks);
                    next.push((nodes2, ranks2, pr));
                }
            }
            frontier = next;
        }
        for (mut nodes, mut ranks, prob) in frontier {
            nodes.reverse(); // level 0 first
            ranks.reverse();
            out.push((Derivation { nodes, ranks }, prob));
        }
    }
    Ok(out)
}

/// Joint law of the token sequence: `tokens -> (label, P(label, tokens))`.
/// Unambiguity makes the map injective on parseable sequences.
pub fn sequence_law(g: &GrammarInstance) -> Result<HashMap<Vec<Symbol>, (Symbol, f64)>> {
    let mut law = HashMap::new();
    for (der, p) in enumerate_derivations(g)? {
        let entry = law
            .entry(der.tokens().to_vec())
            .or_insert((der.label(), 0.0));
        debug_assert_eq!(entry.0, der.label(), "unambiguity violated");
        entry.1 += p;
    }
    Ok(law)
}

/// Marginal of the symbol at `(level, pos)` by enumeration.
pub fn marginal(g: &GrammarInstance, level: usize, pos: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; g.v()];
    for (der, p) in enumerate_derivations(g)? {
        out[der.nodes[level][pos] as usize] += p;
    }
    Ok(out)
}

/// Centered label-tuple joint `P(y, block j = mu) - P(y) P(mu)`.
pub fn class_correlation(g: &GrammarInstance, j: usize) -> Result<Vec<Vec<f64>>> {
    let v = g.v();
    let s = g.s();
    let space = g.params().tuple_space();
    let mut joint = vec![vec![0.0; space]; v];
    let mut tuple_marg = vec![0.0; space];
    for (der, p) in enumerate_derivations(g)? {
        let code = encode_tuple(v, &der.tokens()[j * s..(j + 1) * s]);
        joint[der.label() as usize][code] += p;
        tuple_marg[code] += p;
    }
    for y in 0..v {
        for code in 0..space {
            joint[y][code] -= tuple_marg[code] / v as f64;
        }
    }
    Ok(joint)
}

/// Centered token-tuple joint `P(block j = mu, X_d = nu) - P(mu) P(nu)`,
/// rows indexed by `nu`.
pub fn token_correlation(g: &GrammarInstance, j: usize) -> Result<Vec<Vec<f64>>> {
    let v = g.v();
    let s = g.s();
    let d = g.params().d();
    let space = g.params().tuple_space();
    let mut joint = vec![vec![0.0; space]; v];
    let mut tuple_marg = vec![0.0; space];
    let mut last_marg = vec![0.0; v];
    for (der, p) in enumerate_derivations(g)? {
        let code = encode_tuple(v, &der.tokens()[j * s..(j + 1) * s]);
        let nu = der.tokens()[d - 1] as usize;
        joint[nu][code] += p;
        tuple_marg[code] += p;
        last_marg[nu] += p;
    }
    for nu in 0..v {
        for code in 0..space {
            joint[nu][code] -= last_marg[nu] * tuple_marg[code];
        }
    }
    Ok(joint)
}

/// `P(X_d | last s^l - 1 tokens)` by enumeration; `None` when the context
/// has zero probability.
pub fn window_conditional(
    g: &GrammarInstance,
    ell: usize,
    context: &[Symbol],
) -> Result<Option<Vec<f64>>> {
    let d = g.params().d();
    let w = g.s().pow(ell as u32);
    let mut num = vec![0.0; g.v()];
    let mut den = 0.0;
    for (der, p) in enumerate_derivations(g)? {
        let toks = der.tokens();
        if &toks[d - w..d - 1] == context {
            num[toks[d - 1] as usize] += p;
            den += p;
        }
    }
    if den == 0.0 {
        return Ok(None);
    }
    for x in num.iter_mut() {
        *x /= den;
    }
    Ok(Some(num))
}

/// Conditionals for every realized context at once (one enumeration pass).
pub fn window_conditionals_all(
    g: &GrammarInstance,
    ell: usize,
) -> Result<HashMap<Vec<Symbol>, Vec<f64>>> {
    let d = g.params().d();
    let w = g.s().pow(ell as u32);
    let mut acc: HashMap<Vec<Symbol>, Vec<f64>> = HashMap::new();
    for (der, p) in enumerate_derivations(g)? {
        let toks = der.tokens();
        let row = acc
            .entry(toks[d - w..d - 1].to_vec())
            .or_insert_with(|| vec![0.0; g.v()]);
        row[toks[d - 1] as usize] += p;
    }
    for row in acc.values_mut() {
        let den: f64 = row.iter().sum();
        for x in row.iter_mut() {
            *x /= den;
        }
    }
    Ok(acc)
}

/// `H(X_d | last s^l - 1 tokens)` by enumeration: joint window entropy minus
/// context entropy.
pub fn window_cross_entropy(g: &GrammarInstance, ell: usize) -> Result<f64> {
    if ell == 0 {
        return Ok((g.v() as f64).ln());
    }
    let d = g.params().d();
    let w = g.s().pow(ell as u32);
    let mut full: HashMap<Vec<Symbol>, f64> = HashMap::new();
    let mut ctx: HashMap<Vec<Symbol>, f64> = HashMap::new();
    for (der, p) in enumerate_derivations(g)? {
        let toks = der.tokens();
        *full.entry(toks[d - w..].to_vec()).or_insert(0.0) += p;
        *ctx.entry(toks[d - w..d - 1].to_vec()).or_insert(0.0) += p;
    }
    let h = |m: &HashMap<Vec<Symbol>, f64>| -> f64 {
        m.values().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
    };
    Ok(h(&full) - h(&ctx))
}

/// Data-weighted mean size of the compatibility set by enumeration: for each
/// realized constraint prefix (window minus its trailing partial block),
/// count the distinct parents of the last block, weighted by context mass.
pub fn mean_compat_size(g: &GrammarInstance, ell: usize) -> Result<f64> {
    if ell == 1 {
        return Ok(g.v() as f64);
    }
    let d = g.params().d();
    let s = g.s();
    let w = g.s().pow(ell as u32);
    // constraint part: tokens d-w .. d-s (complete blocks of the window)
    let mut mass: HashMap<Vec<Symbol>, f64> = HashMap::new();
    let mut members: HashMap<Vec<Symbol>, std::collections::HashSet<Symbol>> = HashMap::new();
    for (der, p) in enumerate_derivations(g)? {
        let toks = der.tokens();
        let key = toks[d - w..d - s].to_vec();
        let parent = der.nodes[1][der.nodes[1].len() - 1];
        if p > 0.0 {
            *mass.entry(key.clone()).or_insert(0.0) += p;
            members.entry(key).or_default().insert(parent);
        }
    }
    let total: f64 = mass.values().sum();
    let mut acc = 0.0;
    for (key, m) in &mass {
        acc += m / total * members[key].len() as f64;
    }
    Ok(acc)
}
