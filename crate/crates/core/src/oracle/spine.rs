//! Exact conditionals, cross-entropies, and compatibility sets for windows
//! of the last `s^l - 1` tokens, via belief propagation along the rightmost
//! spine of the derivation tree.
//!
//! The window decomposes into the off-spine sibling blocks of the last
//! token's ancestors; by unambiguity each complete block collapses to one
//! symbol, so the conditional of the last token given the window depends on
//! the window only through one observed `(s-1)`-tuple per level. Walking the
//! spine top-down while tracking the posterior over the spine symbol keeps
//! the computation exact at depths where naive enumeration is hopeless; the
//! visited posteriors ("beliefs") are deduplicated, which is what keeps the
//! state count small.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};
use crate::grammar::{encode_tuple, GrammarInstance, Symbol};
use crate::oracle::marginal::rightmost_marginal;

/// Members of the belief support below this mass are treated as
/// incompatible; well above float noise, far below any genuine rule product
/// at desk scale.
const SUPPORT_TOL: f64 = 1e-12;
const DEDUP_SCALE: f64 = 1e12;
pub const DEFAULT_STATE_BUDGET: usize = 2_000_000;

/// Per-level transitions grouped by the observed `(s-1)`-prefix `b`:
/// `groups[b]` lists `(parent, rightmost child, rule weight)`.
fn emission_groups(g: &GrammarInstance, level: usize) -> Vec<Vec<(usize, usize, f64)>> {
    let v = g.v();
    let nb = v.pow((g.s() - 1) as u32);
    let dist = g.distribution(level);
    let mut groups = vec![Vec::new(); nb];
    for p in 0..v {
        for k in 1..=g.m() {
            let code = g.rhs_code(level, p as Symbol, k);
            groups[code / v].push((p, code % v, dist.weight(k)));
        }
    }
    groups
}

#[derive(Clone, Debug)]
struct BeliefStates {
    /// `(mass, posterior over the current spine symbol)`; masses sum to 1.
    states: Vec<(f64, Vec<f64>)>,
}

fn belief_key(b: &[f64]) -> Vec<i64> {
    b.iter().map(|&x| (x * DEDUP_SCALE).round() as i64).collect()
}

impl BeliefStates {
    fn root(g: &GrammarInstance, level: usize) -> Result<Self> {
        Ok(Self { states: vec![(1.0, rightmost_marginal(g, level)?)] })
    }

    /// One spine step down through `level`, branching over every possible
    /// observed prefix and merging equal posteriors.
    fn step_all(&self, g: &GrammarInstance, level: usize, budget: usize) -> Result<Self> {
        let v = g.v();
        let groups = emission_groups(g, level);
        let mut merged: HashMap<Vec<i64>, (f64, Vec<f64>)> = HashMap::new();
        for (mass, belief) in &self.states {
            for entries in &groups {
                if entries.is_empty() {
                    continue;
                }
                let mut nb = vec![0.0; v];
                let mut w = 0.0;
                for &(p, r, f) in entries {
                    let c = belief[p] * f;
                    if c > 0.0 {
                        nb[r] += c;
                        w += c;
                    }
                }
                if w <= 0.0 {
                    continue;
                }
                for x in nb.iter_mut() {
                    *x /= w;
                }
                let key = belief_key(&nb);
                let slot = merged.entry(key).or_insert_with(|| (0.0, vec![0.0; v]));
                let add = mass * w;
                slot.0 += add;
                for (acc, x) in slot.1.iter_mut().zip(&nb) {
                    *acc += add * x;
                }
            }
            if merged.len() > budget {
                return Err(RhmError::BudgetExceeded {
                    required: merged.len() as u128,
                    budget: budget as u128,
                });
            }
        }
        // fixed reduction order for bit-reproducibility
        let mut keyed: Vec<(Vec<i64>, (f64, Vec<f64>))> = merged.into_iter().collect();
        keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let states = keyed
            .into_iter()
            .map(|(_, (mass, mut bsum))| {
                for x in bsum.iter_mut() {
                    *x /= mass;
                }
                (mass, bsum)
            })
            .collect();
        Ok(Self { states })
    }

    /// One spine step conditioned on an observed prefix code.
    fn step_observed(&self, g: &GrammarInstance, level: usize, b: usize) -> Option<Vec<f64>> {
        debug_assert_eq!(self.states.len(), 1);
        let v = g.v();
        let groups = emission_groups(g, level);
        let belief = &self.states[0].1;
        let mut nb = vec![0.0; v];
        let mut w = 0.0;
        for &(p, r, f) in &groups[b] {
            let c = belief[p] * f;
            nb[r] += c;
            w += c;
        }
        if w <= 0.0 {
            return None;
        }
        for x in nb.iter_mut() {
            *x /= w;
        }
        Some(nb)
    }

    fn expected_entropy(&self) -> f64 {
        self.states
            .iter()
            .map(|(mass, b)| {
                let h: f64 = b.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
                mass * h
            })
            .sum()
    }

    fn expected_support(&self) -> f64 {
        self.states
            .iter()
            .map(|(mass, b)| mass * b.iter().filter(|&&x| x > SUPPORT_TOL).count() as f64)
            .sum()
    }
}

fn check_level(g: &GrammarInstance, ell: usize) -> Result<()> {
    if ell == 0 || ell > g.depth() {
        return Err(RhmError::InvalidParameter(format!(
            "window level {ell} outside 1..={}",
            g.depth()
        )));
    }
    Ok(())
}

/// Splits a window of `s^l - 1` symbols into the observed off-spine prefix
/// per level, top-down. Complete `s`-blocks collapse through the inverse
/// rule maps; `Err(level, position)` marks an unreachable block.
fn spine_observations(
    g: &GrammarInstance,
    ell: usize,
    context: &[Symbol],
) -> Result<std::result::Result<Vec<usize>, (usize, usize)>> {
    check_level(g, ell)?;
    let s = g.s();
    let v = g.v();
    let want = s.pow(ell as u32) - 1;
    if context.len() != want {
        return Err(RhmError::InvalidParameter(format!(
            "context has {} symbols, expected s^l - 1 = {want}",
            context.len()
        )));
    }
    if context.iter().any(|&c| (c as usize) >= v) {
        return Err(RhmError::InvalidParameter("context symbol outside vocabulary".into()));
    }
    let mut seq = context.to_vec();
    let mut prefixes_bottom_up = Vec::with_capacity(ell);
    for level in 1..=ell {
        let partial = &seq[seq.len() - (s - 1)..];
        prefixes_bottom_up.push(encode_tuple(v, partial));
        let complete = &seq[..seq.len() - (s - 1)];
        let mut collapsed = Vec::with_capacity(complete.len() / s);
        for (j, block) in complete.chunks(s).enumerate() {
            match g.lookup_code(level, encode_tuple(v, block)) {
                Some((lhs, _)) => collapsed.push(lhs),
                None => return Ok(Err((level, j))),
            }
        }
        seq = collapsed;
    }
    prefixes_bottom_up.reverse();
    Ok(Ok(prefixes_bottom_up))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Conditional {
    /// Exact `P(X_d | window)`, summing to 1.
    Dist(Vec<f64>),
    /// A complete block is unreachable, or the constraint set is empty.
    Unparseable { level: usize, position: usize },
}

/// Exact next-token conditional given the last `s^l - 1` tokens.
pub fn window_conditional(g: &GrammarInstance, ell: usize, context: &[Symbol]) -> Result<Conditional> {
    let obs = match spine_observations(g, ell, context)? {
        Ok(o) => o,
        Err((level, position)) => return Ok(Conditional::Unparseable { level, position }),
    };
    let mut states = BeliefStates::root(g, ell)?;
    for (i, &b) in obs.iter().enumerate() {
        let level = ell - i;
        match states.step_observed(g, level, b) {
            Some(nb) => states = BeliefStates { states: vec![(1.0, nb)] },
            None => {
                return Ok(Conditional::Unparseable { level, position: usize::MAX })
            }
        }
    }
    Ok(Conditional::Dist(states.states.pop().unwrap().1))
}

/// The set of level-1 symbols compatible with the upper constraints of a
/// window (everything except its trailing partial block).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatibilitySet {
    pub level: usize,
    pub context: Vec<Symbol>,
    pub members: Vec<Symbol>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CompatOutcome {
    Set(CompatibilitySet),
    Unparseable { level: usize, position: usize },
}

pub fn compatibility_set(g: &GrammarInstance, ell: usize, context: &[Symbol]) -> Result<CompatOutcome> {
    let obs = match spine_observations(g, ell, context)? {
        Ok(o) => o,
        Err((level, position)) => return Ok(CompatOutcome::Unparseable { level, position }),
    };
    if ell == 1 {
        // no upper constraint: every symbol is compatible
        return Ok(CompatOutcome::Set(CompatibilitySet {
            level: ell,
            context: context.to_vec(),
            members: (0..g.v() as u16).collect(),
        }));
    }
    let mut states = BeliefStates::root(g, ell)?;
    // consume constraints down to the level-1 spine node, excluding the
    // trailing token block
    for (i, &b) in obs[..ell - 1].iter().enumerate() {
        let level = ell - i;
        match states.step_observed(g, level, b) {
            Some(nb) => states = BeliefStates { states: vec![(1.0, nb)] },
            None => return Ok(CompatOutcome::Unparseable { level, position: usize::MAX }),
        }
    }
    let belief = &states.states[0].1;
    let members = belief
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > SUPPORT_TOL)
        .map(|(i, _)| i as Symbol)
        .collect();
    Ok(CompatOutcome::Set(CompatibilitySet { level: ell, context: context.to_vec(), members }))
}

/// Exact window cross-entropy `H(X_d | last s^l - 1 tokens)` in nats,
/// averaging over the law of the window; `l = 0` is `log v`.
pub fn window_cross_entropy_budget(g: &GrammarInstance, ell: usize, budget: usize) -> Result<f64> {
    if ell == 0 {
        return Ok((g.v() as f64).ln());
    }
    check_level(g, ell)?;
    let mut states = BeliefStates::root(g, ell)?;
    for level in (1..=ell).rev() {
        states = states.step_all(g, level, budget)?;
    }
    Ok(states.expected_entropy())
}

pub fn window_cross_entropy(g: &GrammarInstance, ell: usize) -> Result<f64> {
    window_cross_entropy_budget(g, ell, DEFAULT_STATE_BUDGET)
}

/// Exact mean compatibility-set size over the law of the window constraints.
pub fn mean_compat_size(g: &GrammarInstance, ell: usize) -> Result<f64> {
    check_level(g, ell)?;
    if ell == 1 {
        return Ok(g.v() as f64);
    }
    let mut states = BeliefStates::root(g, ell)?;
    for level in ((2..=ell).rev()).collect::<Vec<_>>() {
        states = states.step_all(g, level, DEFAULT_STATE_BUDGET)?;
    }
    Ok(states.expected_support())
}

/// Cross-entropies `L_l` for `l = 0..=depth`, with residuals against the
/// full-context value `L_depth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyLadder {
    pub values: Vec<f64>,
}

impl EntropyLadder {
    pub fn value(&self, ell: usize) -> f64 {
        self.values[ell]
    }

    pub fn full_context(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn residual(&self, ell: usize) -> f64 {
        self.values[ell] - self.full_context()
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

pub fn entropy_ladder(g: &GrammarInstance) -> Result<EntropyLadder> {
    let values = (0..=g.depth())
        .map(|ell| window_cross_entropy(g, ell))
        .collect::<Result<Vec<_>>>()?;
    Ok(EntropyLadder { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::build_grammar;
    use crate::params::RhmParams;
    use rand::SeedableRng;

    #[test]
    fn conditional_sums_to_one() {
        let g = build_grammar(&RhmParams::zipf(4, 4, 2, 3, 1.0, 5)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let der = crate::sample::sample_derivation(&g, &mut rng);
            for ell in 1..=3usize {
                let w = 2usize.pow(ell as u32);
                let d = g.params().d();
                let ctx = &der.tokens()[d - w..d - 1];
                match window_conditional(&g, ell, ctx).unwrap() {
                    Conditional::Dist(p) => {
                        approx::assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
                        assert!(p[der.tokens()[d - 1] as usize] > 0.0);
                    }
                    Conditional::Unparseable { .. } => panic!("sampled context must parse"),
                }
            }
        }
    }

    #[test]
    fn delta_distribution_is_deterministic() {
        // one positive-probability rule per level-1 symbol: the realized
        // context determines the next token whenever the rank-1 tuples have
        // pairwise distinct prefixes, making the window conditional a point
        // mass and the cross-entropy zero.
        use crate::params::ZipfExponent;
        let g = (0..200u64)
            .map(|seed| {
                let mut p = RhmParams::zipf(4, 4, 2, 1, 1.0, seed);
                p.zipf_exponent = Some(ZipfExponent::Infinity);
                build_grammar(&p).unwrap()
            })
            .find(|g| {
                let firsts: std::collections::HashSet<_> =
                    (0..4u16).map(|lhs| g.rhs(1, lhs, 1)[0]).collect();
                firsts.len() == 4
            })
            .expect("some seed yields distinct rank-1 prefixes");
        approx::assert_abs_diff_eq!(window_cross_entropy(&g, 1).unwrap(), 0.0, epsilon = 1e-12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let der = crate::sample::sample_derivation(&g, &mut rng);
            let d = g.params().d();
            match window_conditional(&g, 1, &der.tokens()[d - 2..d - 1]).unwrap() {
                Conditional::Dist(p) => {
                    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
                    approx::assert_abs_diff_eq!(h, 0.0, epsilon = 1e-12);
                }
                _ => panic!(),
            }
        }
    }

    #[test]
    fn ladder_monotone_and_starts_at_log_v() {
        let g = build_grammar(&RhmParams::zipf(4, 4, 2, 3, 1.0, 11)).unwrap();
        let ladder = entropy_ladder(&g).unwrap();
        approx::assert_abs_diff_eq!(ladder.value(0), 4f64.ln(), epsilon = 1e-15);
        assert!(ladder.is_monotone(1e-12));
        assert!(ladder.residual(1) >= 0.0);
    }

    #[test]
    fn compat_level1_is_everything() {
        let g = build_grammar(&RhmParams::uniform(4, 2, 2, 2, 9)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let der = crate::sample::sample_derivation(&g, &mut rng);
        let d = g.params().d();
        match compatibility_set(&g, 1, &der.tokens()[d - 2..d - 1]).unwrap() {
            CompatOutcome::Set(s) => assert_eq!(s.members, vec![0, 1, 2, 3]),
            _ => panic!(),
        }
        assert_eq!(mean_compat_size(&g, 1).unwrap(), 4.0);
    }

    #[test]
    fn compat_members_nonempty_on_generated_contexts() {
        let g = build_grammar(&RhmParams::zipf(4, 2, 2, 3, 1.0, 13)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let der = crate::sample::sample_derivation(&g, &mut rng);
            let d = g.params().d();
            for ell in 2..=3usize {
                let w = 2usize.pow(ell as u32);
                match compatibility_set(&g, ell, &der.tokens()[d - w..d - 1]).unwrap() {
                    CompatOutcome::Set(s) => {
                        assert!(!s.members.is_empty());
                        // the true parent of the last block is always a member
                        let parent = der.nodes[1][der.nodes[1].len() - 1];
                        assert!(s.members.contains(&parent));
                    }
                    _ => panic!("generated context must be compatible"),
                }
            }
        }
    }

    #[test]
    fn unreachable_block_flags_unparseable() {
        let g = build_grammar(&RhmParams::uniform(4, 2, 2, 2, 5)).unwrap();
        let bad = (0..16u16)
            .map(|c| crate::grammar::decode_tuple(4, 2, c as usize))
            .find(|t| g.lookup_code(1, encode_tuple(4, t)) .is_none())
            .unwrap();
        let ctx = [bad, vec![0u16]].concat();
        assert!(matches!(
            window_conditional(&g, 2, &ctx).unwrap(),
            Conditional::Unparseable { level: 1, position: 0 }
        ));
    }

    #[test]
    fn budget_error_reports_requirement() {
        let g = build_grammar(&RhmParams::zipf(8, 8, 2, 3, 1.0, 1)).unwrap();
        match window_cross_entropy_budget(&g, 3, 2) {
            Err(RhmError::BudgetExceeded { required, budget }) => {
                assert!(required > 2);
                assert_eq!(budget, 2);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }
}
