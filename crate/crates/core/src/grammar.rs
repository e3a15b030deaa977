use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{make_distribution, DistKind, RuleDistribution, NORM_TOL};
use crate::error::{Result, RhmError};
use crate::params::RhmParams;

/// Symbol index within one level's vocabulary.
pub type Symbol = u16;

/// An `s`-tuple of level-`(l-1)` symbols packed as a base-`v` integer,
/// first child in the most significant digit.
pub type TupleCode = usize;

pub fn encode_tuple(v: usize, symbols: &[Symbol]) -> TupleCode {
    symbols.iter().fold(0, |acc, &c| acc * v + c as usize)
}

pub fn decode_tuple(v: usize, s: usize, code: TupleCode) -> Vec<Symbol> {
    let mut out = vec![0u16; s];
    let mut c = code;
    for i in (0..s).rev() {
        out[i] = (c % v) as Symbol;
        c /= v;
    }
    out
}

/// One production rule `lhs -> rhs` at a given level, picked with the
/// probability attached to its rank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductionRule {
    /// Rule level in `1..=depth`.
    pub level: usize,
    pub lhs: Symbol,
    /// Rank `k` in `1..=m`; lower rank means higher probability.
    pub rank: usize,
    pub rhs: Vec<Symbol>,
}

/// A frozen RHM realization: per-level rule tables, rule distributions, and
/// the inverse tuple index. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GrammarInstance {
    params: RhmParams,
    /// `rules[l-1][lhs * m + (k-1)]` = rhs tuple code.
    rules: Vec<Vec<TupleCode>>,
    dists: Vec<RuleDistribution>,
    /// `tuple_index[l-1][code]` = `lhs * m + (k-1)`, or -1 when not produced.
    tuple_index: Vec<Vec<i32>>,
}

impl GrammarInstance {
    pub fn params(&self) -> &RhmParams {
        &self.params
    }

    pub fn v(&self) -> usize {
        self.params.v
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn s(&self) -> usize {
        self.params.s
    }

    pub fn depth(&self) -> usize {
        self.params.depth
    }

    pub fn distribution(&self, level: usize) -> &RuleDistribution {
        &self.dists[level - 1]
    }

    /// Packed rhs of rule `(level, lhs, rank)`.
    pub fn rhs_code(&self, level: usize, lhs: Symbol, rank: usize) -> TupleCode {
        self.rules[level - 1][lhs as usize * self.params.m + (rank - 1)]
    }

    pub fn rhs(&self, level: usize, lhs: Symbol, rank: usize) -> Vec<Symbol> {
        decode_tuple(self.params.v, self.params.s, self.rhs_code(level, lhs, rank))
    }

    pub fn rule(&self, level: usize, lhs: Symbol, rank: usize) -> ProductionRule {
        ProductionRule { level, lhs, rank, rhs: self.rhs(level, lhs, rank) }
    }

    pub fn rules_at(&self, level: usize) -> impl Iterator<Item = ProductionRule> + '_ {
        let m = self.params.m;
        (0..self.params.v).flat_map(move |lhs| {
            (1..=m).map(move |rank| self.rule(level, lhs as Symbol, rank))
        })
    }

    /// Inverse rule lookup for a packed tuple code.
    pub fn lookup_code(&self, level: usize, code: TupleCode) -> Option<(Symbol, usize)> {
        let e = self.tuple_index[level - 1][code];
        if e < 0 {
            None
        } else {
            Some(((e as usize / self.params.m) as Symbol, e as usize % self.params.m + 1))
        }
    }

    /// Exact inverse of the rule map: `(lhs, rank)` of the unique rule
    /// producing `tuple`, or `None` for the `v^s - m*v` unreachable tuples.
    pub fn rank_of_tuple(&self, level: usize, tuple: &[Symbol]) -> Result<Option<(Symbol, usize)>> {
        if level == 0 || level > self.params.depth {
            return Err(RhmError::InvalidParameter(format!(
                "level {level} outside 1..={}",
                self.params.depth
            )));
        }
        if tuple.len() != self.params.s {
            return Err(RhmError::InvalidParameter(format!(
                "tuple arity {} != s = {}",
                tuple.len(),
                self.params.s
            )));
        }
        if tuple.iter().any(|&c| c as usize >= self.params.v) {
            return Err(RhmError::InvalidParameter(format!(
                "tuple {tuple:?} has symbols outside 0..{}",
                self.params.v
            )));
        }
        Ok(self.lookup_code(level, encode_tuple(self.params.v, tuple)))
    }

    /// Sub-grammar made of levels `2..=depth`; its tokens are the level-1
    /// symbols of `self`. Depth decreases by one, vocabulary stays `v`.
    pub fn collapse_bottom(&self) -> Result<GrammarInstance> {
        if self.params.depth < 2 {
            return Err(RhmError::InvalidParameter(
                "cannot collapse a depth-1 grammar".into(),
            ));
        }
        let mut params = self.params;
        params.depth -= 1;
        params.zipf_layer = match self.params.zipf_layer {
            Some(1) | None => None,
            Some(l) => Some(l - 1),
        };
        if params.zipf_layer.is_none() {
            params.zipf_exponent = None;
        }
        Ok(GrammarInstance {
            params,
            rules: self.rules[1..].to_vec(),
            dists: self.dists[1..].to_vec(),
            tuple_index: self.tuple_index[1..].to_vec(),
        })
    }

    fn validate(&self) -> Result<()> {
        let p = &self.params;
        p.validate()?;
        let space = p.tuple_space();
        for level in 1..=p.depth {
            let rules = &self.rules[level - 1];
            if rules.len() != p.v * p.m {
                return Err(RhmError::Schema(format!(
                    "level {level} has {} rules, expected {}",
                    rules.len(),
                    p.v * p.m
                )));
            }
            let mut seen = vec![false; space];
            for &code in rules {
                if code >= space {
                    return Err(RhmError::Schema(format!(
                        "level {level} rhs code {code} outside tuple space"
                    )));
                }
                if seen[code] {
                    return Err(RhmError::Ambiguous {
                        level,
                        tuple: decode_tuple(p.v, p.s, code),
                    });
                }
                seen[code] = true;
            }
            let idx = &self.tuple_index[level - 1];
            if idx.len() != space {
                return Err(RhmError::Schema("tuple index has wrong size".into()));
            }
            for (code, &e) in idx.iter().enumerate() {
                if e >= 0 && rules[e as usize] != code {
                    return Err(RhmError::Schema("tuple index inconsistent with rules".into()));
                }
            }
            if idx.iter().filter(|&&e| e >= 0).count() != p.v * p.m {
                return Err(RhmError::Schema("tuple index is not a bijection".into()));
            }
            let expected = expected_kind(p, level);
            let d = &self.dists[level - 1];
            if d.len() != p.m {
                return Err(RhmError::Schema(format!("level {level} distribution has wrong size")));
            }
            let reference = make_distribution(p.m, expected)?;
            for k in 1..=p.m {
                if (d.weight(k) - reference.weight(k)).abs() > NORM_TOL {
                    return Err(RhmError::Schema(format!(
                        "level {level} distribution does not match declared params"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn expected_kind(p: &RhmParams, level: usize) -> DistKind {
    match (p.zipf_layer, p.zipf_exponent) {
        (Some(l), Some(e)) if l == level => DistKind::from_exponent(e),
        _ => DistKind::Uniform,
    }
}

/// Draw `m*v` distinct rhs tuples per level uniformly without replacement
/// from the `v^s` tuples, partition them sequentially into `v` groups of `m`,
/// and rank each group in draw order. Deterministic in `params.seed`.
pub fn build_grammar(params: &RhmParams) -> Result<GrammarInstance> {
    params.validate()?;
    let space = params.tuple_space();
    let need = params.v * params.m;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut rules = Vec::with_capacity(params.depth);
    let mut dists = Vec::with_capacity(params.depth);
    let mut tuple_index = Vec::with_capacity(params.depth);
    for level in 1..=params.depth {
        // partial Fisher-Yates over 0..space via a sparse swap map
        let mut swaps: HashMap<usize, usize> = HashMap::new();
        let mut draw = Vec::with_capacity(need);
        for i in 0..need {
            let j = rng.gen_range(i..space);
            let vi = *swaps.get(&i).unwrap_or(&i);
            let vj = *swaps.get(&j).unwrap_or(&j);
            draw.push(vj);
            swaps.insert(j, vi);
        }
        let mut idx = vec![-1i32; space];
        for (pos, &code) in draw.iter().enumerate() {
            idx[code] = pos as i32;
        }
        rules.push(draw);
        tuple_index.push(idx);
        dists.push(make_distribution(params.m, expected_kind(params, level))?);
    }
    let g = GrammarInstance { params: *params, rules, dists, tuple_index };
    debug_assert!(g.validate().is_ok());
    Ok(g)
}

/// FNV-1a over the rule tables; stable identity for dataset manifests.
pub fn grammar_hash(g: &GrammarInstance) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(g.params.seed);
    eat(g.params.v as u64);
    eat(g.params.m as u64);
    eat(g.params.s as u64);
    eat(g.params.depth as u64);
    for level in &g.rules {
        for &code in level {
            eat(code as u64);
        }
    }
    h
}

// ---------------------------------------------------------------------------
// document form ("rhm-grammar/1")
// ---------------------------------------------------------------------------

pub const GRAMMAR_SCHEMA: &str = "rhm-grammar/1";

#[derive(Serialize, Deserialize)]
struct GrammarDoc {
    schema: String,
    params: RhmParams,
    /// `levels[l-1][lhs][k-1]` = rhs symbol list.
    levels: Vec<Vec<Vec<Vec<Symbol>>>>,
    distributions: Vec<Vec<f64>>,
}

pub fn serialize_grammar(g: &GrammarInstance) -> Result<String> {
    let p = g.params();
    let levels = (1..=p.depth)
        .map(|level| {
            (0..p.v)
                .map(|lhs| (1..=p.m).map(|k| g.rhs(level, lhs as Symbol, k)).collect())
                .collect()
        })
        .collect();
    let doc = GrammarDoc {
        schema: GRAMMAR_SCHEMA.to_string(),
        params: *g.params(),
        levels,
        distributions: g.dists.iter().map(|d| d.weights().to_vec()).collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn deserialize_grammar(text: &str) -> Result<GrammarInstance> {
    let doc: GrammarDoc = serde_json::from_str(text)?;
    if doc.schema != GRAMMAR_SCHEMA {
        return Err(RhmError::Schema(format!(
            "unsupported schema tag {:?}, expected {GRAMMAR_SCHEMA:?}",
            doc.schema
        )));
    }
    let p = doc.params;
    p.validate()?;
    if doc.levels.len() != p.depth || doc.distributions.len() != p.depth {
        return Err(RhmError::Schema("levels/distributions do not match depth".into()));
    }
    let space = p.tuple_space();
    let mut rules = Vec::with_capacity(p.depth);
    let mut tuple_index = Vec::with_capacity(p.depth);
    let mut dists = Vec::with_capacity(p.depth);
    for (li, level) in doc.levels.iter().enumerate() {
        if level.len() != p.v {
            return Err(RhmError::Schema(format!("level {} has {} lhs entries", li + 1, level.len())));
        }
        let mut flat = Vec::with_capacity(p.v * p.m);
        let mut idx = vec![-1i32; space];
        for (lhs, by_rank) in level.iter().enumerate() {
            if by_rank.len() != p.m {
                return Err(RhmError::Schema(format!(
                    "level {} lhs {lhs} has {} rules, expected m = {}",
                    li + 1,
                    by_rank.len(),
                    p.m
                )));
            }
            for rhs in by_rank {
                if rhs.len() != p.s || rhs.iter().any(|&c| c as usize >= p.v) {
                    return Err(RhmError::Schema(format!(
                        "level {} lhs {lhs} has malformed rhs {rhs:?}",
                        li + 1
                    )));
                }
                let code = encode_tuple(p.v, rhs);
                if idx[code] >= 0 {
                    return Err(RhmError::Ambiguous { level: li + 1, tuple: rhs.clone() });
                }
                idx[code] = flat.len() as i32;
                flat.push(code);
            }
        }
        let weights = doc.distributions[li].clone();
        let kind = expected_kind(&p, li + 1);
        let dist = RuleDistribution::from_weights(kind, weights)?;
        rules.push(flat);
        tuple_index.push(idx);
        dists.push(dist);
    }
    let g = GrammarInstance { params: p, rules, dists, tuple_index };
    g.validate()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturated_build_is_a_bijection() {
        // m*v = v^s forces the rhs set to be a permutation of all tuples
        let p = RhmParams::uniform(2, 2, 2, 1, 7);
        let g = build_grammar(&p).unwrap();
        let mut seen: Vec<TupleCode> = g.rules_at(1).map(|r| encode_tuple(2, &r.rhs)).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn deterministic_in_seed() {
        let p = RhmParams::zipf(8, 8, 2, 2, 1.0, 123);
        assert_eq!(build_grammar(&p).unwrap(), build_grammar(&p).unwrap());
        let q = p.with_seed(124);
        assert_ne!(build_grammar(&p).unwrap(), build_grammar(&q).unwrap());
    }

    #[test]
    fn invariants_on_a_zipf_instance() {
        let p = RhmParams::zipf(8, 8, 2, 2, 1.0, 0);
        let g = build_grammar(&p).unwrap();
        g.validate().unwrap();
        for level in 1..=2 {
            let codes: std::collections::HashSet<_> =
                (0..8).flat_map(|lhs| (1..=8).map(move |k| (lhs, k)))
                    .map(|(lhs, k)| g.rhs_code(level, lhs, k))
                    .collect();
            assert_eq!(codes.len(), 64);
        }
    }

    #[test]
    fn rank_of_tuple_roundtrip_and_unreachable() {
        let p = RhmParams::zipf(4, 2, 2, 2, 1.0, 5);
        let g = build_grammar(&p).unwrap();
        let mut produced = 0;
        for code in 0..p.tuple_space() {
            let tuple = decode_tuple(4, 2, code);
            match g.rank_of_tuple(1, &tuple).unwrap() {
                Some((lhs, k)) => {
                    produced += 1;
                    assert_eq!(g.rhs(1, lhs, k), tuple);
                }
                None => {}
            }
        }
        assert_eq!(produced, 8); // m*v of v^s = 16
        assert!(g.rank_of_tuple(1, &[9, 0]).is_err());
        assert!(g.rank_of_tuple(1, &[0]).is_err());
    }

    #[test]
    fn document_roundtrip() {
        let p = RhmParams::zipf(4, 4, 2, 2, 1.0, 11);
        let g = build_grammar(&p).unwrap();
        let text = serialize_grammar(&g).unwrap();
        let back = deserialize_grammar(&text).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn tampered_document_rejected() {
        let p = RhmParams::uniform(3, 2, 2, 1, 3);
        let g = build_grammar(&p).unwrap();
        let text = serialize_grammar(&g).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        // duplicate one rhs tuple
        let first = doc["levels"][0][0][0].clone();
        doc["levels"][0][0][1] = first;
        let err = deserialize_grammar(&doc.to_string()).unwrap_err();
        assert!(matches!(err, RhmError::Ambiguous { .. }));
        // drop distributions entirely
        let mut doc2: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc2.as_object_mut().unwrap().remove("distributions");
        assert!(deserialize_grammar(&doc2.to_string()).is_err());
    }

    #[test]
    fn collapse_drops_the_bottom_level() {
        let p = RhmParams::zipf(4, 4, 2, 3, 1.0, 2);
        let g = build_grammar(&p).unwrap();
        let c = g.collapse_bottom().unwrap();
        assert_eq!(c.depth(), 2);
        assert_eq!(c.params().zipf_layer, None);
        for k in 1..=4 {
            assert_eq!(c.rhs(1, 2, k), g.rhs(2, 2, k));
        }
        // zipf at level 2 collapses to zipf at level 1
        let p2 = RhmParams::zipf(4, 4, 2, 3, 1.0, 2).with_zipf_layer(2);
        let g2 = build_grammar(&p2).unwrap();
        assert_eq!(g2.collapse_bottom().unwrap().params().zipf_layer, Some(1));
    }
}
