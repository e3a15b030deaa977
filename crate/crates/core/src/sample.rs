use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};
use crate::grammar::{encode_tuple, grammar_hash, GrammarInstance, Symbol};

/// Full generation tree of one datum: symbols at every level plus the rule
/// ranks used at every expansion.
///
/// `nodes[l][j]` is the symbol at level `l`, position `j` (level 0 = tokens,
/// level `depth` = the label); `ranks[l-1][j]` is the 1-based rank used to
/// expand node `(l, j)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub nodes: Vec<Vec<Symbol>>,
    pub ranks: Vec<Vec<u16>>,
}

impl Derivation {
    pub fn label(&self) -> Symbol {
        self.nodes[self.nodes.len() - 1][0]
    }

    pub fn tokens(&self) -> &[Symbol] {
        &self.nodes[0]
    }

    pub fn sequence(&self) -> Sequence {
        Sequence { tokens: self.nodes[0].clone() }
    }

    /// Every node must expand to its children via the recorded rule.
    pub fn check_expansions(&self, g: &GrammarInstance) -> Result<()> {
        let s = g.s();
        for level in (1..=g.depth()).rev() {
            let parents = &self.nodes[level];
            let children = &self.nodes[level - 1];
            let ranks = &self.ranks[level - 1];
            if children.len() != parents.len() * s || ranks.len() != parents.len() {
                return Err(RhmError::InvalidParameter("derivation shape mismatch".into()));
            }
            for (j, (&p, &k)) in parents.iter().zip(ranks).enumerate() {
                if g.rhs(level, p, k as usize) != children[j * s..(j + 1) * s] {
                    return Err(RhmError::InvalidParameter(format!(
                        "node ({level},{j}) does not expand via its recorded rule"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A terminal sequence of `d = s^depth` tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    pub tokens: Vec<Symbol>,
}

impl Sequence {
    /// Row-major `d x v` one-hot view, one byte per indicator.
    pub fn one_hot(&self, v: usize) -> Vec<u8> {
        let mut out = vec![0u8; self.tokens.len() * v];
        for (i, &t) in self.tokens.iter().enumerate() {
            out[i * v + t as usize] = 1;
        }
        out
    }
}

/// Draw one derivation: uniform label, then a rank from each level's rule
/// distribution at every node.
pub fn sample_derivation<R: Rng + ?Sized>(g: &GrammarInstance, rng: &mut R) -> Derivation {
    let depth = g.depth();
    let s = g.s();
    let label = rng.gen_range(0..g.v()) as Symbol;
    let mut nodes: Vec<Vec<Symbol>> = vec![Vec::new(); depth + 1];
    let mut ranks: Vec<Vec<u16>> = vec![Vec::new(); depth];
    nodes[depth] = vec![label];
    for level in (1..=depth).rev() {
        let parents = nodes[level].clone();
        let dist = g.distribution(level);
        let mut children = Vec::with_capacity(parents.len() * s);
        let mut level_ranks = Vec::with_capacity(parents.len());
        for &p in &parents {
            let k = dist.sample(rng);
            level_ranks.push(k as u16);
            children.extend_from_slice(&g.rhs(level, p, k));
        }
        nodes[level - 1] = children;
        ranks[level - 1] = level_ranks;
    }
    Derivation { nodes, ranks }
}

/// Outcome of bottom-up parsing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Parse {
    Parsed(Derivation),
    /// Some `s`-block at `level` (position `j` within that level) is not
    /// produced by any rule.
    Unparseable { level: usize, position: usize },
}

/// Deterministic bottom-up parse: `depth` passes of the inverse rule map.
pub fn parse_sequence(g: &GrammarInstance, tokens: &[Symbol]) -> Result<Parse> {
    let d = g.params().d();
    if tokens.len() != d {
        return Err(RhmError::InvalidParameter(format!(
            "sequence length {} != d = {d}",
            tokens.len()
        )));
    }
    if tokens.iter().any(|&t| (t as usize) >= g.v()) {
        return Err(RhmError::InvalidParameter("token outside vocabulary".into()));
    }
    let s = g.s();
    let v = g.v();
    let mut nodes: Vec<Vec<Symbol>> = Vec::with_capacity(g.depth() + 1);
    let mut ranks: Vec<Vec<u16>> = Vec::with_capacity(g.depth());
    nodes.push(tokens.to_vec());
    for level in 1..=g.depth() {
        let below = &nodes[level - 1];
        let mut above = Vec::with_capacity(below.len() / s);
        let mut level_ranks = Vec::with_capacity(below.len() / s);
        for (j, block) in below.chunks(s).enumerate() {
            match g.lookup_code(level, encode_tuple(v, block)) {
                Some((lhs, k)) => {
                    above.push(lhs);
                    level_ranks.push(k as u16);
                }
                None => return Ok(Parse::Unparseable { level, position: j }),
            }
        }
        nodes.push(above);
        ranks.push(level_ranks);
    }
    Ok(Parse::Parsed(Derivation { nodes, ranks }))
}

/// `log P(x | y)` under the grammar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SeqLogProb {
    Value(f64),
    /// Parseable, but the derivation root differs from the queried label.
    RootMismatch,
    Unparseable,
}

pub fn sequence_log_prob(g: &GrammarInstance, tokens: &[Symbol], label: Symbol) -> Result<SeqLogProb> {
    match parse_sequence(g, tokens)? {
        Parse::Unparseable { .. } => Ok(SeqLogProb::Unparseable),
        Parse::Parsed(der) => {
            if der.label() != label {
                return Ok(SeqLogProb::RootMismatch);
            }
            let mut lp = 0.0;
            for level in 1..=g.depth() {
                let dist = g.distribution(level);
                for &k in &der.ranks[level - 1] {
                    lp += dist.log_weight(k as usize);
                }
            }
            Ok(SeqLogProb::Value(lp))
        }
    }
}

// ---------------------------------------------------------------------------
// datasets
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub tokens: Vec<Symbol>,
    pub label: Symbol,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivation: Option<Derivation>,
    pub split: Split,
}

/// An i.i.d. sample from one grammar realization, tagged with the grammar
/// identity so ingestion can detect mismatched references.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub params: crate::params::RhmParams,
    pub grammar_hash: u64,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Per-sample rng stream derived from `(master_seed, sample index)`, so the
/// result is independent of worker count and deterministic by index.
pub fn sample_dataset(
    g: &GrammarInstance,
    n: usize,
    master_seed: u64,
    keep_derivations: bool,
    split: Split,
) -> Dataset {
    let records: Vec<DatasetRecord> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(i as u64);
            let der = sample_derivation(g, &mut rng);
            DatasetRecord {
                tokens: der.tokens().to_vec(),
                label: der.label(),
                derivation: keep_derivations.then(|| der.clone()),
                split,
            }
        })
        .collect();
    Dataset { params: *g.params(), grammar_hash: grammar_hash(g), records }
}
