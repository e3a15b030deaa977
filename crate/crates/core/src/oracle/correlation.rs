use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};
use crate::grammar::{decode_tuple, encode_tuple, GrammarInstance, Symbol, TupleCode};
use crate::oracle::marginal::{apply_matrix, child_matrix, conditional_marginal, level_marginal, rightmost_marginal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationKind {
    /// `C_j(y, mu)`: root label against the `j`-th `s`-tuple of tokens.
    LabelTuple,
    /// `C_j(mu, nu)`: the `j`-th `s`-tuple against the last token.
    TokenTuple,
}

/// A centered joint table: `values[cond][tuple] = P(cond, tuple) -
/// P(cond) P(tuple)`. Both margins vanish identically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub kind: CorrelationKind,
    /// Block index `j` (0-based) among the `s^(depth-1)` token tuples.
    pub position: usize,
    /// `values[cond][code]`; `cond` is the label (LabelTuple) or the last
    /// token (TokenTuple).
    pub values: Vec<Vec<f64>>,
    /// Level of the lowest common ancestor (TokenTuple only).
    pub lca_level: Option<usize>,
}

impl CorrelationTable {
    pub fn value(&self, cond: Symbol, tuple_code: TupleCode) -> f64 {
        self.values[cond as usize][tuple_code]
    }

    pub fn max_margin_violation(&self) -> f64 {
        let ncols = self.values[0].len();
        let mut worst: f64 = 0.0;
        for row in &self.values {
            worst = worst.max(row.iter().sum::<f64>().abs());
        }
        for c in 0..ncols {
            worst = worst.max(self.values.iter().map(|r| r[c]).sum::<f64>().abs());
        }
        worst
    }
}

fn check_block(g: &GrammarInstance, j: usize) -> Result<usize> {
    let blocks = g.s().pow((g.depth() - 1) as u32);
    if j >= blocks {
        return Err(RhmError::InvalidParameter(format!(
            "block index {j} outside 0..{blocks}"
        )));
    }
    Ok(blocks)
}

/// Exact label-tuple correlation table at block `j`.
///
/// `P(y, mu) = (1/v) f_{k(mu)} P(parent(mu) at (1,j) | y)`, so the centered
/// value is `(1/v) f_{k(mu)} [P(parent|y) - P(parent)]`; unreachable tuples
/// are exactly zero.
pub fn class_correlation_table(g: &GrammarInstance, j: usize) -> Result<CorrelationTable> {
    check_block(g, j)?;
    let v = g.v();
    let space = g.params().tuple_space();
    let marg = level_marginal(g, 1, j)?;
    let dist = g.distribution(1);
    let mut values = vec![vec![0.0; space]; v];
    for y in 0..v {
        let cond = conditional_marginal(g, 1, j, y as Symbol)?;
        let row = &mut values[y];
        for code in 0..space {
            if let Some((parent, k)) = g.lookup_code(1, code) {
                row[code] =
                    (cond[parent as usize] - marg[parent as usize]) * dist.weight(k) / v as f64;
            }
        }
    }
    Ok(CorrelationTable { kind: CorrelationKind::LabelTuple, position: j, values, lca_level: None })
}

/// `C_j(y, mu)` for one tuple; the bool is false when the tuple is not
/// produced (value exactly 0).
pub fn class_correlation(
    g: &GrammarInstance,
    j: usize,
    y: Symbol,
    tuple: &[Symbol],
) -> Result<(f64, bool)> {
    check_block(g, j)?;
    if y as usize >= g.v() {
        return Err(RhmError::InvalidParameter("label outside vocabulary".into()));
    }
    match g.rank_of_tuple(1, tuple)? {
        None => Ok((0.0, false)),
        Some((parent, k)) => {
            let marg = level_marginal(g, 1, j)?;
            let cond = conditional_marginal(g, 1, j, y)?;
            let f = g.distribution(1).weight(k);
            Ok((
                (cond[parent as usize] - marg[parent as usize]) * f / g.v() as f64,
                true,
            ))
        }
    }
}

/// Level of the lowest common ancestor of block `j` and the last token.
/// Requires `j` to not be the last block.
pub fn lca_level(g: &GrammarInstance, j: usize) -> Result<usize> {
    let blocks = check_block(g, j)?;
    if j == blocks - 1 {
        return Err(RhmError::InvalidParameter(
            "block overlaps the last token".into(),
        ));
    }
    let s = g.s();
    // ancestor of block j at rule level t sits at position j / s^(t-1);
    // the last token's ancestor at level t is the rightmost node.
    let mut pos = j;
    for t in 1..=g.depth() {
        let width = s.pow((g.depth() - t) as u32);
        if pos == width - 1 {
            return Ok(t);
        }
        pos /= s;
    }
    unreachable!("the root is a common ancestor");
}

/// Exact token-tuple correlation table at block `j` (conditioner = last
/// token), via the lowest-common-ancestor decomposition.
pub fn token_correlation_table(g: &GrammarInstance, j: usize) -> Result<CorrelationTable> {
    let t = lca_level(g, j)?;
    let v = g.v();
    let s = g.s();
    let space = g.params().tuple_space();
    let depth = g.depth();

    // offsets stepping down from the level-(t-1) node into the level-1 node
    // (t-2 steps; the offset taken at the LCA expansion itself is separate)
    let path = {
        let mut pos = j;
        let mut offs = Vec::new();
        for _ in 2..t {
            offs.push(pos % s);
            pos /= s;
        }
        offs.reverse(); // top-down offsets for steps into levels t-2, ..., 1
        offs
    };
    // first divergence: offset of the tuple branch at the LCA expansion
    let tuple_child_offset = {
        let mut pos = j;
        for _ in 1..t - 1 {
            pos /= s;
        }
        // pos is now block j's ancestor at level t-1, a child of the LCA
        pos % s
    };

    // D[c][lambda]: P(level-1 node above block j = lambda | level-(t-1) ancestor = c)
    let mut d_mat: Vec<Vec<f64>> = (0..v)
        .map(|c| {
            let mut e = vec![0.0; v];
            e[c] = 1.0;
            e
        })
        .collect();
    for (i, &off) in path.iter().enumerate() {
        let lev = t - 1 - i; // stepping from level `lev` into `lev - 1`... levels t-1 down to 2
        let mat = child_matrix(g, lev, off);
        for row in d_mat.iter_mut() {
            *row = apply_matrix(row, &mat);
        }
    }

    // B[c][nu]: P(last token = nu | level-(t-1) rightmost ancestor = c)
    let mut b_mat: Vec<Vec<f64>> = (0..v)
        .map(|c| {
            let mut e = vec![0.0; v];
            e[c] = 1.0;
            e
        })
        .collect();
    for lev in (1..t).rev() {
        let mat = child_matrix(g, lev, s - 1);
        for row in b_mat.iter_mut() {
            *row = apply_matrix(row, &mat);
        }
    }

    // joint over (level-1 parent of block j, last token)
    let q = rightmost_marginal(g, t)?;
    let dist_t = g.distribution(t);
    let mut joint = vec![vec![0.0; v]; v]; // [lambda][nu]
    for alpha in 0..v {
        if q[alpha] == 0.0 {
            continue;
        }
        for k in 1..=g.m() {
            let w = q[alpha] * dist_t.weight(k);
            if w == 0.0 {
                continue;
            }
            let rhs = g.rhs(t, alpha as Symbol, k);
            let c_tup = rhs[tuple_child_offset] as usize;
            let c_spine = rhs[s - 1] as usize;
            for lambda in 0..v {
                let dl = d_mat[c_tup][lambda];
                if dl == 0.0 {
                    continue;
                }
                for nu in 0..v {
                    joint[lambda][nu] += w * dl * b_mat[c_spine][nu];
                }
            }
        }
    }

    let marg_parent = level_marginal(g, 1, j)?;
    let marg_last = level_marginal(g, 0, g.params().d() - 1)?;
    let dist1 = g.distribution(1);
    let mut values = vec![vec![0.0; space]; v];
    for code in 0..space {
        if let Some((parent, k)) = g.lookup_code(1, code) {
            let f = dist1.weight(k);
            for nu in 0..v {
                values[nu][code] = f
                    * (joint[parent as usize][nu] - marg_parent[parent as usize] * marg_last[nu]);
            }
        }
    }
    let _ = depth;
    Ok(CorrelationTable {
        kind: CorrelationKind::TokenTuple,
        position: j,
        values,
        lca_level: Some(t),
    })
}

/// `C_j(mu, nu)` for one tuple and one last-token value; the bool is false
/// when the tuple is not produced.
pub fn token_correlation(
    g: &GrammarInstance,
    j: usize,
    tuple: &[Symbol],
    nu: Symbol,
) -> Result<(f64, bool)> {
    if tuple.len() != g.s() || tuple.iter().any(|&c| (c as usize) >= g.v()) {
        return Err(RhmError::InvalidParameter("malformed tuple".into()));
    }
    if nu as usize >= g.v() {
        return Err(RhmError::InvalidParameter("token outside vocabulary".into()));
    }
    let table = token_correlation_table(g, j)?;
    let code = encode_tuple(g.v(), tuple);
    let produced = g.lookup_code(1, code).is_some();
    Ok((table.value(nu, code), produced))
}

/// Per-instance identity behind the factorization of label-tuple
/// correlations: `C^{(L)}_j(mu, y) = f_{k(mu)} * C'_j(parent(mu), y)`, where
/// `C'` is the label/symbol correlation of the bottom-collapsed grammar.
/// Returns the worst absolute discrepancy over all produced tuples and labels.
pub fn factorization_discrepancy(g: &GrammarInstance, j: usize) -> Result<f64> {
    let sub = g.collapse_bottom()?;
    let table = class_correlation_table(g, j)?;
    let v = g.v();
    let dist1 = g.distribution(1);
    let marg = level_marginal(&sub, 0, j)?;
    let mut worst: f64 = 0.0;
    for y in 0..v {
        let cond = conditional_marginal(&sub, 0, j, y as Symbol)?;
        for code in 0..g.params().tuple_space() {
            if let Some((parent, k)) = g.lookup_code(1, code) {
                let rhs_value = dist1.weight(k)
                    * (cond[parent as usize] - marg[parent as usize])
                    / v as f64;
                worst = worst.max((table.values[y][code] - rhs_value).abs());
            }
        }
    }
    Ok(worst)
}

/// Tuples sharing a parent and rank have identical correlation rows only
/// when they share the rank; same-parent tuples differ by the rank factor.
pub fn decode(g: &GrammarInstance, code: TupleCode) -> Vec<Symbol> {
    decode_tuple(g.v(), g.s(), code)
}
