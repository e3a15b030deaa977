use crate::error::{Result, RhmError};
use crate::grammar::{GrammarInstance, Symbol};

/// `v x v` stochastic matrix `M[p][c] = P(child at `offset` = c | parent = p)`
/// for rules at `level`.
pub fn child_matrix(g: &GrammarInstance, level: usize, offset: usize) -> Vec<Vec<f64>> {
    let v = g.v();
    let s = g.s();
    let dist = g.distribution(level);
    let shift = v.pow((s - 1 - offset) as u32);
    let mut mat = vec![vec![0.0; v]; v];
    for lhs in 0..v {
        for k in 1..=g.m() {
            let code = g.rhs_code(level, lhs as Symbol, k);
            let child = (code / shift) % v;
            mat[lhs][child] += dist.weight(k);
        }
    }
    mat
}

pub fn apply_matrix(p: &[f64], mat: &[Vec<f64>]) -> Vec<f64> {
    let v = p.len();
    let mut out = vec![0.0; v];
    for (a, row) in p.iter().zip(mat) {
        if *a == 0.0 {
            continue;
        }
        for (o, w) in out.iter_mut().zip(row) {
            *o += a * w;
        }
    }
    out
}

/// Child offsets along the ancestor path of node `(level, pos)`, ordered
/// top-down: element `i` is the offset taken when stepping from level
/// `depth - i` into level `depth - i - 1`.
fn path_offsets(g: &GrammarInstance, level: usize, pos: usize) -> Vec<usize> {
    let s = g.s();
    let mut offsets = Vec::with_capacity(g.depth() - level);
    let mut j = pos;
    for _ in level..g.depth() {
        offsets.push(j % s);
        j /= s;
    }
    offsets.reverse();
    offsets
}

fn marginal_from(g: &GrammarInstance, start: Vec<f64>, level: usize, pos: usize) -> Result<Vec<f64>> {
    if level > g.depth() {
        return Err(RhmError::InvalidParameter(format!(
            "level {level} outside 0..={}",
            g.depth()
        )));
    }
    let width = g.s().pow((g.depth() - level) as u32);
    if pos >= width {
        return Err(RhmError::InvalidParameter(format!(
            "position {pos} outside 0..{width} at level {level}"
        )));
    }
    let offsets = path_offsets(g, level, pos);
    let mut p = start;
    for (i, &off) in offsets.iter().enumerate() {
        let lev = g.depth() - i; // stepping from `lev` into `lev - 1`
        p = apply_matrix(&p, &child_matrix(g, lev, off));
    }
    Ok(p)
}

/// Exact marginal of the symbol at `(level, pos)` under a uniform root,
/// by top-down propagation along the unique ancestor path.
pub fn level_marginal(g: &GrammarInstance, level: usize, pos: usize) -> Result<Vec<f64>> {
    let v = g.v();
    marginal_from(g, vec![1.0 / v as f64; v], level, pos)
}

/// Exact conditional marginal of the symbol at `(level, pos)` given the root
/// label.
pub fn conditional_marginal(
    g: &GrammarInstance,
    level: usize,
    pos: usize,
    label: Symbol,
) -> Result<Vec<f64>> {
    let v = g.v();
    if label as usize >= v {
        return Err(RhmError::InvalidParameter("label outside vocabulary".into()));
    }
    let mut start = vec![0.0; v];
    start[label as usize] = 1.0;
    marginal_from(g, start, level, pos)
}

/// Marginal of the rightmost node at `level` (the ancestors of the last
/// token form the rightmost spine).
pub fn rightmost_marginal(g: &GrammarInstance, level: usize) -> Result<Vec<f64>> {
    let width = g.s().pow((g.depth() - level) as u32);
    level_marginal(g, level, width - 1)
}
