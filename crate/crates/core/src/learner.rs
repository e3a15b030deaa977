//! Correlation-based bottom-up grammar learner: estimate conditioner/tuple
//! correlations from samples, gate tuples on a detection test (a rule counts
//! as learnable once its correlation energy beats the sampling-noise
//! expectation), cluster detected tuples by the direction of their
//! correlation profiles, rewrite, and repeat level by level.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};
use crate::grammar::{build_grammar, encode_tuple, Symbol};
use crate::params::RhmParams;
use crate::sample::{sample_derivation, Dataset};
use crate::series::{CurvePoint, CurveSeries, Provenance, ValueKind};

/// Detection fires when a tuple's correlation energy exceeds `TAU` times the
/// chi-square null expectation; the noise-balance point matches the per-rank
/// sample complexities.
const TAU: f64 = 2.0;
/// Agglomerative merges stop below this mean cosine similarity.
const MERGE_COS: f64 = 0.5;
/// Borderline tuples (energy above this fraction of the gate) may attach to
/// an existing cluster direction.
const ANCHOR_ENERGY_FRAC: f64 = 0.75;
const ANCHOR_COS: f64 = 0.6;
const ANCHOR_MARGIN: f64 = 0.1;

const MAX_DENSE_SPACE: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditioner {
    Label,
    LastToken,
}

/// Joint occurrence counts of (conditioner, tuple) per block position, with
/// centered plug-in estimates.
#[derive(Clone, Debug)]
pub struct EmpiricalCorrelations {
    pub conditioner: Conditioner,
    pub v_cond: usize,
    pub base: usize,
    pub tuple_space: usize,
    pub n: usize,
    pub positions: Vec<usize>,
    /// per position, `v_cond * tuple_space` joint counts
    counts: Vec<Vec<f64>>,
    /// per position, tuple marginal counts
    tuple_counts: Vec<Vec<f64>>,
    cond_counts: Vec<f64>,
}

impl EmpiricalCorrelations {
    /// Centered estimate `N(c,t)/n - (N(c)/n)(N_j(t)/n)`.
    pub fn centered(&self, pos_idx: usize, cond: usize, code: usize) -> f64 {
        let n = self.n as f64;
        self.counts[pos_idx][cond * self.tuple_space + code] / n
            - (self.cond_counts[cond] / n) * (self.tuple_counts[pos_idx][code] / n)
    }

    pub fn tuple_count(&self, pos_idx: usize, code: usize) -> f64 {
        self.tuple_counts[pos_idx][code]
    }

    pub fn observed_codes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for code in 0..self.tuple_space {
            if self.positions.iter().enumerate().any(|(i, _)| self.tuple_counts[i][code] > 0.0) {
                out.push(code);
            }
        }
        out
    }

    /// Correlation energy of one tuple: squared centered estimates summed
    /// over positions and conditioner values, each normalized by its
    /// sampling-noise variance. The null expectation is
    /// `positions * (v_cond - 1)`.
    pub fn energy(&self, code: usize) -> f64 {
        let n = self.n as f64;
        let pc = 1.0 / self.v_cond as f64;
        let mut q = 0.0;
        for (i, _) in self.positions.iter().enumerate() {
            let pt = self.tuple_counts[i][code] / n;
            if pt <= 0.0 {
                continue;
            }
            let sigma2 = pt * pc * (1.0 - pc) / n;
            for c in 0..self.v_cond {
                let x = self.centered(i, c, code);
                q += x * x / sigma2;
            }
        }
        q
    }

    pub fn null_energy(&self) -> f64 {
        (self.positions.len() * (self.v_cond - 1)) as f64
    }

    /// Concatenated centered profile across positions.
    pub fn profile(&self, code: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.positions.len() * self.v_cond);
        for (i, _) in self.positions.iter().enumerate() {
            for c in 0..self.v_cond {
                out.push(self.centered(i, c, code));
            }
        }
        out
    }

    pub fn max_margin_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, _) in self.positions.iter().enumerate() {
            for c in 0..self.v_cond {
                let s: f64 = (0..self.tuple_space).map(|t| self.centered(i, c, t)).sum();
                worst = worst.max(s.abs());
            }
            for t in 0..self.tuple_space {
                let s: f64 = (0..self.v_cond).map(|c| self.centered(i, c, t)).sum();
                worst = worst.max(s.abs());
            }
        }
        worst
    }
}

/// Plug-in correlation counts for `s`-blocks of `sequences` against a
/// conditioner value per sample. `base` is the current alphabet size.
pub fn estimate_correlations(
    sequences: &[Vec<Symbol>],
    cond_values: &[Symbol],
    conditioner: Conditioner,
    v_cond: usize,
    base: usize,
    s: usize,
    positions: Vec<usize>,
) -> Result<EmpiricalCorrelations> {
    if sequences.is_empty() || sequences.len() != cond_values.len() {
        return Err(RhmError::InvalidParameter("empty or mismatched sample arrays".into()));
    }
    let tuple_space = base.checked_pow(s as u32).filter(|&x| x <= MAX_DENSE_SPACE).ok_or_else(
        || RhmError::BudgetExceeded { required: u128::MAX, budget: MAX_DENSE_SPACE as u128 },
    )?;
    let n = sequences.len();
    let width = sequences[0].len() / s;
    if positions.iter().any(|&j| j >= width) {
        return Err(RhmError::InvalidParameter("block position out of range".into()));
    }
    let mut counts = vec![vec![0.0; v_cond * tuple_space]; positions.len()];
    let mut tuple_counts = vec![vec![0.0; tuple_space]; positions.len()];
    let mut cond_counts = vec![0.0; v_cond];
    for (seq, &cv) in sequences.iter().zip(cond_values) {
        cond_counts[cv as usize] += 1.0;
        for (i, &j) in positions.iter().enumerate() {
            let code = encode_tuple(base, &seq[j * s..(j + 1) * s]);
            counts[i][cv as usize * tuple_space + code] += 1.0;
            tuple_counts[i][code] += 1.0;
        }
    }
    Ok(EmpiricalCorrelations {
        conditioner,
        v_cond,
        base,
        tuple_space,
        n,
        positions,
        counts,
        tuple_counts,
        cond_counts,
    })
}

/// One inferred level: tuple -> cluster assignments plus the empirical
/// frequency of each member within its cluster.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InferredLayer {
    pub assign: HashMap<usize, usize>,
    pub n_clusters: usize,
    /// `members[cluster]` = (tuple code, within-cluster empirical frequency)
    pub members: Vec<Vec<(usize, f64)>>,
    /// Data-weighted fraction of observed blocks whose tuple was assigned.
    pub coverage: f64,
    /// Fewer detected tuples than target clusters, or no detections at all.
    pub partial: bool,
}

/// Detection-gated agglomerative clustering of correlation profiles.
///
/// Tuples pass the gate when their energy exceeds `TAU` times the null
/// expectation; profiles are direction-normalized (correlation rows of
/// sibling tuples are parallel, scaled by the rule probability) and merged
/// by average-linkage cosine until similarity drops below `MERGE_COS`.
/// Borderline tuples then attach to the nearest cluster direction. Ties
/// break on the lexicographically smallest member tuple.
pub fn infer_layer(corr: &EmpiricalCorrelations, v_target: usize) -> InferredLayer {
    let gate = TAU * corr.null_energy();
    let observed = corr.observed_codes();
    let mut detected: Vec<usize> = observed.iter().copied().filter(|&c| corr.energy(c) > gate).collect();
    detected.sort_unstable();
    let mut assign: HashMap<usize, usize> = HashMap::new();
    let mut n_clusters = 0;
    if !detected.is_empty() {
        let profiles: Vec<Vec<f64>> = detected
            .iter()
            .map(|&c| {
                let mut p = corr.profile(c);
                let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for x in p.iter_mut() {
                        *x /= norm;
                    }
                }
                p
            })
            .collect();
        let labels = average_linkage(&profiles, &detected, MERGE_COS);
        n_clusters = labels.iter().max().map(|&x| x + 1).unwrap_or(0);
        for (i, &code) in detected.iter().enumerate() {
            assign.insert(code, labels[i]);
        }
        // anchor pass for borderline tuples
        let dim = profiles[0].len();
        let mut anchors = vec![vec![0.0; dim]; n_clusters];
        for (i, &code) in detected.iter().enumerate() {
            let w = corr.energy(code).sqrt();
            for (a, x) in anchors[labels[i]].iter_mut().zip(&profiles[i]) {
                *a += w * x;
            }
        }
        for a in anchors.iter_mut() {
            let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in a.iter_mut() {
                    *x /= norm;
                }
            }
        }
        for &code in &observed {
            if assign.contains_key(&code) {
                continue;
            }
            let q = corr.energy(code);
            if q <= ANCHOR_ENERGY_FRAC * gate || q > gate {
                continue;
            }
            let mut p = corr.profile(code);
            let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            for x in p.iter_mut() {
                *x /= norm;
            }
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            let mut second = f64::NEG_INFINITY;
            for (ci, a) in anchors.iter().enumerate() {
                let cos: f64 = a.iter().zip(&p).map(|(x, y)| x * y).sum();
                if cos > best.0 {
                    second = best.0;
                    best = (cos, ci);
                } else if cos > second {
                    second = cos;
                }
            }
            if best.0 >= ANCHOR_COS && best.0 - second >= ANCHOR_MARGIN {
                assign.insert(code, best.1);
            }
        }
    }
    // members with within-cluster frequencies (pooled over positions)
    let mut members: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_clusters];
    let mut cluster_mass = vec![0.0; n_clusters];
    let mut assigned_mass = 0.0;
    let mut total_mass = 0.0;
    for &code in &observed {
        let mass: f64 = (0..corr.positions.len()).map(|i| corr.tuple_count(i, code)).sum();
        total_mass += mass;
        if let Some(&c) = assign.get(&code) {
            assigned_mass += mass;
            members[c].push((code, mass));
            cluster_mass[c] += mass;
        }
    }
    for (c, list) in members.iter_mut().enumerate() {
        for entry in list.iter_mut() {
            entry.1 /= cluster_mass[c].max(1.0);
        }
        list.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    }
    let coverage = if total_mass > 0.0 { assigned_mass / total_mass } else { 0.0 };
    let partial = n_clusters != v_target || detected.is_empty();
    InferredLayer { assign, n_clusters, members, coverage, partial }
}

/// Deterministic average-linkage on cosine similarity; merging stops below
/// `threshold`. Returns cluster labels compacted in order of the smallest
/// member code.
fn average_linkage(profiles: &[Vec<f64>], codes: &[usize], threshold: f64) -> Vec<usize> {
    let n = profiles.len();
    let mut dots = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = profiles[i].iter().zip(&profiles[j]).map(|(a, b)| a * b).sum();
            dots[i][j] = d;
            dots[j][i] = d;
        }
    }
    #[derive(Clone)]
    struct Cluster {
        items: Vec<usize>,
        min_code: usize,
    }
    let mut clusters: Vec<Option<Cluster>> =
        (0..n).map(|i| Some(Cluster { items: vec![i], min_code: codes[i] })).collect();
    // S[a][b] = total pairwise dot between clusters a and b
    let mut sim = dots.clone();
    loop {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..n {
            let Some(ca) = &clusters[a] else { continue };
            for b in (a + 1)..n {
                let Some(cb) = &clusters[b] else { continue };
                let avg = sim[a][b] / (ca.items.len() * cb.items.len()) as f64;
                let key = if ca.min_code <= cb.min_code {
                    (ca.min_code, cb.min_code)
                } else {
                    (cb.min_code, ca.min_code)
                };
                let better = match best {
                    None => true,
                    Some((bavg, k0, k1, _, _)) => {
                        avg > bavg + 1e-15
                            || ((avg - bavg).abs() <= 1e-15 && (key.0, key.1) < (k0, k1))
                    }
                };
                if better {
                    best = Some((avg, key.0, key.1, a, b));
                }
            }
        }
        match best {
            Some((avg, _, _, a, b)) if avg >= threshold => {
                let cb = clusters[b].take().unwrap();
                for c in 0..n {
                    if c != a && clusters[c].is_some() {
                        sim[a][c] += sim[b][c];
                        sim[c][a] = sim[a][c];
                    }
                }
                let ca = clusters[a].as_mut().unwrap();
                ca.items.extend(cb.items);
                ca.min_code = ca.min_code.min(cb.min_code);
            }
            _ => break,
        }
    }
    let mut finals: Vec<Cluster> = clusters.into_iter().flatten().collect();
    finals.sort_unstable_by_key(|c| c.min_code);
    let mut labels = vec![0usize; n];
    for (ci, c) in finals.iter().enumerate() {
        for &i in &c.items {
            labels[i] = ci;
        }
    }
    labels
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Classification,
    NextToken,
}

/// The learner's reconstruction: per-level tuple -> cluster maps plus the
/// task head (label lookup for classification, per-depth context counts for
/// next-token prediction).
#[derive(Clone, Debug)]
pub struct InferredGrammar {
    pub task: Task,
    pub params: RhmParams,
    pub levels: Vec<InferredLayer>,
    /// Alphabet size entering each inferred level (level 1 sees `v`).
    pub bases: Vec<usize>,
    /// Classification head: rewritten top tuple -> majority label.
    pub top_map: HashMap<usize, Symbol>,
    pub top_base: usize,
    /// Next-token head: per window level, context state -> token counts.
    pub ngram_counts: Vec<HashMap<u64, Vec<f64>>>,
    pub partial: bool,
}

impl InferredGrammar {
    pub fn coverage(&self, level: usize) -> f64 {
        self.levels[level - 1].coverage
    }
}

fn fnv_state(parts: &[i64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &p in parts {
        for b in p.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Rewrites every `s`-block through the assignment; unassigned blocks become
/// -1 and poison their ancestors.
fn rewrite(seqs: &[Vec<i64>], assign: &HashMap<usize, usize>, base: usize, s: usize) -> Vec<Vec<i64>> {
    seqs.iter()
        .map(|seq| {
            seq.chunks(s)
                .map(|block| {
                    if block.iter().any(|&x| x < 0) {
                        return -1;
                    }
                    let code = block.iter().fold(0usize, |acc, &x| acc * base + x as usize);
                    assign.get(&code).map(|&c| c as i64).unwrap_or(-1)
                })
                .collect()
        })
        .collect()
}

/// Bottom-up reconstruction: infer a layer from correlations, rewrite every
/// sample, and repeat; the head is learned on the rewritten samples.
pub fn reconstruct(ds: &Dataset, task: Task) -> Result<InferredGrammar> {
    let p = ds.params;
    if ds.records.is_empty() {
        return Ok(InferredGrammar {
            task,
            params: p,
            levels: Vec::new(),
            bases: Vec::new(),
            top_map: HashMap::new(),
            top_base: p.v,
            ngram_counts: vec![HashMap::new(); p.depth],
            partial: true,
        });
    }
    let s = p.s;
    let cond_values: Vec<Symbol> = match task {
        Task::Classification => ds.records.iter().map(|r| r.label).collect(),
        Task::NextToken => ds.records.iter().map(|r| *r.tokens.last().unwrap()).collect(),
    };
    let mut seqs: Vec<Vec<i64>> = ds
        .records
        .iter()
        .map(|r| r.tokens.iter().map(|&t| t as i64).collect())
        .collect();
    if task == Task::NextToken {
        // the conditioner token is not part of the clustered context
        for seq in seqs.iter_mut() {
            seq.pop();
        }
    }
    let mut levels = Vec::new();
    let mut bases = Vec::new();
    let mut base = p.v;
    let mut partial = false;
    for _level in 1..p.depth {
        let width = match task {
            Task::Classification => seqs[0].len() / s,
            // exclude the trailing partial block
            Task::NextToken => (seqs[0].len() + 1) / s - 1,
        };
        if width == 0 {
            break;
        }
        let positions: Vec<usize> = (0..width).collect();
        // samples where every used block is intact
        let mut used_seqs = Vec::new();
        let mut used_cond = Vec::new();
        for (seq, &cv) in seqs.iter().zip(&cond_values) {
            if seq[..width * s].iter().all(|&x| x >= 0) {
                used_seqs.push(seq[..width * s].iter().map(|&x| x as Symbol).collect::<Vec<_>>());
                used_cond.push(cv);
            }
        }
        if used_seqs.is_empty() {
            partial = true;
            break;
        }
        let corr = estimate_correlations(
            &used_seqs,
            &used_cond,
            match task {
                Task::Classification => Conditioner::Label,
                Task::NextToken => Conditioner::LastToken,
            },
            p.v,
            base,
            s,
            positions,
        )?;
        let layer = infer_layer(&corr, p.v);
        partial |= layer.partial;
        let n_clusters = layer.n_clusters.max(1);
        match task {
            Task::Classification => {
                seqs = rewrite(&seqs, &layer.assign, base, s);
            }
            Task::NextToken => {
                // keep the trailing partial block raw alongside rewritten blocks
                let complete = rewrite(
                    &seqs.iter().map(|q| q[..width * s].to_vec()).collect::<Vec<_>>(),
                    &layer.assign,
                    base,
                    s,
                );
                seqs = complete
                    .into_iter()
                    .zip(seqs.iter())
                    .map(|(mut c, orig)| {
                        c.extend_from_slice(&orig[width * s..]);
                        c
                    })
                    .collect();
            }
        }
        levels.push(layer);
        bases.push(base);
        base = n_clusters;
    }

    let mut top_map = HashMap::new();
    let mut ngram_counts = vec![HashMap::<u64, Vec<f64>>::new(); p.depth];
    match task {
        Task::Classification => {
            // majority vote over fully rewritten samples
            let mut votes: HashMap<usize, Vec<f64>> = HashMap::new();
            for (seq, &y) in seqs.iter().zip(&cond_values) {
                if seq.iter().any(|&x| x < 0) {
                    continue;
                }
                let code = seq.iter().fold(0usize, |acc, &x| acc * base + x as usize);
                votes.entry(code).or_insert_with(|| vec![0.0; p.v])[y as usize] += 1.0;
            }
            for (code, counts) in votes {
                let best = counts
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .unwrap()
                    .0;
                top_map.insert(code, best as Symbol);
            }
        }
        Task::NextToken => {
            for (rec, seq) in ds.records.iter().zip(&seqs_for_ngram(&ds.records, &levels, &bases, p)) {
                let t = *rec.tokens.last().unwrap() as usize;
                for (ell, state) in seq.iter().enumerate() {
                    if let Some(key) = state {
                        let row = ngram_counts[ell]
                            .entry(*key)
                            .or_insert_with(|| vec![0.0; p.v]);
                        row[t] += 1.0;
                    }
                }
            }
        }
    }
    Ok(InferredGrammar {
        task,
        params: p,
        levels,
        bases,
        top_map,
        top_base: base,
        ngram_counts,
        partial,
    })
}

/// Spine states per window level for each record: `states[ell-1]` is the
/// hashed `(u_0, .., u_{ell-1})` constraint chain or `None` when a needed
/// block is unassigned.
fn seqs_for_ngram(
    records: &[crate::sample::DatasetRecord],
    levels: &[InferredLayer],
    bases: &[usize],
    p: RhmParams,
) -> Vec<Vec<Option<u64>>> {
    records
        .iter()
        .map(|rec| spine_states(&rec.tokens[..rec.tokens.len() - 1], levels, bases, p))
        .collect()
}

fn spine_states(
    context: &[Symbol],
    levels: &[InferredLayer],
    bases: &[usize],
    p: RhmParams,
) -> Vec<Option<u64>> {
    let s = p.s;
    let mut out = Vec::with_capacity(p.depth);
    let mut seq: Vec<i64> = context.iter().map(|&t| t as i64).collect();
    let mut parts: Vec<i64> = Vec::new();
    let mut valid = true;
    for ell in 1..=p.depth {
        // trailing partial block at this stage
        let tail = &seq[seq.len() - (s - 1)..];
        if tail.iter().any(|&x| x < 0) {
            valid = false;
        }
        parts.push(ell as i64);
        parts.extend_from_slice(tail);
        out.push(if valid { Some(fnv_state(&parts)) } else { None });
        if ell == p.depth {
            break;
        }
        // collapse complete blocks for the next stage
        let width = (seq.len() + 1) / s - 1;
        if ell > levels.len() {
            valid = false;
            seq = vec![-1; width];
            continue;
        }
        let layer = &levels[ell - 1];
        let base = bases[ell - 1];
        let mut next = Vec::with_capacity(width);
        for block in seq[..width * s].chunks(s) {
            if block.iter().any(|&x| x < 0) {
                next.push(-1);
                continue;
            }
            let code = block.iter().fold(0usize, |acc, &x| acc * base + x as usize);
            next.push(layer.assign.get(&code).map(|&c| c as i64).unwrap_or(-1));
        }
        seq = next;
    }
    out
}

/// Classify by bottom-up parsing with the inferred clusters; `None` when any
/// block is unresolved or the rewritten top tuple was never seen (abstain).
pub fn classify(ig: &InferredGrammar, tokens: &[Symbol]) -> Option<Symbol> {
    let s = ig.params.s;
    let mut seq: Vec<i64> = tokens.iter().map(|&t| t as i64).collect();
    let mut base = ig.params.v;
    for layer in &ig.levels {
        let seqs = rewrite(&[seq], &layer.assign, base, s);
        seq = seqs.into_iter().next().unwrap();
        if seq.iter().any(|&x| x < 0) {
            return None;
        }
        base = layer.n_clusters.max(1);
    }
    let code = seq.iter().fold(0usize, |acc, &x| acc * ig.top_base + x as usize);
    ig.top_map.get(&code).copied()
}

pub struct Prediction {
    pub dist: Vec<f64>,
    /// Deepest window level whose state resolved; 0 means uniform fallback.
    pub level_used: usize,
}

/// Predict the last token from the deepest resolvable context state, with a
/// vanishing-pseudocount smoothed plug-in conditional; falls back to the
/// uniform distribution when nothing resolves.
pub fn predict_next(ig: &InferredGrammar, context: &[Symbol]) -> Prediction {
    let v = ig.params.v;
    let states = spine_states(context, &ig.levels, &ig.bases, ig.params);
    for ell in (1..=ig.params.depth).rev() {
        if let Some(key) = states[ell - 1] {
            if let Some(row) = ig.ngram_counts[ell - 1].get(&key) {
                let n: f64 = row.iter().sum();
                if n > 0.0 {
                    let eps = 1.0 / (n + 1.0);
                    let dist = row
                        .iter()
                        .map(|&c| (c + eps / v as f64) / (n + eps))
                        .collect();
                    return Prediction { dist, level_used: ell };
                }
            }
        }
    }
    Prediction { dist: vec![1.0 / v as f64; v], level_used: 0 }
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

fn trial_seed(master: u64, grid_idx: usize, trial: usize) -> u64 {
    master
        .wrapping_add((grid_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((trial as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
}

fn make_dataset(g: &crate::grammar::GrammarInstance, n: usize, seed: u64) -> Dataset {
    crate::sample::sample_dataset(g, n, seed, false, crate::sample::Split::Train)
}

/// Empirical classification learning curve: fresh grammar realization and
/// training set per (grid point, trial); abstentions count as errors.
pub fn learning_curve_experiment(
    params: &RhmParams,
    grid: &[usize],
    n_trials: usize,
    n_test: usize,
    master_seed: u64,
) -> Result<CurveSeries> {
    params.validate()?;
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|i| (0..n_trials).map(move |t| (i, t)))
        .collect();
    let errs: Vec<(usize, f64)> = jobs
        .into_par_iter()
        .map(|(i, t)| -> Result<(usize, f64)> {
            let seed = trial_seed(master_seed, i, t);
            let gp = params.with_seed(seed);
            let g = build_grammar(&gp)?;
            let train = make_dataset(&g, grid[i], seed ^ 0x7261_696e);
            let ig = reconstruct(&train, Task::Classification)?;
            let mut wrong = 0usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7465_7374);
            for _ in 0..n_test {
                let der = sample_derivation(&g, &mut rng);
                match classify(&ig, der.tokens()) {
                    Some(y) if y == der.label() => {}
                    _ => wrong += 1,
                }
            }
            Ok((i, wrong as f64 / n_test as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_point: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    for (i, e) in errs {
        per_point[i].push(e);
    }
    let points = grid
        .iter()
        .zip(&per_point)
        .map(|(&pp, es)| {
            let mean = es.iter().sum::<f64>() / es.len() as f64;
            let se = if es.len() > 1 {
                let var =
                    es.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (es.len() - 1) as f64;
                Some((var / es.len() as f64).sqrt())
            } else {
                None
            };
            CurvePoint { p: pp as f64, value: mean, se }
        })
        .collect();
    CurveSeries::new(
        format!(
            "class-empirical v{} m{} s{} L{}",
            params.v, params.m, params.s, params.depth
        ),
        Provenance::Empirical,
        ValueKind::ErrorRate,
        points,
    )
}

/// Empirical next-token loss curve (cross-entropy in nats on held-out data).
pub fn next_token_experiment(
    params: &RhmParams,
    grid: &[usize],
    n_trials: usize,
    n_test: usize,
    master_seed: u64,
) -> Result<CurveSeries> {
    params.validate()?;
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|i| (0..n_trials).map(move |t| (i, t)))
        .collect();
    let losses: Vec<(usize, f64)> = jobs
        .into_par_iter()
        .map(|(i, t)| -> Result<(usize, f64)> {
            let seed = trial_seed(master_seed, i, t);
            let gp = params.with_seed(seed);
            let g = build_grammar(&gp)?;
            let train = make_dataset(&g, grid[i], seed ^ 0x7261_696e);
            let ig = reconstruct(&train, Task::NextToken)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7465_7374);
            let mut loss = 0.0;
            for _ in 0..n_test {
                let der = sample_derivation(&g, &mut rng);
                let toks = der.tokens();
                let pred = predict_next(&ig, &toks[..toks.len() - 1]);
                loss -= pred.dist[toks[toks.len() - 1] as usize].ln();
            }
            Ok((i, loss / n_test as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_point: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    for (i, e) in losses {
        per_point[i].push(e);
    }
    let points = grid
        .iter()
        .zip(&per_point)
        .map(|(&pp, es)| {
            let mean = es.iter().sum::<f64>() / es.len() as f64;
            let se = if es.len() > 1 {
                let var =
                    es.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (es.len() - 1) as f64;
                Some((var / es.len() as f64).sqrt())
            } else {
                None
            };
            CurvePoint { p: pp as f64, value: mean, se }
        })
        .collect();
    CurveSeries::new(
        format!(
            "next-empirical v{} m{} s{} L{}",
            params.v, params.m, params.s, params.depth
        ),
        Provenance::Empirical,
        ValueKind::Loss,
        points,
    )
}
