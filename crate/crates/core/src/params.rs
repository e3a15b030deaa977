use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};

/// Zipf exponent `a`; `Infinity` is the one-rule limit (all mass on rank 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ZipfExponent {
    Finite(f64),
    Infinity,
}

/// Parameters of a Random Hierarchy Model instance.
///
/// Levels are numbered so that rules at level `l` (1..=depth) expand one
/// level-`l` symbol into `s` level-`(l-1)` symbols; level 0 symbols are the
/// observable tokens and level-`depth` symbols are the class labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhmParams {
    /// Vocabulary size at every level.
    pub v: usize,
    /// Production rules per nonterminal.
    pub m: usize,
    /// Branching factor (arity of every rule).
    pub s: usize,
    /// Number of rule levels `L`; input length is `s^L`.
    pub depth: usize,
    /// Level whose rules are Zipf-distributed (`None` = fully uniform RHM).
    pub zipf_layer: Option<usize>,
    /// Exponent for the Zipf layer; ignored when `zipf_layer` is `None`.
    pub zipf_exponent: Option<ZipfExponent>,
    /// Master seed; `build_grammar` is a pure function of the full params.
    pub seed: u64,
}

/// Tuple spaces are materialized as dense `v^s` tables in the oracles.
const MAX_TUPLE_SPACE: u128 = 1 << 24;

impl RhmParams {
    pub fn uniform(v: usize, m: usize, s: usize, depth: usize, seed: u64) -> Self {
        Self { v, m, s, depth, zipf_layer: None, zipf_exponent: None, seed }
    }

    pub fn zipf(v: usize, m: usize, s: usize, depth: usize, a: f64, seed: u64) -> Self {
        Self {
            v,
            m,
            s,
            depth,
            zipf_layer: Some(1),
            zipf_exponent: Some(ZipfExponent::Finite(a)),
            seed,
        }
    }

    pub fn with_zipf_layer(mut self, layer: usize) -> Self {
        self.zipf_layer = Some(layer);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Input sequence length `d = s^depth`.
    pub fn d(&self) -> usize {
        self.s.pow(self.depth as u32)
    }

    /// Size of the `s`-tuple space `v^s`.
    pub fn tuple_space(&self) -> usize {
        self.v.pow(self.s as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v == 0 || self.m == 0 {
            return Err(RhmError::InvalidParameter("v and m must be positive".into()));
        }
        if self.s < 2 {
            return Err(RhmError::InvalidParameter("branching factor s must be >= 2".into()));
        }
        if self.depth == 0 {
            return Err(RhmError::InvalidParameter("depth must be >= 1".into()));
        }
        if self.v > u16::MAX as usize {
            return Err(RhmError::InvalidParameter("v exceeds the u16 symbol range".into()));
        }
        let space = (self.v as u128).pow(self.s as u32);
        if space > MAX_TUPLE_SPACE {
            return Err(RhmError::InvalidParameter(format!(
                "tuple space v^s = {space} exceeds the supported bound {MAX_TUPLE_SPACE}"
            )));
        }
        let budget = self.v.pow(self.s as u32 - 1);
        if self.m > budget {
            return Err(RhmError::Infeasible { m: self.m, budget });
        }
        if let Some(layer) = self.zipf_layer {
            if layer == 0 || layer > self.depth {
                return Err(RhmError::InvalidParameter(format!(
                    "zipf_layer {layer} outside 1..={}",
                    self.depth
                )));
            }
            match self.zipf_exponent {
                None => {
                    return Err(RhmError::InvalidParameter(
                        "zipf_layer set but zipf_exponent missing".into(),
                    ))
                }
                Some(ZipfExponent::Finite(a)) if !(a > 0.0) => {
                    return Err(RhmError::InvalidParameter(format!(
                        "zipf exponent must be positive, got {a}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
