//! Random Hierarchy Model toolkit: grammar construction with power-law rule
//! distributions, sampling and deterministic bottom-up parsing, exact
//! probabilistic oracles (marginals, correlations, window conditionals and
//! cross-entropies, compatibility sets), closed-form learning-curve theory,
//! Monte Carlo sweeps over grammar realizations, and a correlation-based
//! learner that reconstructs the hidden hierarchy from samples.

pub mod dataset_io;
pub mod dist;
pub mod error;
pub mod grammar;
pub mod learner;
pub mod mc;
pub mod oracle;
pub mod params;
pub mod sample;
pub mod series;
pub mod theory;

pub use dist::{make_distribution, DistKind, RuleDistribution};
pub use error::{Result, RhmError};
pub use grammar::{
    build_grammar, deserialize_grammar, grammar_hash, serialize_grammar, GrammarInstance,
    ProductionRule, Symbol,
};
pub use params::{RhmParams, ZipfExponent};
pub use sample::{
    parse_sequence, sample_dataset, sample_derivation, sequence_log_prob, Dataset, Derivation,
    Parse, SeqLogProb, Sequence, Split,
};
