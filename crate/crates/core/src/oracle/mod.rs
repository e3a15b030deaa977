//! Exact probabilistic oracles for a fixed grammar instance: marginals,
//! label/token correlations, window conditionals and cross-entropies, and
//! compatibility sets, plus brute-force reference implementations.

pub mod correlation;
pub mod exhaustive;
pub mod marginal;
pub mod spine;

pub use correlation::{
    class_correlation, class_correlation_table, factorization_discrepancy, lca_level,
    token_correlation, token_correlation_table, CorrelationKind, CorrelationTable,
};
pub use marginal::{child_matrix, conditional_marginal, level_marginal, rightmost_marginal};
pub use spine::{
    compatibility_set, entropy_ladder, mean_compat_size, window_conditional,
    window_cross_entropy, window_cross_entropy_budget, CompatOutcome, CompatibilitySet,
    Conditional, EntropyLadder,
};
