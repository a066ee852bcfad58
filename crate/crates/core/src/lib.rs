//! Meta-evaluation of automatic MT metrics against human judgments.
//!
//! Pairwise system preferences are expressed as one-tailed paired
//! permutation-test p-values, computed for every system pair from a single
//! shared cache of sign flips. Metrics are scored by soft pairwise accuracy
//! (SPA, mean of `1 - |p_h - p_m|`), pairwise accuracy (PA, same on binarized
//! p-values) and Kendall's τ (`2 PA - 1`). On top of that the crate provides
//! metric-vs-metric significance with greedy clustering, bootstrap intervals
//! over segment sample size, and ranking stability under system ablation.
//!
//! Score arithmetic is generic over [`Score`]; [`ScoreMatrixF64`] and friends
//! are the concrete types used when loading data from disk.

pub mod context;
pub mod data;
pub mod error;
pub mod meta;
pub mod perm;
pub mod rng;
pub mod robustness;
pub mod scalar;
pub mod significance;
pub mod synthetic;

pub use context::EvalContext;
pub use data::{
    load_eval_set, load_eval_set_with, write_eval_set, EvalSet, Orientation, OrientationMap,
    ScoreMatrix,
};
pub use error::{Error, Result};
pub use meta::{distinct_value_stats, kendall_from_pa, pa, spa, MetaKind, MetaScore};
pub use perm::{
    generate_sign_matrix, pairwise_p_values, project_systems, PValueMatrix, SignMatrix,
    SystemProjection,
};
pub use robustness::{
    bootstrap_ci, pearson_r, system_ablation_stability, BootstrapOptions, CIResult, StabilityResult,
};
pub use scalar::Score;
pub use significance::{
    greedy_clusters, perm_inputs_compare, significance_matrix, ClusterAssignment, MetricSigMatrix,
};

/// Exact rational scores, useful for pinning invariants without rounding.
pub type Rational = num_rational::Ratio<i64>;

pub type ScoreMatrixF64 = ScoreMatrix<f64>;
pub type ScoreMatrixF32 = ScoreMatrix<f32>;
pub type ScoreMatrixRational = ScoreMatrix<Rational>;

pub type EvalSetF64 = EvalSet<f64>;
pub type EvalSetF32 = EvalSet<f32>;
pub type EvalSetRational = EvalSet<Rational>;

pub type SystemProjectionF64 = SystemProjection<f64>;
pub type SystemProjectionRational = SystemProjection<Rational>;

/// Version string embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
