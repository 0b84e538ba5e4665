//! Variance-optimal hedging and quadratic pricing of sequential claims with
//! random weights on finite scenario trees.
//!
//! The closed-form engine ([`engine`]) runs one backward pass for the
//! coefficient processes and one forward pass for the strategy. The
//! [`verify`] module re-derives every result independently: a brute-force
//! least-squares minimizer over all predictable strategies and a battery of
//! pathwise identities.

// Negated comparisons are the NaN-rejecting form.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod generators;
pub mod horizon;
pub mod io;
pub mod linalg;
pub mod tree;
pub mod verify;

pub use engine::{
    compute_coefficients, gains, hedge_report, objective, optimal_strategy, value_function, z_process, Capital,
    CoefficientTable, EngineConfig, HedgeReport, Mode, ValueQuadratic,
};
pub use error::{Error, Result};
pub use generators::{gen_binomial, gen_schachermayer, HorizonExample};
pub use horizon::{horizon_to_weights, RandomHorizon};
pub use io::{load_tree, load_tree_str, save_tree};
pub use tree::{Node, NodeProcess, PredictableProcess, ScenarioTree};
