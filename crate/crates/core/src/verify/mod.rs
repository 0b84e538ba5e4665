//! Independent verification of the engine.

pub mod arbitrage;
pub mod invariants;
pub mod nd;
pub mod oracle;
pub mod random;

pub use arbitrage::{check_arbitrage_witness, stop_tree, ArbitrageEvidence};
pub use invariants::{
    check_optimality_condition, product_identity_sides, run_invariant_battery, run_invariant_battery_with_coefficients,
    BatteryConfig, BatteryFailure, BatteryReport, OptimalityResiduals, DEFAULT_CHECK_TOL,
};
pub use nd::{nd_diagnostic, nd_diagnostic_with_tol, NdDiagnostic, NdRatio, DEFAULT_ND_TOL};
pub use oracle::{brute_force_optimum, LeastSquaresSystem, OracleSolution, DEFAULT_UNKNOWN_CAP};
pub use random::{random_battery, random_tree, random_trees, RandomTreeSpec};
