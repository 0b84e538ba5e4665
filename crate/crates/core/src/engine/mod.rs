//! Closed-form variance-optimal hedging: coefficients, strategy, value
//! function, Z-process and price.

pub mod coefficients;
pub mod report;
pub mod strategy;
pub mod value;

pub use coefficients::{compute_coefficients, CoefficientTable, EngineConfig, Mode, DEFAULT_EPS_DEG};
pub use report::{hedge_report, hedge_report_with, Capital, HedgeReport, ReportDiagnostics};
pub use strategy::{gains, objective, optimal_strategy};
pub use value::{path_factors, response_process, value_function, z_process, ValueQuadratic};
