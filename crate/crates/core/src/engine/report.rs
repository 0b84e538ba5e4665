use serde::Serialize;

use crate::engine::coefficients::{compute_coefficients, CoefficientTable, EngineConfig};
use crate::engine::strategy::{gains, optimal_strategy};
use crate::engine::value::{path_factors, response_process, value_function, z_process, ValueQuadratic};
use crate::error::Result;
use crate::tree::{NodeProcess, PredictableProcess, ScenarioTree};
use crate::verify::nd::{nd_diagnostic, NdDiagnostic};

/// Initial capital for a hedging run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Capital {
    Fixed(f64),
    /// Resolves to the variance-optimal price `c*`.
    Optimal,
}

impl std::str::FromStr for Capital {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("optimal") {
            return Ok(Capital::Optimal);
        }
        s.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Capital::Fixed)
            .ok_or_else(|| crate::Error::Domain(format!("capital must be a real or 'optimal', got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDiagnostics {
    pub degenerate_nodes: Vec<usize>,
    /// Matrix mode only: nodes whose Gram matrix has rank in `1..M`.
    pub rank_deficient_nodes: Vec<usize>,
    /// Single-asset trees only.
    pub nd: Option<NdDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HedgeReport {
    pub capital: f64,
    pub strategy: PredictableProcess,
    pub gains: NodeProcess,
    /// `H - c - G` evaluated through the closed-form representation.
    pub residuals: NodeProcess,
    pub z: NodeProcess,
    pub z_tilde: NodeProcess,
    pub value: ValueQuadratic,
    pub diagnostics: ReportDiagnostics,
    #[serde(skip)]
    pub coefficients: CoefficientTable,
}

pub fn hedge_report(tree: &ScenarioTree, capital: Capital, config: &EngineConfig) -> Result<HedgeReport> {
    let coeffs = compute_coefficients(tree, config)?;
    hedge_report_with(tree, coeffs, capital)
}

pub fn hedge_report_with(tree: &ScenarioTree, coeffs: CoefficientTable, capital: Capital) -> Result<HedgeReport> {
    let value = value_function(tree, &coeffs)?;
    let c = match capital {
        Capital::Fixed(c) => c,
        Capital::Optimal => value.c_star,
    };
    let strategy = optimal_strategy(tree, &coeffs, c)?;
    let g = gains(tree, &strategy);
    let pi = path_factors(tree, &coeffs);
    let r = response_process(tree, &coeffs);
    let residuals = NodeProcess(tree.nodes().iter().map(|n| n.claim - r[n.id] - c * pi[n.id]).collect());
    let (z, z_tilde) = z_process(tree, &coeffs)?;
    let m = tree.num_assets();
    let rank_deficient_nodes = tree
        .non_terminal()
        .filter(|&u| coeffs.rank[u] > 0 && coeffs.rank[u] < m)
        .collect();
    let nd = if m == 1 { Some(nd_diagnostic(tree)?) } else { None };
    Ok(HedgeReport {
        capital: c,
        strategy,
        gains: g,
        residuals,
        z,
        z_tilde,
        value,
        diagnostics: ReportDiagnostics { degenerate_nodes: coeffs.degenerate_nodes(), rank_deficient_nodes, nd },
        coefficients: coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_binomial, gen_schachermayer, HorizonExample};

    #[test]
    fn schachermayer_at_zero_capital() {
        let tree = gen_schachermayer(4, false).unwrap();
        let report = hedge_report(&tree, Capital::Fixed(0.0), &EngineConfig::default()).unwrap();
        assert!((report.strategy.get(0)[0] - 1.0).abs() < 1e-12);
        assert_eq!(report.gains[0], 0.0);
        for v in 0..tree.len() {
            let direct = tree.node(v).claim - report.capital - report.gains[v];
            assert!((report.residuals[v] - direct).abs() < 1e-10 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn optimal_capital_resolves_to_price() {
        let ex = HorizonExample::default();
        let report = hedge_report(&ex.tree().unwrap(), Capital::Optimal, &EngineConfig::default()).unwrap();
        assert!((report.capital - ex.a[0]).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_report_is_all_zero() {
        let tree = gen_binomial(2, 1.1, 0.9, 0.5, 1.0).unwrap();
        let tree = tree.with_weights(&[0.0; 7]).unwrap();
        let report = hedge_report(&tree, Capital::Optimal, &EngineConfig::default()).unwrap();
        assert_eq!(report.capital, 0.0);
        assert!(report.strategy.iter().all(|(_, x)| x[0] == 0.0));
        assert!(report.z.values().iter().all(|&z| z == 0.0));
        assert_eq!(report.value.v_star, 0.0);
    }

    #[test]
    fn capital_parsing() {
        assert_eq!("optimal".parse::<Capital>().unwrap(), Capital::Optimal);
        assert_eq!(" -1.5 ".parse::<Capital>().unwrap(), Capital::Fixed(-1.5));
        assert!("inf".parse::<Capital>().is_err());
        assert!("x".parse::<Capital>().is_err());
    }
}
