//! Non-degeneracy diagnostic: `(E[dS | F])^2 / E[dS^2 | F]` per node.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::ScenarioTree;

/// The condition is flagged as failing when the supremum reaches `1 - tol`.
pub const DEFAULT_ND_TOL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NdRatio {
    pub node_id: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NdDiagnostic {
    pub ratios: Vec<NdRatio>,
    pub sup_ratio: f64,
    pub tolerance: f64,
    pub nd_fails: bool,
}

pub fn nd_diagnostic(tree: &ScenarioTree) -> Result<NdDiagnostic> {
    nd_diagnostic_with_tol(tree, DEFAULT_ND_TOL)
}

pub fn nd_diagnostic_with_tol(tree: &ScenarioTree, tol: f64) -> Result<NdDiagnostic> {
    if tree.num_assets() != 1 {
        return Err(Error::Unsupported(format!(
            "the non-degeneracy diagnostic is defined for one asset, tree has {}",
            tree.num_assets()
        )));
    }
    let ratios: Vec<NdRatio> = tree
        .non_terminal()
        .map(|u| {
            let (m1, m2) = tree.children(u).iter().fold((0.0, 0.0), |(m1, m2), &c| {
                let p = tree.node(c).cond_prob;
                let ds = tree.increment(c)[0];
                (m1 + p * ds, m2 + p * ds * ds)
            });
            let ratio = if m2 == 0.0 { 0.0 } else { m1 * m1 / m2 };
            NdRatio { node_id: u, ratio }
        })
        .collect();
    let sup_ratio = ratios.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(NdDiagnostic { nd_fails: sup_ratio >= 1.0 - tol, ratios, sup_ratio, tolerance: tol })
}
