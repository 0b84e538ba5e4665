use crate::engine::coefficients::CoefficientTable;
use crate::error::{Error, Result};
use crate::tree::{dot, NodeProcess, PredictableProcess, ScenarioTree};

/// `xi*(u) = rho(u) - beta(u) (c + G(u))`, accumulated root-down.
pub fn optimal_strategy(tree: &ScenarioTree, coeffs: &CoefficientTable, capital: f64) -> Result<PredictableProcess> {
    coeffs.check_tree(tree)?;
    let m = tree.num_assets();
    let mut xi = PredictableProcess::zeros(tree, m);
    let mut gain = vec![0.0; tree.len()];
    for u in 0..tree.len() {
        if tree.is_terminal(u) {
            continue;
        }
        let level = capital + gain[u];
        let (b, r) = (coeffs.beta.get(u), coeffs.rho.get(u));
        let x = xi.get_mut(u);
        for k in 0..m {
            x[k] = r[k] - b[k] * level;
        }
        for &c in tree.children(u) {
            gain[c] = gain[u] + dot(xi.get(u), tree.increment(c));
        }
    }
    Ok(xi)
}

/// Self-financing gains `G(v) = G(parent) + xi(parent) . dS(v)`, `G(root) = 0`.
pub fn gains(tree: &ScenarioTree, strategy: &PredictableProcess) -> NodeProcess {
    assert!(strategy.matches(tree) && strategy.dim() == tree.num_assets(), "strategy does not fit the tree");
    let mut g = NodeProcess::zeros(tree.len());
    for v in 1..tree.len() {
        let parent = tree.node(v).parent.unwrap();
        g[v] = g[parent] + dot(strategy.get(parent), tree.increment(v));
    }
    g
}

/// `J(xi; c) = sum_v P(v) w(v) (H(v) - c - G(v))^2`.
pub fn objective(tree: &ScenarioTree, strategy: &PredictableProcess, capital: f64) -> f64 {
    let g = gains(tree, strategy);
    let prob = tree.path_probabilities();
    tree.nodes()
        .iter()
        .map(|n| {
            let e = n.claim - capital - g[n.id];
            prob[n.id] * n.weight * e * e
        })
        .sum()
}

pub(crate) fn check_strategy(tree: &ScenarioTree, strategy: &PredictableProcess) -> Result<()> {
    if !strategy.matches(tree) || strategy.dim() != tree.num_assets() {
        return Err(Error::Mismatch("strategy does not fit the tree".into()));
    }
    Ok(())
}
