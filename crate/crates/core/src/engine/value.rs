//! Value function `V(c) = a c^2 - 2 b c + d`, the Z-process and the
//! variance-optimal price `c* = b / a`.

use serde::Serialize;

use crate::engine::coefficients::{CoefficientTable, DEFAULT_EPS_DEG};
use crate::error::Result;
use crate::tree::{dot, NodeProcess, ScenarioTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueQuadratic {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub c_star: f64,
    pub v_star: f64,
}

impl ValueQuadratic {
    pub fn from_coefficients(a: f64, b: f64, d: f64, scale: f64) -> Self {
        let c_star = if a.abs() <= DEFAULT_EPS_DEG * scale.max(1.0) { 0.0 } else { b / a };
        let mut q = Self { a, b, d, c_star, v_star: 0.0 };
        q.v_star = q.eval(c_star);
        q
    }

    pub fn eval(&self, capital: f64) -> f64 {
        self.a * capital * capital - 2.0 * self.b * capital + self.d
    }
}

/// Running product `prod_{edges root -> v} (1 - beta . dS)`; 1 at the root.
pub fn path_factors(tree: &ScenarioTree, coeffs: &CoefficientTable) -> NodeProcess {
    let mut pi = NodeProcess::zeros(tree.len());
    pi[0] = 1.0;
    for v in 1..tree.len() {
        let parent = tree.node(v).parent.unwrap();
        pi[v] = pi[parent] * coeffs.factor[v];
    }
    pi
}

/// `R(v) = (1 - beta . dS) R(parent) + rho . dS`, `R(root) = 0`: the hedge
/// proceeds of the zero-capital optimal strategy.
pub fn response_process(tree: &ScenarioTree, coeffs: &CoefficientTable) -> NodeProcess {
    let mut r = NodeProcess::zeros(tree.len());
    for v in 1..tree.len() {
        let parent = tree.node(v).parent.unwrap();
        r[v] = coeffs.factor[v] * r[parent] + dot(coeffs.rho.get(parent), tree.increment(v));
    }
    r
}

/// `Z(v) = w(v) prod (1 - beta . dS)` and its normalization by `sum E[Z]`.
pub fn z_process(tree: &ScenarioTree, coeffs: &CoefficientTable) -> Result<(NodeProcess, NodeProcess)> {
    coeffs.check_tree(tree)?;
    let pi = path_factors(tree, coeffs);
    let z = NodeProcess(tree.nodes().iter().map(|n| n.weight * pi[n.id]).collect());
    let prob = tree.path_probabilities();
    let total: f64 = (0..tree.len()).map(|v| prob[v] * z[v]).sum();
    let abs_total: f64 = (0..tree.len()).map(|v| prob[v] * z[v].abs()).sum();
    let z_tilde = if total.abs() <= DEFAULT_EPS_DEG * abs_total.max(1.0) {
        NodeProcess::zeros(tree.len())
    } else {
        NodeProcess(z.0.iter().map(|x| x / total).collect())
    };
    Ok((z, z_tilde))
}

pub fn value_function(tree: &ScenarioTree, coeffs: &CoefficientTable) -> Result<ValueQuadratic> {
    let (z, _) = z_process(tree, coeffs)?;
    let r = response_process(tree, coeffs);
    let prob = tree.path_probabilities();
    let (mut a, mut b, mut d, mut scale) = (0.0, 0.0, 0.0, 0.0);
    for n in tree.nodes() {
        let v = n.id;
        a += prob[v] * z[v];
        b += prob[v] * z[v] * n.claim;
        let e = n.claim - r[v];
        d += prob[v] * n.weight * e * e;
        scale += prob[v] * z[v].abs();
    }
    Ok(ValueQuadratic::from_coefficients(a, b, d, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::coefficients::{compute_coefficients, EngineConfig};
    use crate::engine::strategy::{objective, optimal_strategy};
    use crate::generators::{gen_binomial, gen_schachermayer, HorizonExample};
    use crate::horizon::{horizon_to_weights, RandomHorizon};

    #[test]
    fn horizon_example_price() {
        let ex = HorizonExample::default();
        let tree = ex.tree().unwrap();
        let coeffs = compute_coefficients(&tree, &EngineConfig::default()).unwrap();
        let (z, _) = z_process(&tree, &coeffs).unwrap();
        assert_eq!(z[0], ex.p_up);
        for v in 1..tree.len() {
            assert!(z[v].abs() < 1e-12, "Z at node {v} = {}", z[v]);
        }
        let q = value_function(&tree, &coeffs).unwrap();
        assert!((q.a - ex.p_up).abs() < 1e-12);
        assert!((q.c_star - ex.a[0]).abs() < 1e-12);
    }

    #[test]
    fn schachermayer_terminal_z_vanishes() {
        let tree = gen_schachermayer(8, false).unwrap();
        let coeffs = compute_coefficients(&tree, &EngineConfig::default()).unwrap();
        let (z, z_tilde) = z_process(&tree, &coeffs).unwrap();
        assert_eq!(z[0], 0.0);
        for l in tree.leaves() {
            assert!(z[l].abs() < 1e-12);
        }
        // Z vanishes everywhere, so the normalization is 0/0.
        assert!(z.values().iter().all(|x| x.abs() < 1e-12));
        assert!(z_tilde.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_weights_give_zero_quadratic() {
        let tree = gen_binomial(2, 1.1, 0.9, 0.5, 1.0).unwrap();
        let tree = tree.with_weights(&[0.0; 7]).unwrap();
        let coeffs = compute_coefficients(&tree, &EngineConfig::default()).unwrap();
        let q = value_function(&tree, &coeffs).unwrap();
        assert_eq!((q.a, q.b, q.d, q.c_star, q.v_star), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn martingale_independent_horizon_price() {
        // p u + (1 - p) d = 1 with u = 1.2, d = 0.8, p = 1/2.
        let tree = gen_binomial(2, 1.2, 0.8, 0.5, 1.0).unwrap();
        let claims: Vec<f64> = tree.nodes().iter().map(|n| (n.prices[0] - 0.9).max(0.0) + n.time as f64).collect();
        let tree = tree.with_claims(&claims).unwrap();
        let pmf = vec![0.2, 0.3, 0.5];
        let tree = horizon_to_weights(&tree, &RandomHorizon::IndependentPmf(pmf.clone())).unwrap();
        let coeffs = compute_coefficients(&tree, &EngineConfig::default()).unwrap();
        let q = value_function(&tree, &coeffs).unwrap();
        let prob = tree.path_probabilities();
        let want: f64 = (0..=2)
            .map(|t| {
                let mean: f64 = tree.nodes().iter().filter(|n| n.time == t).map(|n| prob[n.id] * n.claim).sum();
                mean * pmf[t]
            })
            .sum();
        assert!((q.c_star - want).abs() < 1e-10);
    }

    #[test]
    fn quadratic_matches_direct_objective() {
        let tree = gen_schachermayer(6, false).unwrap();
        let coeffs = compute_coefficients(&tree, &EngineConfig::default()).unwrap();
        let q = value_function(&tree, &coeffs).unwrap();
        for c in [-1.0, 0.0, q.c_star, 1.0, 10.0] {
            let xi = optimal_strategy(&tree, &coeffs, c).unwrap();
            let j = objective(&tree, &xi, c);
            assert!((j - q.eval(c)).abs() <= 1e-10 * j.abs().max(1.0), "c={c}: {j} vs {}", q.eval(c));
        }
    }
}
