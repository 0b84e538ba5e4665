//! Seeded random scenario trees for property and oracle batteries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tree::{Node, ScenarioTree};
use crate::verify::invariants::{run_invariant_battery, BatteryConfig, BatteryReport};
use crate::Mode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomTreeSpec {
    pub max_periods: usize,
    pub max_branching: usize,
    pub max_assets: usize,
    /// Probability that a node weight is exactly zero.
    pub zero_weight_prob: f64,
}

impl Default for RandomTreeSpec {
    fn default() -> Self {
        Self { max_periods: 4, max_branching: 3, max_assets: 2, zero_weight_prob: 0.2 }
    }
}

/// Branch probabilities from a flat Dirichlet draw, increments uniform in
/// `[-1, 1]`, claims uniform in `[-2, 2]`, weights uniform in `[0, 1]`.
pub fn random_tree<R: Rng>(rng: &mut R, spec: &RandomTreeSpec) -> ScenarioTree {
    let periods = rng.gen_range(1..=spec.max_periods);
    let assets = rng.gen_range(1..=spec.max_assets);
    let mut nodes = vec![Node::new(0, 0, None, 1.0, (0..assets).map(|_| rng.gen_range(-1.0..=1.0)).collect())];
    let mut frontier = vec![0];
    for t in 1..=periods {
        let mut next = Vec::new();
        for &parent in &frontier {
            let k = rng.gen_range(1..=spec.max_branching);
            let mut probs: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            for p in probs {
                let id = nodes.len();
                let prices = nodes[parent].prices.iter().map(|s: &f64| s + rng.gen_range(-1.0..=1.0)).collect();
                nodes.push(Node::new(id, t, Some(parent), p, prices));
                next.push(id);
            }
        }
        frontier = next;
    }
    for node in &mut nodes {
        node.claim = rng.gen_range(-2.0..=2.0);
        node.weight = if rng.gen_bool(spec.zero_weight_prob) { 0.0 } else { rng.gen_range(0.0..=1.0) };
    }
    ScenarioTree::new(periods, assets, nodes).expect("generated tree is valid")
}

pub fn random_trees(count: usize, seed: u64, spec: &RandomTreeSpec) -> Vec<ScenarioTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_tree(&mut rng, spec)).collect()
}

/// Battery over `count` seeded trees. Single mode draws one-asset trees only.
pub fn random_battery(count: usize, seed: u64, capitals: &[f64], cfg: &BatteryConfig) -> BatteryReport {
    let mut spec = RandomTreeSpec::default();
    if cfg.mode == Mode::Single {
        spec.max_assets = 1;
    }
    let mut report = BatteryReport::default();
    for (i, tree) in random_trees(count, seed, &spec).iter().enumerate() {
        report.merge(run_invariant_battery(tree, capitals, cfg).with_instance(i));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_trees_are_reproducible() {
        let spec = RandomTreeSpec::default();
        assert_eq!(random_trees(5, 7, &spec), random_trees(5, 7, &spec));
        assert_ne!(random_trees(5, 7, &spec), random_trees(5, 8, &spec));
    }

    #[test]
    fn trees_respect_spec() {
        let spec = RandomTreeSpec::default();
        let trees = random_trees(100, 1, &spec);
        assert!(trees.iter().any(|t| t.num_assets() == 2));
        assert!(trees.iter().any(|t| t.num_periods() == 4));
        assert!(trees.iter().any(|t| t.weights().contains(&0.0)));
        for t in &trees {
            assert!(t.num_periods() <= 4 && t.num_assets() <= 2);
            assert!(t.nodes().iter().all(|n| n.claim.abs() <= 2.0 && (0.0..=1.0).contains(&n.weight)));
            for u in t.non_terminal() {
                assert!(t.children(u).len() <= 3);
                assert!(t.children(u).iter().all(|&c| t.increment(c).iter().all(|x| x.abs() <= 1.0)));
            }
        }
    }

    #[test]
    fn small_random_battery_passes() {
        let report = random_battery(20, 42, &[0.0, 1.0], &BatteryConfig::default());
        assert_eq!(report.instances, 20);
        assert!(report.passed(), "{:?}", report.failures);
    }
}
