//! Stopped markets and arbitrage-witness verification.

use serde::Serialize;

use crate::engine::gains;
use crate::engine::strategy::check_strategy;
use crate::error::{Error, Result};
use crate::horizon::RandomHorizon;
use crate::tree::{PredictableProcess, ScenarioTree};

const GAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageEvidence {
    pub is_arbitrage: bool,
    /// Terminal gain `G_N` per leaf, in leaf order.
    pub terminal_gains: Vec<(usize, f64)>,
    pub min_terminal_gain: f64,
    pub prob_positive_gain: f64,
}

/// A zero-cost self-financing strategy is an arbitrage iff `G_N >= 0` on every
/// leaf and `G_N > 0` with positive probability.
pub fn check_arbitrage_witness(tree: &ScenarioTree, strategy: &PredictableProcess) -> Result<ArbitrageEvidence> {
    check_strategy(tree, strategy)?;
    let g = gains(tree, strategy);
    let prob = tree.path_probabilities();
    let terminal_gains: Vec<(usize, f64)> = tree.leaves().map(|l| (l, g[l])).collect();
    let min_terminal_gain = terminal_gains.iter().map(|&(_, x)| x).fold(f64::INFINITY, f64::min);
    let prob_positive_gain: f64 = terminal_gains.iter().filter(|&&(_, x)| x > GAIN_TOL).map(|&(l, _)| prob[l]).sum();
    Ok(ArbitrageEvidence {
        is_arbitrage: min_terminal_gain >= -GAIN_TOL && prob_positive_gain > 0.0,
        terminal_gains,
        min_terminal_gain,
        prob_positive_gain,
    })
}

/// Freezes prices after a leaf-measurable stopping time.
///
/// `tau` is a stopping time when, for every node `v` at time `n`, the event
/// `{tau = n}` holds on all leaves below `v` or on none of them.
pub fn stop_tree(tree: &ScenarioTree, tau: &RandomHorizon) -> Result<ScenarioTree> {
    let RandomHorizon::LeafTimes(times) = tau else {
        return Err(Error::Horizon("stopping requires leaf exit times".into()));
    };
    tau.validate(tree)?;
    let cond = tau.conditional_pmf(tree).expect("leaf-time horizon");
    for node in tree.nodes() {
        let mass = cond[node.id][node.time];
        // Conditional probabilities are exact 0/1 for a stopping time, up to
        // rounding in the children sums.
        if mass > 1e-12 && mass < 1.0 - 1e-12 {
            return Err(Error::NotStoppingTime { node: node.id, time: node.time });
        }
    }
    // A representative leaf below each node decides where it stopped.
    let mut leaf_below = vec![0usize; tree.len()];
    for v in (0..tree.len()).rev() {
        leaf_below[v] = if tree.is_terminal(v) { v } else { leaf_below[tree.children(v)[0]] };
    }
    let mut nodes = tree.nodes().to_vec();
    for v in 0..tree.len() {
        let stop = times[&leaf_below[v]];
        if stop < tree.node(v).time {
            let mut anc = v;
            while tree.node(anc).time > stop {
                anc = tree.node(anc).parent.unwrap();
            }
            nodes[v].prices = tree.node(anc).prices.clone();
        }
    }
    ScenarioTree::new(tree.num_periods(), tree.num_assets(), nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_binomial, HorizonExample};
    use std::collections::BTreeMap;

    fn constant_strategy(tree: &ScenarioTree, x: f64) -> PredictableProcess {
        let mut phi = PredictableProcess::zeros(tree, 1);
        for u in tree.non_terminal().collect::<Vec<_>>() {
            phi.set(u, &[x]);
        }
        phi
    }

    #[test]
    fn witness_on_stopped_example() {
        let ex = HorizonExample::default();
        let stopped = ex.stopped_tree().unwrap();
        let ev = check_arbitrage_witness(&stopped, &constant_strategy(&stopped, -1.0)).unwrap();
        assert!(ev.is_arbitrage);
        assert!((ev.prob_positive_gain - (1.0 - ex.p_up)).abs() < 1e-15);

        let ev = check_arbitrage_witness(&stopped, &constant_strategy(&stopped, 1.0)).unwrap();
        assert!(!ev.is_arbitrage);
        assert!(ev.min_terminal_gain < 0.0);

        let ev = check_arbitrage_witness(&stopped, &PredictableProcess::zeros(&stopped, 1)).unwrap();
        assert!(!ev.is_arbitrage);
    }

    #[test]
    fn stopping_at_maturity_is_identity() {
        let tree = gen_binomial(2, 1.2, 0.8, 0.4, 1.0).unwrap();
        let tau = RandomHorizon::LeafTimes(tree.leaves().map(|l| (l, 2)).collect());
        assert_eq!(stop_tree(&tree, &tau).unwrap(), tree);
    }

    #[test]
    fn stopping_after_one_period_freezes_prices() {
        let tree = gen_binomial(2, 1.2, 0.8, 0.4, 1.0).unwrap();
        let tau = RandomHorizon::LeafTimes(tree.leaves().map(|l| (l, 1)).collect());
        let stopped = stop_tree(&tree, &tau).unwrap();
        for l in stopped.leaves() {
            assert_eq!(stopped.increment(l), &[0.0]);
        }
        assert_eq!(stopped.increment(1), tree.increment(1));
    }

    #[test]
    fn example_horizon_is_not_a_stopping_time() {
        let ex = HorizonExample::default();
        let tree = ex.tree().unwrap();
        let err = stop_tree(&tree, &ex.horizon()).unwrap_err();
        assert_eq!(err, Error::NotStoppingTime { node: 0, time: 0 });
    }

    #[test]
    fn node_dependent_stopping_time() {
        // Stop at 1 on the down branch, at 2 on the up branch.
        let tree = gen_binomial(2, 1.2, 0.8, 0.4, 1.0).unwrap();
        let tau = RandomHorizon::LeafTimes(BTreeMap::from([(3, 2), (4, 2), (5, 1), (6, 1)]));
        let stopped = stop_tree(&tree, &tau).unwrap();
        assert_eq!(stopped.increment(3), tree.increment(3));
        assert_eq!(stopped.increment(5), &[0.0]);
        assert!(stop_tree(&tree, &RandomHorizon::IndependentPmf(vec![0.0, 0.0, 1.0])).is_err());
    }
}
