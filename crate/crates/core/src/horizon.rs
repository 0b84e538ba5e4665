//! Random horizons and their reduction to weight processes,
//! `omega_n = P(tau = n | F_n)`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tree::{ScenarioTree, PROB_SUM_TOL};

/// An exit time `tau` with values in `{0, ..., N}`.
#[derive(Debug, Clone, PartialEq)]
pub enum RandomHorizon {
    /// `tau` as a function of the terminal scenario: leaf id -> exit time.
    LeafTimes(BTreeMap<usize, usize>),
    /// `tau` independent of the market, `pmf[n] = P(tau = n)`.
    IndependentPmf(Vec<f64>),
}

impl RandomHorizon {
    pub fn validate(&self, tree: &ScenarioTree) -> Result<()> {
        let n = tree.num_periods();
        match self {
            RandomHorizon::LeafTimes(times) => {
                for (&leaf, &t) in times {
                    if leaf >= tree.len() || !tree.is_terminal(leaf) {
                        return Err(Error::Horizon(format!("node {leaf} is not a leaf")));
                    }
                    if t > n {
                        return Err(Error::Horizon(format!("leaf {leaf}: time {t} exceeds N = {n}")));
                    }
                }
                if let Some(missing) = tree.leaves().find(|l| !times.contains_key(l)) {
                    return Err(Error::Horizon(format!("leaf {missing} has no exit time")));
                }
                Ok(())
            }
            RandomHorizon::IndependentPmf(pmf) => {
                if pmf.len() != n + 1 {
                    return Err(Error::Horizon(format!("pmf has {} entries, expected N + 1 = {}", pmf.len(), n + 1)));
                }
                if let Some(k) = pmf.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
                    return Err(Error::Horizon(format!("pmf[{k}] = {} is not a probability", pmf[k])));
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::Horizon(format!("pmf sums to {total}")));
                }
                Ok(())
            }
        }
    }

    /// Per-node conditional exit-time distribution: entry `[v][k]` is
    /// `P(tau = k | v)`. Only defined for [`RandomHorizon::LeafTimes`].
    pub(crate) fn conditional_pmf(&self, tree: &ScenarioTree) -> Option<Vec<Vec<f64>>> {
        let RandomHorizon::LeafTimes(times) = self else { return None };
        let width = tree.num_periods() + 1;
        let mut mass = vec![vec![0.0; width]; tree.len()];
        for v in (0..tree.len()).rev() {
            if tree.is_terminal(v) {
                mass[v][times[&v]] = 1.0;
                continue;
            }
            let mut acc = vec![0.0; width];
            for &c in tree.children(v) {
                let p = tree.node(c).cond_prob;
                for (a, m) in acc.iter_mut().zip(&mass[c]) {
                    *a += p * m;
                }
            }
            mass[v] = acc;
        }
        Some(mass)
    }
}

/// Copy of `tree` whose weights encode the horizon.
pub fn horizon_to_weights(tree: &ScenarioTree, tau: &RandomHorizon) -> Result<ScenarioTree> {
    tau.validate(tree)?;
    let weights: Vec<f64> = match tau {
        RandomHorizon::LeafTimes(_) => {
            let mass = tau.conditional_pmf(tree).expect("leaf-time horizon");
            tree.nodes().iter().map(|n| mass[n.id][n.time]).collect()
        }
        RandomHorizon::IndependentPmf(pmf) => tree.nodes().iter().map(|n| pmf[n.time]).collect(),
    };
    tree.with_weights(&weights)
}
