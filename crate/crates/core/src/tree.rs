//! Finite filtered probability spaces represented as rooted scenario trees.
//!
//! The tree is the filtration: a node at time `n` is an atom of `F_n`, and
//! its children partition it into atoms of `F_{n+1}`. Adapted processes are
//! per-node values ([`NodeProcess`]); predictable processes are stored on the
//! parent node and apply to every child ([`PredictableProcess`]).

use serde::ser::{SerializeSeq, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance for conditional branch probabilities summing to one.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// One atom of the filtration together with the values observed there.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub time: usize,
    pub parent: Option<usize>,
    /// Probability of this node given its parent (1 for the root).
    pub cond_prob: f64,
    /// Asset prices `S_n`, one per asset.
    pub prices: Vec<f64>,
    /// Claim value `H_n`.
    pub claim: f64,
    /// Random weight `omega_n`.
    pub weight: f64,
}

impl Node {
    pub fn new(id: usize, time: usize, parent: Option<usize>, cond_prob: f64, prices: Vec<f64>) -> Self {
        Self { id, time, parent, cond_prob, prices, claim: 0.0, weight: 0.0 }
    }
}

/// A validated scenario tree. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ScenarioTree {
    num_periods: usize,
    num_assets: usize,
    nodes: Vec<Node>,
    children: Vec<Vec<usize>>,
    // Flat `nodes.len() * num_assets` price increments; zero at the root.
    increments: Vec<f64>,
}

impl PartialEq for ScenarioTree {
    fn eq(&self, other: &Self) -> bool {
        self.num_periods == other.num_periods
            && self.num_assets == other.num_assets
            && self.nodes == other.nodes
    }
}

impl ScenarioTree {
    /// Builds a tree and checks every structural invariant.
    ///
    /// Node `i` must carry id `i`, parents must precede children, and child
    /// order is the order in which nodes appear.
    pub fn new(num_periods: usize, num_assets: usize, nodes: Vec<Node>) -> Result<Self> {
        if num_periods < 1 {
            return Err(Error::InvalidTree("num_periods must be at least 1".into()));
        }
        if num_assets < 1 {
            return Err(Error::InvalidTree("num_assets must be at least 1".into()));
        }
        if nodes.is_empty() {
            return Err(Error::InvalidTree("tree has no nodes".into()));
        }
        let invariant = |node: usize, check: String| Error::Invariant { node, check };

        let mut children = vec![Vec::new(); nodes.len()];
        for (idx, node) in nodes.iter().enumerate() {
            if node.id != idx {
                return Err(invariant(idx, format!("node at position {idx} has id {}", node.id)));
            }
            if node.prices.len() != num_assets {
                return Err(invariant(
                    idx,
                    format!("expected {num_assets} prices, found {}", node.prices.len()),
                ));
            }
            if let Some(k) = node.prices.iter().position(|p| !p.is_finite()) {
                return Err(invariant(idx, format!("price of asset {k} is not finite")));
            }
            if !node.claim.is_finite() {
                return Err(invariant(idx, "claim is not finite".into()));
            }
            if !node.weight.is_finite() || node.weight < 0.0 {
                return Err(invariant(idx, format!("weight {} must be finite and >= 0", node.weight)));
            }
            if node.weight > 1.0 {
                log::warn!("node {idx}: weight {} exceeds 1 (bounded weights are accepted)", node.weight);
            }
            if !(0.0..=1.0).contains(&node.cond_prob) {
                return Err(invariant(idx, format!("cond_prob {} outside [0, 1]", node.cond_prob)));
            }
            if node.time > num_periods {
                return Err(invariant(idx, format!("time {} exceeds num_periods {num_periods}", node.time)));
            }
            match node.parent {
                None => {
                    if idx != 0 {
                        return Err(invariant(idx, "only node 0 may be the root".into()));
                    }
                    if node.time != 0 {
                        return Err(invariant(idx, "root must have time 0".into()));
                    }
                    if (node.cond_prob - 1.0).abs() > PROB_SUM_TOL {
                        return Err(invariant(idx, "root cond_prob must be 1".into()));
                    }
                }
                Some(parent) => {
                    if parent >= idx {
                        return Err(invariant(idx, format!("parent {parent} does not precede the node")));
                    }
                    if nodes[parent].time + 1 != node.time {
                        return Err(invariant(
                            idx,
                            format!("time {} is not parent time {} + 1", node.time, nodes[parent].time),
                        ));
                    }
                    children[parent].push(idx);
                }
            }
        }
        if nodes[0].parent.is_some() {
            return Err(invariant(0, "node 0 must be the root".into()));
        }

        for (idx, node) in nodes.iter().enumerate() {
            let kids = &children[idx];
            if node.time < num_periods {
                if kids.is_empty() {
                    return Err(invariant(idx, format!("node at time {} < N has no children", node.time)));
                }
                let total: f64 = kids.iter().map(|&c| nodes[c].cond_prob).sum();
                if (total - 1.0).abs() > PROB_SUM_TOL {
                    return Err(invariant(idx, format!("child probabilities sum to {total}, not 1")));
                }
            } else if !kids.is_empty() {
                return Err(invariant(idx, "terminal node has children".into()));
            }
        }

        let mut increments = vec![0.0; nodes.len() * num_assets];
        for (idx, node) in nodes.iter().enumerate().skip(1) {
            let parent = &nodes[node.parent.expect("non-root has parent")];
            for k in 0..num_assets {
                increments[idx * num_assets + k] = node.prices[k] - parent.prices[k];
            }
        }

        Ok(Self { num_periods, num_assets, nodes, children, increments })
    }

    pub fn num_periods(&self) -> usize {
        self.num_periods
    }

    pub fn num_assets(&self) -> usize {
        self.num_assets
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        self.children[id].is_empty()
    }

    /// `Delta S` on the edge into `id`; zero at the root.
    pub fn increment(&self, id: usize) -> &[f64] {
        &self.increments[id * self.num_assets..(id + 1) * self.num_assets]
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.is_terminal(i))
    }

    pub fn non_terminal(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| !self.is_terminal(i))
    }

    /// Unconditional probability of every node.
    pub fn path_probabilities(&self) -> Vec<f64> {
        let mut prob = vec![0.0; self.len()];
        prob[0] = 1.0;
        for (idx, node) in self.nodes.iter().enumerate().skip(1) {
            prob[idx] = prob[node.parent.unwrap()] * node.cond_prob;
        }
        prob
    }

    /// Node ids from the root down to `id`, inclusive.
    pub fn path_to(&self, id: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.nodes[id].time + 1);
        let mut cur = Some(id);
        while let Some(v) = cur {
            path.push(v);
            cur = self.nodes[v].parent;
        }
        path.reverse();
        path
    }

    pub fn weights(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.weight).collect()
    }

    pub fn claims(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.claim).collect()
    }

    /// Copy of the tree with new per-node weights.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::Mismatch(format!("{} weights for {} nodes", weights.len(), self.len())));
        }
        let mut nodes = self.nodes.clone();
        for (node, &w) in nodes.iter_mut().zip(weights) {
            node.weight = w;
        }
        Self::new(self.num_periods, self.num_assets, nodes)
    }

    /// Copy of the tree with new per-node claims.
    pub fn with_claims(&self, claims: &[f64]) -> Result<Self> {
        if claims.len() != self.len() {
            return Err(Error::Mismatch(format!("{} claims for {} nodes", claims.len(), self.len())));
        }
        let mut nodes = self.nodes.clone();
        for (node, &h) in nodes.iter_mut().zip(claims) {
            node.claim = h;
        }
        Self::new(self.num_periods, self.num_assets, nodes)
    }

    /// Largest weight in the tree, used to rescale weight-dependent bounds.
    pub fn max_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).fold(0.0, f64::max)
    }
}

/// An adapted scalar process: one value per node.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct NodeProcess(pub Vec<f64>);

impl NodeProcess {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for NodeProcess {
    type Output = f64;
    fn index(&self, id: usize) -> &f64 {
        &self.0[id]
    }
}

impl std::ops::IndexMut<usize> for NodeProcess {
    fn index_mut(&mut self, id: usize) -> &mut f64 {
        &mut self.0[id]
    }
}

/// A predictable process with `dim` components, stored on non-terminal nodes.
///
/// The value held by node `u` at time `n-1` is the time-`n` value on every
/// child of `u`. Terminal nodes hold nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictableProcess {
    dim: usize,
    values: Vec<f64>,
    defined: Vec<bool>,
}

impl PredictableProcess {
    pub fn zeros(tree: &ScenarioTree, dim: usize) -> Self {
        let defined = (0..tree.len()).map(|i| !tree.is_terminal(i)).collect();
        Self { dim, values: vec![0.0; tree.len() * dim], defined }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.defined.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defined.is_empty()
    }

    pub fn is_defined(&self, id: usize) -> bool {
        self.defined[id]
    }

    pub fn get(&self, id: usize) -> &[f64] {
        &self.values[id * self.dim..(id + 1) * self.dim]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut [f64] {
        debug_assert!(self.defined[id], "node {id} carries no predictable value");
        &mut self.values[id * self.dim..(id + 1) * self.dim]
    }

    pub fn set(&mut self, id: usize, value: &[f64]) {
        self.get_mut(id).copy_from_slice(value);
    }

    /// `(node_id, value)` for every node that carries a value.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        (0..self.len()).filter(move |&i| self.defined[i]).map(move |i| (i, self.get(i)))
    }

    /// Largest absolute componentwise difference to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn matches(&self, tree: &ScenarioTree) -> bool {
        self.defined.len() == tree.len() && (0..tree.len()).all(|i| self.defined[i] != tree.is_terminal(i))
    }
}

struct Entry<'a> {
    node_id: usize,
    value: &'a [f64],
}

impl Serialize for Entry<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Entry", 2)?;
        s.serialize_field("node_id", &self.node_id)?;
        s.serialize_field("value", self.value)?;
        s.end()
    }
}

impl Serialize for PredictableProcess {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let count = self.defined.iter().filter(|d| **d).count();
        let mut seq = serializer.serialize_seq(Some(count))?;
        for (node_id, value) in self.iter() {
            seq.serialize_element(&Entry { node_id, value })?;
        }
        seq.end()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_leaf(p_up: f64) -> Vec<Node> {
        vec![
            Node::new(0, 0, None, 1.0, vec![1.0]),
            Node::new(1, 1, Some(0), p_up, vec![1.5]),
            Node::new(2, 1, Some(0), 0.5, vec![0.5]),
        ]
    }

    #[test]
    fn minimal_tree_is_accepted() {
        let tree = ScenarioTree::new(1, 1, two_leaf(0.5)).unwrap();
        assert_eq!(tree.len(), 3);
        assert_eq!(tree.children(0), &[1, 2]);
        assert_eq!(tree.increment(1), &[0.5]);
        assert_eq!(tree.increment(0), &[0.0]);
        assert_eq!(tree.path_to(2), vec![0, 2]);
    }

    #[test]
    fn probability_sum_violation_names_parent() {
        let err = ScenarioTree::new(1, 1, two_leaf(0.48)).unwrap_err();
        match err {
            Error::Invariant { node, check } => {
                assert_eq!(node, 0);
                assert!(check.contains("sum"), "{check}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_children_and_bad_times() {
        let mut nodes = two_leaf(0.5);
        nodes.pop();
        nodes[1].cond_prob = 1.0;
        assert!(ScenarioTree::new(2, 1, nodes.clone()).is_err());

        let mut nodes = two_leaf(0.5);
        nodes[2].time = 2;
        assert!(matches!(ScenarioTree::new(2, 1, nodes), Err(Error::Invariant { node: 2, .. })));
    }

    #[test]
    fn rejects_negative_weight_and_nonfinite_price() {
        let mut nodes = two_leaf(0.5);
        nodes[1].weight = -0.1;
        assert!(matches!(ScenarioTree::new(1, 1, nodes), Err(Error::Invariant { node: 1, .. })));
        let mut nodes = two_leaf(0.5);
        nodes[2].prices[0] = f64::NAN;
        assert!(matches!(ScenarioTree::new(1, 1, nodes), Err(Error::Invariant { node: 2, .. })));
    }

    #[test]
    fn heavy_weights_are_accepted() {
        let mut nodes = two_leaf(0.5);
        nodes[1].weight = 3.0;
        let tree = ScenarioTree::new(1, 1, nodes).unwrap();
        assert_eq!(tree.max_weight(), 3.0);
    }

    #[test]
    fn predictable_process_lives_on_non_terminal_nodes() {
        let tree = ScenarioTree::new(1, 1, two_leaf(0.5)).unwrap();
        let mut xi = PredictableProcess::zeros(&tree, 1);
        xi.set(0, &[2.0]);
        assert!(xi.is_defined(0) && !xi.is_defined(1));
        let json = serde_json::to_string(&xi).unwrap();
        assert_eq!(json, r#"[{"node_id":0,"value":[2.0]}]"#);
    }
}
