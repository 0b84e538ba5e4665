//! Canonical trees: N-period binomial, the two-period market that violates
//! the non-degeneracy condition, and the two-period random-horizon example.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::horizon::{horizon_to_weights, RandomHorizon};
use crate::tree::{Node, ScenarioTree};

/// N-period binomial tree, stored explicitly (no recombination).
///
/// Nodes are laid out breadth-first with the up move first. Each node's
/// claim is its price and the weight is 1 at time `N`, 0 before, i.e. the
/// plain terminal hedging problem for `H_N = S_N`.
pub fn gen_binomial(periods: usize, up: f64, down: f64, p_up: f64, s0: f64) -> Result<ScenarioTree> {
    if periods < 1 {
        return Err(Error::Domain("periods must be >= 1".into()));
    }
    if !(down > 0.0 && down <= up && up.is_finite()) {
        return Err(Error::Domain(format!("need 0 < d <= u, got u={up}, d={down}")));
    }
    if !(p_up > 0.0 && p_up < 1.0) {
        return Err(Error::Domain(format!("need 0 < p < 1, got {p_up}")));
    }
    if !s0.is_finite() {
        return Err(Error::Domain("s0 must be finite".into()));
    }
    let q = 1.0 - p_up;
    let mut nodes = vec![Node { claim: s0, ..Node::new(0, 0, None, 1.0, vec![s0]) }];
    let mut frontier = vec![0usize];
    for t in 1..=periods {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for &parent in &frontier {
            let s = nodes[parent].prices[0];
            for (factor, prob) in [(up, p_up), (down, q)] {
                let id = nodes.len();
                let price = s * factor;
                nodes.push(Node {
                    claim: price,
                    weight: if t == periods { 1.0 } else { 0.0 },
                    ..Node::new(id, t, Some(parent), prob, vec![price])
                });
                next.push(id);
            }
        }
        frontier = next;
    }
    ScenarioTree::new(periods, 1, nodes)
}

/// Two-period market in which the non-degeneracy condition fails.
///
/// The first-period variable `U ~ Uniform[0, 1]` is discretized to `grid`
/// equal-mass atoms at the midpoints `(2k - 1) / (2 grid)`, rounded to the
/// nearest value representable as a price increment from 1. Given `U = u`,
/// `V = +1` with probability `u^2` and `V = -1` otherwise. Prices: `S_0 = 0`,
/// `Delta S_1 = 1`, `Delta S_2 = V^+ (1 + u) - 1`.
///
/// Claims are `H = (0, 1, (1/u + 1) V^+)`; weights are `(0, 1, V^+)`, or
/// `(0, 1, V^-)` when `capped` is set.
pub fn gen_schachermayer(grid: usize, capped: bool) -> Result<ScenarioTree> {
    if grid < 1 {
        return Err(Error::Domain("grid size must be >= 1".into()));
    }
    let mut nodes = vec![Node::new(0, 0, None, 1.0, vec![0.0])];
    let atoms: Vec<f64> = (1..=grid).map(|k| atom(k, grid)).collect();
    for (k, _) in atoms.iter().enumerate() {
        nodes.push(Node { claim: 1.0, weight: 1.0, ..Node::new(k + 1, 1, Some(0), 1.0 / grid as f64, vec![1.0]) });
    }
    for (k, &u) in atoms.iter().enumerate() {
        let parent = k + 1;
        let p_up = u * u;
        let id = nodes.len();
        // V = +1
        nodes.push(Node {
            claim: 1.0 / u + 1.0,
            weight: if capped { 0.0 } else { 1.0 },
            ..Node::new(id, 2, Some(parent), p_up, vec![1.0 + u])
        });
        // V = -1
        nodes.push(Node {
            claim: 0.0,
            weight: if capped { 1.0 } else { 0.0 },
            ..Node::new(id + 1, 2, Some(parent), 1.0 - p_up, vec![0.0])
        });
    }
    ScenarioTree::new(2, 1, nodes)
}

/// Atom value `u` of first-period node `id` in a [`gen_schachermayer`] tree.
pub fn schachermayer_atom(tree: &ScenarioTree, id: usize) -> f64 {
    atom(id, tree.children(0).len())
}

/// Midpoint rounded so that `(1 + u) - 1 == u` exactly, which makes the
/// stored price increment equal to the atom.
fn atom(k: usize, grid: usize) -> f64 {
    let mid = (2 * k - 1) as f64 / (2 * grid) as f64;
    (1.0 + mid) - 1.0
}

/// Parameters of the two-period random-horizon binomial example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonExample {
    pub up: f64,
    pub down: f64,
    pub p_up: f64,
    /// `H_0`, `H_1` on the up node, `H_1` on the down node.
    pub a: [f64; 3],
    /// `H_2` on leaves `x1..x4` (uu, ud, du, dd).
    pub b: [f64; 4],
}

impl Default for HorizonExample {
    fn default() -> Self {
        Self { up: 1.2, down: 0.8, p_up: 0.5, a: [1.0, 2.0, 3.0], b: [4.0, 5.0, 6.0, 7.0] }
    }
}

impl HorizonExample {
    /// Leaf-measurable exit time: 0 on `{x1, x2}`, 1 on `x3`, 2 on `x4`.
    ///
    /// This is not a stopping time of the binomial filtration.
    pub fn horizon(&self) -> RandomHorizon {
        RandomHorizon::LeafTimes(BTreeMap::from([(3, 0), (4, 0), (5, 1), (6, 2)]))
    }

    /// Binomial tree with the example's claims, weights set from the horizon.
    pub fn tree(&self) -> Result<ScenarioTree> {
        let base = gen_binomial(2, self.up, self.down, self.p_up, 1.0)?;
        let [a0, a1, a2] = self.a;
        let [b1, b2, b3, b4] = self.b;
        let claims = base.with_claims(&[a0, a1, a2, b1, b2, b3, b4])?;
        horizon_to_weights(&claims, &self.horizon())
    }

    /// The market stopped at the exit time, with increments given directly:
    /// `Delta S_1 = (d - 1)` on the down node, `Delta S_2 = d (d - 1)` on `x4`,
    /// zero elsewhere.
    pub fn stopped_tree(&self) -> Result<ScenarioTree> {
        let d = self.down;
        let (p, q) = (self.p_up, 1.0 - self.p_up);
        let prices = [1.0, 1.0, d, 1.0, 1.0, d, d * d];
        let layout = [(None, 1.0), (Some(0), p), (Some(0), q), (Some(1), p), (Some(1), q), (Some(2), p), (Some(2), q)];
        let nodes = layout
            .iter()
            .zip(prices)
            .enumerate()
            .map(|(id, (&(parent, prob), s))| {
                let time = match id {
                    0 => 0,
                    1 | 2 => 1,
                    _ => 2,
                };
                Node::new(id, time, parent, prob, vec![s])
            })
            .collect();
        ScenarioTree::new(2, 1, nodes)
    }
}
