//! Backward induction for the coefficient processes.
//!
//! For every non-terminal node `u` with children `c` (branch probability `p`,
//! increment `dS`):
//!
//! ```text
//! alpha(u) = sum p dS a(c)        eta(u) = sum p dS h(c)
//! delta(u) = sum p dS dS^T d(c)   beta = delta^+ alpha, rho = delta^+ eta
//! a(u) = w(u)      + sum p (1 - beta.dS)   a(c)
//! d(u) = w(u)      + sum p (1 - beta.dS)^2 d(c)
//! h(u) = H(u) w(u) + sum p (1 - beta.dS)   h(c)
//! ```
//!
//! with `a = d = w` and `h = H w` on leaves. Here `a`, `d`, `h` are the
//! conditional expectations given the node of the weighted sums of products
//! `prod (1 - beta dS)` (squared for `d`) over the remaining path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::min_norm_lstsq;
use crate::tree::{dot, NodeProcess, PredictableProcess, ScenarioTree};

/// Default threshold for treating `delta` (or a Gram eigenvalue) as zero.
pub const DEFAULT_EPS_DEG: f64 = 1e-14;

/// How the denominator `delta` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Scalar ratio; one asset only.
    Single,
    /// M x M Gram matrix with a minimal-norm PSD solve.
    #[default]
    Matrix,
    /// Scalar `dS^T dS` denominator applied to vector numerators.
    AppendixLiteral,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Matrix => "matrix",
            Mode::AppendixLiteral => "appendix_literal",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Mode::Single),
            "matrix" => Ok(Mode::Matrix),
            "appendix_literal" | "appendix-literal" | "literal" => Ok(Mode::AppendixLiteral),
            other => Err(Error::Domain(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineConfig {
    pub mode: Mode,
    pub eps_deg: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { mode: Mode::Matrix, eps_deg: DEFAULT_EPS_DEG }
    }
}

impl EngineConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self { mode, ..Self::default() }
    }
}

/// Per-node coefficient processes and backward accumulators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub mode: Mode,
    pub num_assets: usize,
    pub alpha: PredictableProcess,
    pub eta: PredictableProcess,
    /// Scalar (`dim = 1`) in single and literal modes, row-major M x M in matrix mode.
    pub delta: PredictableProcess,
    pub beta: PredictableProcess,
    pub rho: PredictableProcess,
    pub a_hat: NodeProcess,
    pub d_hat: NodeProcess,
    pub h_hat: NodeProcess,
    /// `1 - beta . dS` on the edge into each node; 1 at the root.
    pub factor: NodeProcess,
    /// Nodes where the denominator vanished and `beta = rho = 0`.
    pub degenerate: Vec<bool>,
    /// Numerical rank of the denominator at each non-terminal node.
    pub rank: Vec<usize>,
}

impl CoefficientTable {
    pub fn degenerate_nodes(&self) -> Vec<usize> {
        (0..self.degenerate.len()).filter(|&i| self.degenerate[i]).collect()
    }

    pub(crate) fn check_tree(&self, tree: &ScenarioTree) -> Result<()> {
        if self.num_assets != tree.num_assets() || !self.beta.matches(tree) || self.a_hat.0.len() != tree.len() {
            return Err(Error::Mismatch("coefficient table was computed on a different tree".into()));
        }
        Ok(())
    }
}

pub fn compute_coefficients(tree: &ScenarioTree, config: &EngineConfig) -> Result<CoefficientTable> {
    let m = tree.num_assets();
    if config.mode == Mode::Single && m != 1 {
        return Err(Error::ModeMismatch { mode: config.mode.name().into(), num_assets: m });
    }
    if !(config.eps_deg > 0.0) {
        return Err(Error::Domain("eps_deg must be positive".into()));
    }
    let delta_dim = if config.mode == Mode::Matrix { m * m } else { 1 };
    let n = tree.len();
    let mut alpha = PredictableProcess::zeros(tree, m);
    let mut eta = PredictableProcess::zeros(tree, m);
    let mut delta = PredictableProcess::zeros(tree, delta_dim);
    let mut beta = PredictableProcess::zeros(tree, m);
    let mut rho = PredictableProcess::zeros(tree, m);
    let mut a_hat = NodeProcess::zeros(n);
    let mut d_hat = NodeProcess::zeros(n);
    let mut h_hat = NodeProcess::zeros(n);
    let mut factor = NodeProcess::zeros(n);
    factor[0] = 1.0;
    let mut degenerate = vec![false; n];
    let mut rank = vec![0; n];

    let mut al = vec![0.0; m];
    let mut et = vec![0.0; m];
    let mut de = vec![0.0; delta_dim];

    for u in (0..n).rev() {
        let node = tree.node(u);
        if tree.is_terminal(u) {
            a_hat[u] = node.weight;
            d_hat[u] = node.weight;
            h_hat[u] = node.claim * node.weight;
            continue;
        }
        al.fill(0.0);
        et.fill(0.0);
        de.fill(0.0);
        for &c in tree.children(u) {
            let p = tree.node(c).cond_prob;
            let ds = tree.increment(c);
            let (pa, ph, pd) = (p * a_hat[c], p * h_hat[c], p * d_hat[c]);
            for k in 0..m {
                al[k] += pa * ds[k];
                et[k] += ph * ds[k];
            }
            match config.mode {
                Mode::Matrix => {
                    for i in 0..m {
                        for j in 0..m {
                            de[i * m + j] += pd * ds[i] * ds[j];
                        }
                    }
                }
                Mode::Single | Mode::AppendixLiteral => de[0] += ds.iter().map(|x| pd * x * x).sum::<f64>(),
            }
        }
        if al.iter().chain(&et).chain(&de).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { node: u, what: "alpha/eta/delta" });
        }

        // `basis` spans the directions the fit uses; None when the literal
        // scalar denominator makes beta something other than a projection.
        let (b, r, basis) = match config.mode {
            Mode::Matrix if m > 1 => {
                // M = A^T A for the rows sqrt(p d_hat) dS, so its eigenvalues are
                // the squared singular values of A; solving from A keeps the
                // accuracy that forming M would square away.
                let trace: f64 = (0..m).map(|i| de[i * m + i]).sum();
                let cutoff = (config.eps_deg * trace.max(1.0)).sqrt();
                let (design, yb, yr) = weighted_rows(tree, u, &a_hat, &d_hat, &h_hat);
                let (sol, kept) = min_norm_lstsq(&design, yb.len(), m, &[&yb, &yr], cutoff);
                let mut it = sol.into_iter();
                (it.next().unwrap(), it.next().unwrap(), Some(kept))
            }
            Mode::Matrix | Mode::Single | Mode::AppendixLiteral => {
                let d = de[0];
                let kept = if m == 1 { Some(vec![vec![1.0]]) } else { None };
                if d <= config.eps_deg * d.max(1.0) {
                    (vec![0.0; m], vec![0.0; m], Some(Vec::new()))
                } else {
                    (al.iter().map(|x| x / d).collect(), et.iter().map(|x| x / d).collect(), kept)
                }
            }
        };
        let node_rank = basis.as_ref().map_or(1, Vec::len);
        degenerate[u] = node_rank == 0;
        rank[u] = node_rank;
        if b.iter().chain(&r).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { node: u, what: "beta/rho" });
        }

        edge_factors(tree, u, &b, basis.as_deref(), &d_hat, &mut factor);
        let (mut ah, mut dh, mut hh) = (node.weight, node.weight, node.claim * node.weight);
        for &c in tree.children(u) {
            let p = tree.node(c).cond_prob;
            let f = factor[c];
            ah += p * f * a_hat[c];
            dh += p * f * f * d_hat[c];
            hh += p * f * h_hat[c];
        }
        if !(ah.is_finite() && dh.is_finite() && hh.is_finite()) {
            return Err(Error::NonFinite { node: u, what: "accumulators" });
        }
        a_hat[u] = ah;
        d_hat[u] = dh;
        h_hat[u] = hh;
        alpha.set(u, &al);
        eta.set(u, &et);
        delta.set(u, &de);
        beta.set(u, &b);
        rho.set(u, &r);
    }

    Ok(CoefficientTable {
        mode: config.mode,
        num_assets: m,
        alpha,
        eta,
        delta,
        beta,
        rho,
        a_hat,
        d_hat,
        h_hat,
        factor,
        degenerate,
        rank,
    })
}

/// Rows `s dS` and targets `p a_hat / s`, `p h_hat / s` over the children of
/// `u` with `s = sqrt(p d_hat) > 0`: the least-squares form of `M beta = alpha`
/// and `M rho = eta`.
fn weighted_rows(tree: &ScenarioTree, u: usize, a_hat: &NodeProcess, d_hat: &NodeProcess, h_hat: &NodeProcess) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (mut design, mut yb, mut yr) = (Vec::new(), Vec::new(), Vec::new());
    for &c in tree.children(u) {
        let p = tree.node(c).cond_prob;
        let s = (p * d_hat[c]).sqrt();
        if !(s > 0.0) {
            continue;
        }
        design.extend(tree.increment(c).iter().map(|x| s * x));
        yb.push(p * a_hat[c] / s);
        yr.push(p * h_hat[c] / s);
    }
    (design, yb, yr)
}

/// Writes `1 - beta . dS` for the edges below `u` into `factor`.
///
/// When beta is a weighted least-squares fit of 1 on the increments, these are
/// the fit residuals. They are computed by projecting onto an orthonormalized
/// span instead of through beta, so they stay accurate when the Gram matrix is
/// badly conditioned and beta is large. Children with zero weight fall back to
/// the direct formula.
fn edge_factors(tree: &ScenarioTree, u: usize, b: &[f64], basis: Option<&[Vec<f64>]>, d_hat: &NodeProcess, factor: &mut NodeProcess) {
    let children = tree.children(u);
    for &c in children {
        factor[c] = 1.0 - dot(b, tree.increment(c));
    }
    let Some(basis) = basis else { return };
    let (idx, sw): (Vec<usize>, Vec<f64>) = children
        .iter()
        .map(|&c| (c, (tree.node(c).cond_prob * d_hat[c]).sqrt()))
        .filter(|&(_, w)| w > 0.0)
        .unzip();
    if basis.is_empty() || idx.is_empty() {
        return;
    }
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
    for v in basis {
        let mut col: Vec<f64> = idx.iter().zip(&sw).map(|(&c, w)| w * dot(v, tree.increment(c))).collect();
        project_out(&q, &mut col);
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            col.iter_mut().for_each(|x| *x /= norm);
            q.push(col);
        }
    }
    if q.len() >= idx.len() {
        // The fit interpolates every weighted child.
        for &c in &idx {
            factor[c] = 0.0;
        }
        return;
    }
    let mut res = sw.clone();
    project_out(&q, &mut res);
    for ((&c, w), r) in idx.iter().zip(&sw).zip(&res) {
        factor[c] = r / w;
    }
}

/// Removes the components along orthonormal `q`, with one reorthogonalization pass.
fn project_out(q: &[Vec<f64>], x: &mut [f64]) {
    for _ in 0..2 {
        for qk in q {
            let t = dot(qk, x);
            x.iter_mut().zip(qk).for_each(|(xi, qi)| *xi -= t * qi);
        }
    }
}
