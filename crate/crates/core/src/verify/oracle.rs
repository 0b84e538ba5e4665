//! Brute-force minimization of `J(xi; c)` over all predictable strategies.
//!
//! Every strategy component `xi(u, k)` on a non-terminal node `u` and asset
//! `k` is an unknown. A node `v` contributes the squared residual
//! `P(v) w(v) (H(v) - c - sum_{edges} xi . dS)^2`, so `J` is a quadratic in
//! the stacked unknowns and its minimum follows from the normal equations.
//! The minimal-norm solution of those equations is the minimal-norm
//! least-squares solution of the weighted design rows. It is computed from the
//! singular pairs of the design, read off the symmetric matrix
//! `[[0, A], [A^T, 0]]`, so the conditioning is not squared.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tree::{PredictableProcess, ScenarioTree};

pub const DEFAULT_UNKNOWN_CAP: usize = 2000;

#[derive(Debug, Clone)]
struct Row {
    weight: f64,
    target: f64,
    terms: Vec<(usize, f64)>,
}

/// The exact finite-dimensional restatement of the hedging problem.
#[derive(Debug, Clone)]
pub struct LeastSquaresSystem {
    /// `(node, asset)` of each column.
    pub columns: Vec<(usize, usize)>,
    pub normal: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// `sum_v P(v) w(v) (H(v) - c)^2`.
    pub offset: f64,
    rows: Vec<Row>,
}

impl LeastSquaresSystem {
    pub fn assemble(tree: &ScenarioTree, capital: f64, cap: usize) -> Result<Self> {
        let m = tree.num_assets();
        let mut column_of = vec![usize::MAX; tree.len()];
        let mut columns = Vec::new();
        for u in tree.non_terminal() {
            column_of[u] = columns.len();
            for k in 0..m {
                columns.push((u, k));
            }
        }
        let unknowns = columns.len();
        if unknowns > cap {
            return Err(Error::CapExceeded { unknowns, cap });
        }

        let prob = tree.path_probabilities();
        let mut rows = Vec::new();
        for node in tree.nodes() {
            let weight = prob[node.id] * node.weight;
            if weight == 0.0 {
                continue;
            }
            let mut terms = Vec::with_capacity(node.time * m);
            let mut v = node.id;
            while let Some(parent) = tree.node(v).parent {
                let ds = tree.increment(v);
                terms.extend(ds.iter().enumerate().map(|(k, &x)| (column_of[parent] + k, x)));
                v = parent;
            }
            rows.push(Row { weight, target: node.claim - capital, terms });
        }

        let mut normal = DMatrix::<f64>::zeros(unknowns, unknowns);
        let mut rhs = DVector::<f64>::zeros(unknowns);
        let mut offset = 0.0;
        for row in &rows {
            offset += row.weight * row.target * row.target;
            for &(i, gi) in &row.terms {
                rhs[i] += row.weight * row.target * gi;
                for &(j, gj) in &row.terms {
                    normal[(i, j)] += row.weight * gi * gj;
                }
            }
        }
        if normal.iter().chain(rhs.iter()).any(|x| !x.is_finite()) || !offset.is_finite() {
            return Err(Error::NonFinite { node: 0, what: "normal equations" });
        }
        Ok(Self { columns, normal, rhs, offset, rows })
    }

    /// Rows `sqrt(P w) (dS terms)` over the `active` columns and targets `sqrt(P w) (H - c)`.
    fn design(&self, active: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let mut local = vec![usize::MAX; self.unknowns()];
        for (i, &col) in active.iter().enumerate() {
            local[col] = i;
        }
        let mut a = DMatrix::<f64>::zeros(self.rows.len(), active.len());
        let mut b = DVector::<f64>::zeros(self.rows.len());
        for (r, row) in self.rows.iter().enumerate() {
            let s = row.weight.sqrt();
            b[r] = s * row.target;
            for &(i, g) in &row.terms {
                if local[i] != usize::MAX {
                    a[(r, local[i])] += s * g;
                }
            }
        }
        (a, b)
    }

    pub fn unknowns(&self) -> usize {
        self.columns.len()
    }

    /// `J` evaluated from the per-node residual rows at the stacked `x`.
    pub fn objective_at(&self, x: &DVector<f64>) -> f64 {
        self.rows
            .iter()
            .map(|row| {
                let fit: f64 = row.terms.iter().map(|&(i, g)| g * x[i]).sum();
                let e = row.target - fit;
                row.weight * e * e
            })
            .sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.unknowns();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.normal[(i, j)] - self.normal[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn trace(&self) -> f64 {
        self.normal.trace()
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub strategy: PredictableProcess,
    pub objective: f64,
    pub unknowns: usize,
    pub rank: usize,
    pub min_eigenvalue: f64,
    pub trace: f64,
    pub max_asymmetry: f64,
}

/// Minimal-norm minimizer of the normal equations and the attained objective.
///
/// Unknowns whose normal-matrix diagonal is exactly zero never affect `J`
/// and are pinned to zero before the eigen-solve.
pub fn brute_force_optimum(tree: &ScenarioTree, capital: f64, cap: usize) -> Result<OracleSolution> {
    let system = LeastSquaresSystem::assemble(tree, capital, cap)?;
    let n = system.unknowns();
    let active: Vec<usize> = (0..n).filter(|&i| system.normal[(i, i)] != 0.0).collect();
    let mut x = DVector::<f64>::zeros(n);
    let (mut rank, mut min_eigenvalue) = (0, 0.0_f64);
    if !active.is_empty() {
        let k = active.len();
        let reduced = DMatrix::from_fn(k, k, |i, j| system.normal[(active[i], active[j])]);
        min_eigenvalue = SymmetricEigen::new(reduced).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let (design, target) = system.design(&active);
        let (y, r) = min_norm_from_augmented(&design, &target);
        rank = r;
        for (i, &col) in active.iter().enumerate() {
            x[col] = y[i];
        }
    }
    let objective = system.objective_at(&x);
    if !objective.is_finite() {
        return Err(Error::NonFinite { node: 0, what: "oracle objective" });
    }
    let mut strategy = PredictableProcess::zeros(tree, tree.num_assets());
    for (i, &(u, k)) in system.columns.iter().enumerate() {
        strategy.get_mut(u)[k] = x[i];
    }
    Ok(OracleSolution {
        strategy,
        objective,
        unknowns: n,
        rank,
        min_eigenvalue: if active.len() < n { min_eigenvalue.min(0.0) } else { min_eigenvalue },
        trace: system.trace(),
        max_asymmetry: system.max_asymmetry(),
    })
}

/// Minimal-norm least-squares solution of `a x ~ b` and the numerical rank.
///
/// The eigenpairs of `[[0, a], [a^T, 0]]` with eigenvalue `sigma > 0` are
/// `(u; v) / sqrt(2)` for the singular triples of `a`.
fn min_norm_from_augmented(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize) {
    let (r, k) = a.shape();
    let mut aug = DMatrix::<f64>::zeros(r + k, r + k);
    aug.view_mut((0, r), (r, k)).copy_from(a);
    aug.view_mut((r, 0), (k, r)).copy_from(&a.transpose());
    let eig = SymmetricEigen::new(aug);
    let sigma_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = r.max(k) as f64 * f64::EPSILON * sigma_max;
    let mut x = DVector::<f64>::zeros(k);
    let mut rank = 0;
    for (idx, &sigma) in eig.eigenvalues.iter().enumerate() {
        if !(sigma > cutoff) {
            continue;
        }
        rank += 1;
        let w = eig.eigenvectors.column(idx);
        let (wu, wv) = (w.rows(0, r), w.rows(r, k));
        x += wv * (2.0 * wu.dot(b) / sigma);
    }
    (x, rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{compute_coefficients, objective, optimal_strategy, EngineConfig};
    use crate::generators::{gen_binomial, gen_schachermayer};

    #[test]
    fn matches_closed_form_on_schachermayer() {
        let tree = gen_schachermayer(4, false).unwrap();
        let sol = brute_force_optimum(&tree, 0.0, DEFAULT_UNKNOWN_CAP).unwrap();
        let coeffs = compute_coefficients(&tree, &EngineConfig::default()).unwrap();
        let xi = optimal_strategy(&tree, &coeffs, 0.0).unwrap();
        let closed = objective(&tree, &xi, 0.0);
        assert!((sol.objective - closed).abs() <= 1e-9 * (1.0 + sol.objective));
        assert!((objective(&tree, &sol.strategy, 0.0) - sol.objective).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_zero_objective() {
        let tree = gen_binomial(2, 1.1, 0.9, 0.5, 1.0).unwrap();
        let tree = tree.with_weights(&[0.0; 7]).unwrap();
        let sol = brute_force_optimum(&tree, 1.0, DEFAULT_UNKNOWN_CAP).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert!(sol.strategy.iter().all(|(_, x)| x[0] == 0.0));
    }

    #[test]
    fn cap_is_enforced() {
        let tree = gen_binomial(4, 1.1, 0.9, 0.5, 1.0).unwrap();
        let err = brute_force_optimum(&tree, 0.0, 10).unwrap_err();
        assert_eq!(err, Error::CapExceeded { unknowns: 15, cap: 10 });
    }

    #[test]
    fn normal_matrix_is_symmetric_psd() {
        let tree = gen_schachermayer(5, false).unwrap();
        let sol = brute_force_optimum(&tree, 0.5, DEFAULT_UNKNOWN_CAP).unwrap();
        assert_eq!(sol.max_asymmetry, 0.0);
        assert!(sol.min_eigenvalue >= -1e-10 * sol.trace);
    }
}
