//! Small dense least-squares solves for the per-node fits.

/// Thin SVD `a = U diag(sigma) V^T` of a row-major `rows x cols` matrix.
#[derive(Debug, Clone)]
pub struct Svd {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`; column `k` is `a v_k / sigma_k` (zero when `sigma_k = 0`).
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Row-major `cols x cols`; column `k` is the right singular vector `v_k`.
    pub v: Vec<f64>,
}

impl Svd {
    pub fn u_col(&self, k: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.u[i * self.cols + k]).collect()
    }

    pub fn v_col(&self, k: usize) -> Vec<f64> {
        (0..self.cols).map(|i| self.v[i * self.cols + k]).collect()
    }
}

/// One-sided (Hestenes) Jacobi SVD. Small singular values come out with
/// high relative accuracy, which a Gram-matrix eigensolve cannot give.
pub fn jacobi_svd(a: &[f64], rows: usize, cols: usize) -> Svd {
    assert_eq!(a.len(), rows * cols);
    let mut w = a.to_vec();
    let mut v = vec![0.0; cols * cols];
    for i in 0..cols {
        v[i * cols + i] = 1.0;
    }
    let col_dot = |w: &[f64], p: usize, q: usize| (0..rows).map(|i| w[i * cols + p] * w[i * cols + q]).sum::<f64>();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (app, aqq, apq) = (col_dot(&w, p, p), col_dot(&w, q, q), col_dot(&w, p, q));
                if apq == 0.0 || apq.abs() <= f64::EPSILON * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (m, n) in [(&mut w, rows), (&mut v, cols)] {
                    for i in 0..n {
                        let (xp, xq) = (m[i * cols + p], m[i * cols + q]);
                        m[i * cols + p] = c * xp - s * xq;
                        m[i * cols + q] = s * xp + c * xq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = (0..cols).map(|k| col_dot(&w, k, k).sqrt()).collect();
    for k in 0..cols {
        for i in 0..rows {
            w[i * cols + k] = if sigma[k] > 0.0 { w[i * cols + k] / sigma[k] } else { 0.0 };
        }
    }
    Svd { rows, cols, u: w, sigma, v }
}

/// Minimal-norm least-squares solutions of `a x ~ b` for each `b` in `rhs`.
///
/// Singular values at or below `cutoff` are treated as zero. Returns the
/// solutions in `rhs` order and the kept right singular vectors, whose count
/// is the numerical rank.
pub fn min_norm_lstsq(a: &[f64], rows: usize, cols: usize, rhs: &[&[f64]], cutoff: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let svd = jacobi_svd(a, rows, cols);
    let mut out = vec![vec![0.0; cols]; rhs.len()];
    let mut kept = Vec::new();
    for k in 0..cols {
        let sk = svd.sigma[k];
        if !(sk > cutoff) {
            continue;
        }
        let (uk, vk) = (svd.u_col(k), svd.v_col(k));
        for (x, b) in out.iter_mut().zip(rhs) {
            let coef = uk.iter().zip(b.iter()).map(|(p, q)| p * q).sum::<f64>() / sk;
            for (xi, vi) in x.iter_mut().zip(&vk) {
                *xi += coef * vi;
            }
        }
        kept.push(vk);
    }
    (out, kept)
}
