//! Invariant battery: every identity of the closed-form solution evaluated
//! pathwise on a concrete tree, plus agreement with the brute-force oracle.

use serde::Serialize;

use crate::engine::strategy::check_strategy;
use crate::engine::{
    compute_coefficients, gains, objective, optimal_strategy, value_function, CoefficientTable, EngineConfig, Mode,
    DEFAULT_EPS_DEG, ValueQuadratic,
};
use crate::error::Result;
use crate::tree::{dot, PredictableProcess, ScenarioTree};
use crate::verify::nd::nd_diagnostic;
use crate::verify::oracle::{brute_force_optimum, DEFAULT_UNKNOWN_CAP};
use crate::Error;

pub const DEFAULT_CHECK_TOL: f64 = 1e-10;
const ACCUMULATOR_TOL: f64 = 1e-12;
const ORACLE_TOL: f64 = 1e-9;
const MODE_EQUIV_TOL: f64 = 1e-12;
const MARTINGALE_TOL: f64 = 1e-12;

/// Per-node residual of the first-order optimality condition
/// `E[dS * sum_{n >= i} w_n (H_n - c - G_n) | F_{i-1}] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityResiduals {
    pub residuals: PredictableProcess,
    /// Same expectation with every term in absolute value; 0 on leaves.
    pub scales: Vec<f64>,
    pub max_abs: f64,
    /// `max |residual| / max(1, scale)`.
    pub max_scaled: f64,
}

pub fn check_optimality_condition(
    tree: &ScenarioTree,
    coeffs: &CoefficientTable,
    strategy: &PredictableProcess,
    capital: f64,
) -> Result<OptimalityResiduals> {
    coeffs.check_tree(tree)?;
    check_strategy(tree, strategy)?;
    let m = tree.num_assets();
    let g = gains(tree, strategy);
    let n = tree.len();
    let mut w = vec![0.0; n];
    let mut w_abs = vec![0.0; n];
    let mut residuals = PredictableProcess::zeros(tree, m);
    let mut scales = vec![0.0; n];
    let (mut max_abs, mut max_scaled) = (0.0_f64, 0.0_f64);
    for v in (0..n).rev() {
        let node = tree.node(v);
        let e = node.claim - capital - g[v];
        w[v] = node.weight * e;
        w_abs[v] = node.weight * e.abs();
        if tree.is_terminal(v) {
            continue;
        }
        let mut res = vec![0.0; m];
        let mut scale = 0.0;
        for &c in tree.children(v) {
            let p = tree.node(c).cond_prob;
            let ds = tree.increment(c);
            for k in 0..m {
                res[k] += p * ds[k] * w[c];
                scale += p * ds[k].abs() * w_abs[c];
            }
            w[v] += p * w[c];
            w_abs[v] += p * w_abs[c];
        }
        let worst = res.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        max_abs = max_abs.max(worst);
        max_scaled = max_scaled.max(worst / scale.max(1.0));
        residuals.set(v, &res);
        scales[v] = scale;
    }
    Ok(OptimalityResiduals { residuals, scales, max_abs, max_scaled })
}

/// Both sides of `prod_{i}(1 - a_i) = 1 - sum_i a_i prod_{j > i}(1 - a_j)`.
pub fn product_identity_sides(a: &[f64]) -> (f64, f64) {
    let lhs = a.iter().map(|x| 1.0 - x).product();
    let mut tail = 1.0;
    let mut sum = 0.0;
    for x in a.iter().rev() {
        sum += x * tail;
        tail *= 1.0 - x;
    }
    (lhs, 1.0 - sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatteryConfig {
    pub mode: Mode,
    pub eps_deg: f64,
    pub check_tol: f64,
    pub oracle_cap: usize,
    pub run_oracle: bool,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Matrix,
            eps_deg: DEFAULT_EPS_DEG,
            check_tol: DEFAULT_CHECK_TOL,
            oracle_cap: DEFAULT_UNKNOWN_CAP,
            run_oracle: true,
        }
    }
}

impl BatteryConfig {
    pub fn engine(&self) -> EngineConfig {
        EngineConfig { mode: self.mode, eps_deg: self.eps_deg }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryFailure {
    pub instance: usize,
    pub check: &'static str,
    pub node_id: Option<usize>,
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct BatteryReport {
    pub instances: usize,
    pub checks: usize,
    pub failures: Vec<BatteryFailure>,
    /// Checks not applicable to an instance, as `instance: reason`.
    pub skipped: Vec<String>,
}

impl BatteryReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn merge(&mut self, other: BatteryReport) {
        self.instances += other.instances;
        self.checks += other.checks;
        self.failures.extend(other.failures);
        self.skipped.extend(other.skipped);
    }

    /// Re-labels every failure of a single-instance report.
    pub fn with_instance(mut self, instance: usize) -> Self {
        for f in &mut self.failures {
            f.instance = instance;
        }
        for s in &mut self.skipped {
            if let Some((_, rest)) = s.split_once(": ") {
                *s = format!("{instance}: {rest}");
            }
        }
        self
    }
}

struct Checker {
    instance: usize,
    report: BatteryReport,
}

impl Checker {
    fn check(&mut self, check: &'static str, node_id: Option<usize>, residual: f64, tolerance: f64) {
        self.report.checks += 1;
        // NaN residuals fail.
        if !(residual <= tolerance) {
            self.report.failures.push(BatteryFailure { instance: self.instance, check, node_id, residual, tolerance });
        }
    }

    fn skip(&mut self, reason: String) {
        self.report.skipped.push(format!("{}: {reason}", self.instance));
    }
}

pub fn run_invariant_battery(tree: &ScenarioTree, capitals: &[f64], cfg: &BatteryConfig) -> BatteryReport {
    match compute_coefficients(tree, &cfg.engine()) {
        Ok(coeffs) => run_invariant_battery_with_coefficients(tree, &coeffs, capitals, cfg),
        Err(e) => engine_failure(e),
    }
}

fn engine_failure(e: Error) -> BatteryReport {
    let node_id = match e {
        Error::NonFinite { node, .. } | Error::Invariant { node, .. } => Some(node),
        _ => None,
    };
    log::error!("engine failed: {e}");
    BatteryReport {
        instances: 1,
        checks: 1,
        failures: vec![BatteryFailure { instance: 0, check: "engine", node_id, residual: f64::NAN, tolerance: 0.0 }],
        skipped: Vec::new(),
    }
}

/// Runs the battery against a given coefficient table, which need not be the
/// one the engine would compute.
pub fn run_invariant_battery_with_coefficients(
    tree: &ScenarioTree,
    coeffs: &CoefficientTable,
    capitals: &[f64],
    cfg: &BatteryConfig,
) -> BatteryReport {
    let mut ck = Checker { instance: 0, report: BatteryReport { instances: 1, ..Default::default() } };
    if let Err(e) = coeffs.check_tree(tree) {
        return engine_failure(e);
    }
    let tol = cfg.check_tol;
    let m = tree.num_assets();
    // The scalar literal denominator is not a least-squares solve for M > 1,
    // so optimality-derived identities do not apply.
    let optimal = !(coeffs.mode == Mode::AppendixLiteral && m > 1);
    if !optimal {
        ck.skip("optimality identities do not apply to the literal denominator with several assets".into());
    }

    coefficient_checks(&mut ck, tree, coeffs, optimal, tol);
    if m == 1 {
        mode_equivalence(&mut ck, tree, coeffs, cfg);
    }
    if optimal {
        restart_identity(&mut ck, tree, coeffs, tol);
    }

    let value = match value_function(tree, coeffs) {
        Ok(v) => v,
        Err(e) => return engine_failure(e),
    };
    let mut all_capitals: Vec<f64> = capitals.to_vec();
    for c in [-1.0, 0.0, value.c_star, 1.0, 10.0] {
        if !all_capitals.contains(&c) {
            all_capitals.push(c);
        }
    }

    for (ci, &c) in all_capitals.iter().enumerate() {
        let strategy = match optimal_strategy(tree, coeffs, c) {
            Ok(s) => s,
            Err(e) => return engine_failure(e),
        };
        let g = gains(tree, &strategy);
        ck.check("gains_root", Some(0), g[0].abs(), 0.0);
        let (r, pi) = residual_identity(&mut ck, tree, coeffs, &strategy, c, tol);
        if ci == 0 {
            cross_term(&mut ck, tree, &r, &pi, tol, optimal);
        }
        if !optimal {
            if ci < capitals.len() {
                oracle_checks(&mut ck, tree, &strategy, c, cfg, false);
            }
            continue;
        }
        let j = objective(tree, &strategy, c);
        let v = value.eval(c);
        ck.check("quadratic_consistency", None, (j - v).abs(), tol * j.abs().max(1.0));
        if ci < capitals.len() {
            let opt = check_optimality_condition(tree, coeffs, &strategy, c).expect("consistent inputs");
            for u in tree.non_terminal() {
                let worst = opt.residuals.get(u).iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
                ck.check("optimality_condition", Some(u), worst, tol * opt.scales[u].max(1.0));
            }
            oracle_checks(&mut ck, tree, &strategy, c, cfg, true);
            martingale_checks(&mut ck, tree, coeffs, &strategy, c);
        }
    }

    if optimal {
        value_checks(&mut ck, coeffs, &value);
    }
    if m == 1 {
        let nd = nd_diagnostic(tree).expect("single asset");
        for r in &nd.ratios {
            ck.check("nd_ratio_bound", Some(r.node_id), r.ratio, 1.0 + 1e-12);
        }
    }
    ck.report
}

fn coefficient_checks(ck: &mut Checker, tree: &ScenarioTree, co: &CoefficientTable, optimal: bool, tol: f64) {
    let m = tree.num_assets();
    let bound_scale = tree.max_weight().max(1.0);
    for v in 0..tree.len() {
        let (a, d) = (co.a_hat[v], co.d_hat[v]);
        let n = tree.node(v).time;
        if optimal {
            ck.check("accumulator_a_equals_d", Some(v), (a - d).abs(), ACCUMULATOR_TOL * (1.0 + a.abs()));
            ck.check("accumulator_a_nonnegative", Some(v), -a, ACCUMULATOR_TOL * (1.0 + a.abs()));
            let cap = (tree.num_periods() - n + 1) as f64 * bound_scale + 1e-9;
            ck.check("accumulator_a_upper_bound", Some(v), a - cap, 0.0);
        }
        if tree.is_terminal(v) {
            continue;
        }
        let (alpha, eta, beta, rho) = (co.alpha.get(v), co.eta.get(v), co.beta.get(v), co.rho.get(v));
        if co.degenerate[v] {
            let worst = beta.iter().chain(rho).fold(0.0_f64, |acc, x| acc.max(x.abs()));
            ck.check("degenerate_zero_coefficients", Some(v), worst, 0.0);
        }
        let lhs = dot(beta, eta);
        let rhs = dot(rho, alpha);
        let scale = 1.0 + abs_dot(beta, eta) + abs_dot(rho, alpha);
        ck.check("beta_eta_rho_alpha", Some(v), (lhs - rhs).abs(), ACCUMULATOR_TOL * scale);

        if optimal {
            // delta beta = alpha and delta rho = eta on the range of delta.
            let delta = co.delta.get(v);
            let apply = |x: &[f64]| -> Vec<f64> {
                if delta.len() == 1 {
                    x.iter().map(|xi| delta[0] * xi).collect()
                } else {
                    (0..m).map(|i| (0..m).map(|j| delta[i * m + j] * x[j]).sum()).collect()
                }
            };
            let dnorm = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (x, target) in [(beta, alpha), (rho, eta)] {
                let mx = apply(x);
                let err = mx.iter().zip(target).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                let scale = 1.0 + dnorm * crate::tree::norm(x) + crate::tree::norm(target);
                ck.check("gram_consistency", Some(v), err, tol * scale);
            }
        }
    }
}

fn abs_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x * y).abs()).sum()
}

/// On one asset all three denominators coincide.
fn mode_equivalence(ck: &mut Checker, tree: &ScenarioTree, co: &CoefficientTable, cfg: &BatteryConfig) {
    for mode in [Mode::Single, Mode::Matrix, Mode::AppendixLiteral] {
        if mode == co.mode {
            continue;
        }
        let Ok(other) = compute_coefficients(tree, &EngineConfig { mode, eps_deg: cfg.eps_deg }) else {
            ck.check("mode_equivalence", None, f64::NAN, MODE_EQUIV_TOL);
            continue;
        };
        let worst = [
            other.beta.max_abs_diff(&co.beta),
            other.rho.max_abs_diff(&co.rho),
            other.alpha.max_abs_diff(&co.alpha),
            other.eta.max_abs_diff(&co.eta),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        ck.check("mode_equivalence", None, worst, MODE_EQUIV_TOL);
    }
}

/// Checks `H_n - c - G_n = H_n - sum_{i=k}^n rho_i dS_i prod_{j>i}(1 - beta_j dS_j)
/// - (c + G_{k-1}) prod_{i=k}^n (1 - beta_i dS_i)` at every node and every
/// `k = 0..=n+1`. Returns the `k = 1` response and path product per node.
fn residual_identity(
    ck: &mut Checker,
    tree: &ScenarioTree,
    co: &CoefficientTable,
    strategy: &PredictableProcess,
    c: f64,
    tol: f64,
) -> (Vec<f64>, Vec<f64>) {
    let g = gains(tree, strategy);
    let mut response = vec![0.0; tree.len()];
    let mut product = vec![1.0; tree.len()];
    for v in 0..tree.len() {
        let path = tree.path_to(v);
        let n = path.len() - 1;
        let h = tree.node(v).claim;
        let lhs = h - c - g[v];
        // f[i], r[i] for i = 1..=n; index 0 is the empty step.
        let mut f = vec![1.0; n + 2];
        let mut r = vec![0.0; n + 2];
        // Size of the terms that cancel into G_n.
        let mut gain_abs = 0.0;
        for i in 1..=n {
            let ds = tree.increment(path[i]);
            f[i] = 1.0 - dot(co.beta.get(path[i - 1]), ds);
            r[i] = dot(co.rho.get(path[i - 1]), ds);
            gain_abs += strategy.get(path[i - 1]).iter().zip(ds).map(|(x, d)| (x * d).abs()).sum::<f64>();
        }
        // Backward over k: sum_k = r_k prod_{j>k} f_j + sum_{k+1}.
        let (mut sum, mut sum_abs, mut suffix) = (0.0, 0.0, 1.0);
        for k in (0..=n + 1).rev() {
            if k <= n {
                sum += r[k] * suffix;
                sum_abs += (r[k] * suffix).abs();
                suffix *= f[k];
            }
            let g_prev = if k == 0 { 0.0 } else { g[path[k - 1]] };
            let carry = (c + g_prev) * suffix;
            let rhs = h - sum - carry;
            let scale = 1.0 + h.abs() + c.abs() + gain_abs + sum_abs + carry.abs();
            ck.check("residual_identity", Some(v), (lhs - rhs).abs(), tol * scale);
            if k == 1 {
                response[v] = sum;
                product[v] = suffix;
            }
        }
    }
    (response, product)
}

fn cross_term(ck: &mut Checker, tree: &ScenarioTree, r: &[f64], pi: &[f64], tol: f64, optimal: bool) {
    if !optimal {
        return;
    }
    let prob = tree.path_probabilities();
    let (mut ct, mut scale) = (0.0, 1.0);
    for node in tree.nodes() {
        let t = prob[node.id] * node.weight * r[node.id] * pi[node.id];
        ct += t;
        scale += t.abs();
    }
    ck.check("cross_term", None, ct.abs(), tol * scale);
}

/// For every non-terminal `u` and child `c`, restarts the rho- and
/// beta-weighted responses at `c` and compares the `dS`-weighted
/// conditional sums of both sides.
fn restart_identity(ck: &mut Checker, tree: &ScenarioTree, co: &CoefficientTable, tol: f64) {
    let m = tree.num_assets();
    let mut rho_resp = vec![0.0; tree.len()];
    let mut beta_resp = vec![0.0; tree.len()];
    let mut cond = vec![0.0; tree.len()];
    for u in tree.non_terminal() {
        let mut lhs = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        let mut scale = 1.0;
        for &c in tree.children(u) {
            let (mut acc_rho, mut acc_beta, mut acc_abs) = (0.0, 0.0, 0.0);
            rho_resp[c] = 0.0;
            beta_resp[c] = 0.0;
            cond[c] = 1.0;
            let mut stack = vec![c];
            while let Some(w) = stack.pop() {
                let node = tree.node(w);
                acc_rho += cond[w] * node.weight * rho_resp[w];
                acc_beta += cond[w] * node.weight * node.claim * beta_resp[w];
                acc_abs += cond[w] * node.weight * (rho_resp[w].abs() + (node.claim * beta_resp[w]).abs());
                for &x in tree.children(w).iter().rev() {
                    let ds = tree.increment(x);
                    let bds = dot(co.beta.get(w), ds);
                    let f = 1.0 - bds;
                    rho_resp[x] = f * rho_resp[w] + dot(co.rho.get(w), ds);
                    beta_resp[x] = f * beta_resp[w] + bds;
                    cond[x] = cond[w] * tree.node(x).cond_prob;
                    stack.push(x);
                }
            }
            let p = tree.node(c).cond_prob;
            let ds = tree.increment(c);
            for k in 0..m {
                lhs[k] += p * ds[k] * acc_rho;
                rhs[k] += p * ds[k] * acc_beta;
                scale += p * ds[k].abs() * acc_abs;
            }
        }
        let worst = lhs.iter().zip(&rhs).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        ck.check("restart_identity", Some(u), worst, tol * scale);
    }
}

fn oracle_checks(
    ck: &mut Checker,
    tree: &ScenarioTree,
    strategy: &PredictableProcess,
    c: f64,
    cfg: &BatteryConfig,
    optimal: bool,
) {
    if !cfg.run_oracle {
        return;
    }
    let sol = match brute_force_optimum(tree, c, cfg.oracle_cap) {
        Ok(sol) => sol,
        Err(Error::CapExceeded { unknowns, cap }) => {
            ck.skip(format!("oracle skipped at c = {c}: {unknowns} unknowns exceed cap {cap}"));
            return;
        }
        Err(_) => {
            ck.check("oracle", None, f64::NAN, 0.0);
            return;
        }
    };
    let j = objective(tree, strategy, c);
    let tol = ORACLE_TOL * (1.0 + sol.objective);
    if optimal {
        ck.check("oracle_equivalence", None, (j - sol.objective).abs(), tol);
    } else {
        ck.check("oracle_lower_bound", None, sol.objective - j, tol);
    }
    ck.check("normal_matrix_psd", None, -sol.min_eigenvalue, 1e-10 * sol.trace.max(1.0));
    ck.check("normal_matrix_symmetric", None, sol.max_asymmetry, 1e-12 * sol.trace.max(1.0));
}

/// With martingale prices and time-deterministic weights the strategy does
/// not depend on the capital and equals `rho`.
fn martingale_checks(ck: &mut Checker, tree: &ScenarioTree, co: &CoefficientTable, strategy: &PredictableProcess, c: f64) {
    let martingale = tree.non_terminal().all(|u| {
        (0..tree.num_assets()).all(|k| {
            let (drift, size) = tree.children(u).iter().fold((0.0, 0.0), |(d, s), &x| {
                let p = tree.node(x).cond_prob;
                let ds = tree.increment(x)[k];
                (d + p * ds, s + p * ds.abs())
            });
            drift.abs() <= 1e-12 * size.max(1.0)
        })
    });
    let constant_weights = tree.nodes().iter().all(|n| {
        let first = tree.nodes().iter().find(|x| x.time == n.time).unwrap();
        n.weight == first.weight
    });
    if !(martingale && constant_weights) {
        return;
    }
    let other_c = if c == 5.0 { 0.0 } else { 5.0 };
    let other = optimal_strategy(tree, co, other_c).expect("consistent inputs");
    ck.check("martingale_capital_free", None, strategy.max_abs_diff(&other), MARTINGALE_TOL);
    for (u, xi) in strategy.iter() {
        let rho = co.rho.get(u);
        let worst = xi.iter().zip(rho).fold(0.0_f64, |acc, (x, r)| acc.max((x - r).abs()));
        let scale = rho.iter().fold(1.0_f64, |acc, r| acc.max(r.abs()));
        ck.check("martingale_equals_rho", Some(u), worst, MARTINGALE_TOL * scale);
    }
}

fn value_checks(ck: &mut Checker, co: &CoefficientTable, q: &ValueQuadratic) {
    ck.check("value_a_nonnegative", None, -q.a, 1e-12);
    ck.check("value_d_nonnegative", None, -q.d, 1e-12);
    // sum E[Z] is the root accumulator.
    ck.check("value_a_root_accumulator", None, (q.a - co.a_hat[0]).abs(), 1e-10 * (1.0 + q.a.abs()));
    let v_star = q.eval(q.c_star);
    let spread = q.c_star.abs().max(1.0);
    for i in 0..100 {
        let c = q.c_star + (i as f64 - 49.5) / 10.0 * spread;
        let v = q.eval(c);
        ck.check("price_optimality", None, v_star - v, 1e-12 * v.abs().max(1.0));
    }
}
