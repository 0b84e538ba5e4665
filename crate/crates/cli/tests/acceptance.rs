//! Acceptance criteria. Runs as a plain binary so every PASS/FAIL line is
//! printed; exits non-zero when any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use quadhedge::engine::{
    compute_coefficients, objective, optimal_strategy, value_function, z_process, CoefficientTable, EngineConfig, Mode,
};
use quadhedge::generators::{gen_binomial, gen_schachermayer, schachermayer_atom, HorizonExample};
use quadhedge::io::load_tree_str;
use quadhedge::verify::{
    brute_force_optimum, check_arbitrage_witness, nd_diagnostic, random_trees, run_invariant_battery, BatteryConfig,
    RandomTreeSpec, DEFAULT_UNKNOWN_CAP,
};
use quadhedge::{horizon_to_weights, PredictableProcess, RandomHorizon, ScenarioTree};

const CORRELATED: &str = include_str!("../../core/tests/fixtures/correlated_two_asset.json");

/// Sub-checks of one criterion.
struct Criterion {
    id: usize,
    title: &'static str,
    checks: Vec<(String, bool)>,
    notes: Vec<String>,
}

impl Criterion {
    fn new(id: usize, title: &'static str) -> Self {
        Self { id, title, checks: Vec::new(), notes: Vec::new() }
    }

    fn within(&mut self, what: impl Into<String>, err: f64, tol: f64) {
        let what = what.into();
        self.checks.push((format!("{what}: {err:.3e} <= {tol:.0e}"), err <= tol));
    }

    fn holds(&mut self, what: impl Into<String>, ok: bool) {
        self.checks.push((what.into(), ok));
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    fn runtime(&mut self, elapsed: Duration, limit: Duration) {
        self.checks.push((format!("runtime {elapsed:.2?} < {limit:?}"), elapsed < limit));
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }

    fn print(&self) {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        println!("AC{:<2} {status}  {}", self.id, self.title);
        for (what, ok) in &self.checks {
            println!("       [{}] {what}", if *ok { " ok " } else { "FAIL" });
        }
        for note in &self.notes {
            println!("       note: {note}");
        }
    }
}

fn matrix() -> EngineConfig {
    EngineConfig::with_mode(Mode::Matrix)
}

fn max_err(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn ulps(x: f64, y: f64) -> u64 {
    (x.to_bits() as i64 - y.to_bits() as i64).unsigned_abs()
}

fn schachermayer(ac: &mut Criterion) {
    let start = Instant::now();
    for m in [1, 10, 100] {
        let tree = gen_schachermayer(m, false).unwrap();
        let co = compute_coefficients(&tree, &matrix()).unwrap();
        let first: Vec<usize> = tree.children(0).to_vec();
        let beta2 = max_err(first.iter().map(|&v| (co.beta.get(v)[0] - 1.0 / schachermayer_atom(&tree, v)).abs()));
        let rho2 = max_err(first.iter().map(|&v| {
            let u = schachermayer_atom(&tree, v);
            (co.rho.get(v)[0] - (1.0 + u) / (u * u)).abs()
        }));
        let root = (co.beta.get(0)[0] - 1.0).abs().max((co.rho.get(0)[0] - 1.0).abs());
        ac.within(format!("m={m} beta_2 = 1/u"), beta2, 1e-12);
        ac.within(format!("m={m} rho_2 = (1+u)/u^2"), rho2, 1e-12);
        ac.within(format!("m={m} beta_1 = rho_1 = 1"), root, 1e-12);
        let mut xi_err: f64 = 0.0;
        for c in [-1.0, 0.0, 0.5, 2.0] {
            let xi = optimal_strategy(&tree, &co, c).unwrap();
            xi_err = xi_err.max((xi.get(0)[0] - (1.0 - c)).abs());
            for &v in &first {
                let u = schachermayer_atom(&tree, v);
                xi_err = xi_err.max((xi.get(v)[0] - 1.0 / (u * u)).abs());
            }
        }
        ac.within(format!("m={m} xi_1 = 1-c, xi_2 = 1/u^2 over c in {{-1,0,0.5,2}}"), xi_err, 1e-12);
        let (mut rel, mut ulp) = (0.0_f64, 0);
        let xi = optimal_strategy(&tree, &co, 0.0).unwrap();
        for &v in &first {
            let u = schachermayer_atom(&tree, v);
            for (got, want) in [
                (co.beta.get(v)[0], 1.0 / u),
                (co.rho.get(v)[0], (1.0 + u) / (u * u)),
                (xi.get(v)[0], 1.0 / (u * u)),
            ] {
                rel = rel.max((got - want).abs() / want.abs());
                ulp = ulp.max(ulps(got, want));
            }
        }
        ac.note(format!("m={m} second-period values: max relative error {rel:.3e}, max {ulp} ulp"));
    }
    ac.runtime(start.elapsed(), Duration::from_millis(100));
}

fn capped(ac: &mut Criterion) {
    let tree = gen_schachermayer(10, true).unwrap();
    let co = compute_coefficients(&tree, &matrix()).unwrap();
    let first: Vec<usize> = tree.children(0).to_vec();
    let beta2 = max_err(first.iter().map(|&v| (co.beta.get(v)[0] + 1.0).abs()));
    let rho2 = max_err(first.iter().map(|&v| co.rho.get(v)[0].abs()));
    ac.within("beta_2 = -1", beta2, 1e-12);
    ac.within("rho_2 = 0", rho2, 1e-12);
    let (mut xi1, mut xi2_stated, mut xi2_formula) = (0.0_f64, 0.0_f64, 0.0_f64);
    for c in [-1.0, 0.0, 0.5, 2.0] {
        let xi = optimal_strategy(&tree, &co, c).unwrap();
        xi1 = xi1.max((xi.get(0)[0] - (1.0 - c)).abs());
        for &v in &first {
            xi2_stated = xi2_stated.max((xi.get(v)[0] - c).abs());
            // rho_2 - beta_2 (c + G_1) with G_1 = xi_1 * 1.
            xi2_formula = xi2_formula.max((xi.get(v)[0] - (c + (1.0 - c))).abs());
        }
        let oracle = brute_force_optimum(&tree, c, DEFAULT_UNKNOWN_CAP).unwrap();
        ac.within(format!("c={c} brute-force minimum is 0"), oracle.objective.abs(), 1e-12);
    }
    ac.within("xi_1 = 1-c over c in {-1,0,0.5,2}", xi1, 1e-12);
    ac.within("xi_2 = c as stated", xi2_stated, 1e-12);
    ac.note(format!("xi_2 = rho_2 - beta_2 (c + G_1) = 1 holds to {xi2_formula:.3e}"));
}

fn horizon_example(ac: &mut Criterion) {
    let start = Instant::now();
    let ex = HorizonExample::default();
    let tree = ex.tree().unwrap();
    let co = compute_coefficients(&tree, &matrix()).unwrap();
    let (d, a, b) = (ex.down, ex.a, ex.b);
    let mut xi_err: f64 = 0.0;
    for c in [-1.0, 0.0, 0.5, 2.0] {
        let xi = optimal_strategy(&tree, &co, c).unwrap();
        xi_err = xi_err.max((xi.get(0)[0] - (a[2] - c) / (d - 1.0)).abs());
        xi_err = xi_err.max((xi.get(2)[0] - (b[3] - a[2]) / (d * (d - 1.0))).abs());
    }
    ac.within("xi_1 = (a2-c)/(d-1), xi_2 = (b4-a2)/(d(d-1)) on the down node", xi_err, 1e-12);
    let q = value_function(&tree, &co).unwrap();
    ac.within("c* = a0", (q.c_star - a[0]).abs(), 1e-12);
    let (z, _) = z_process(&tree, &co).unwrap();
    ac.within("Z_0 = p", (z[0] - ex.p_up).abs(), 1e-12);
    ac.within("Z_1 = Z_2 = 0", max_err((1..tree.len()).map(|v| z[v].abs())), 1e-12);
    let stopped = ex.stopped_tree().unwrap();
    let mut phi = PredictableProcess::zeros(&stopped, 1);
    for u in [0, 1, 2] {
        phi.set(u, &[-1.0]);
    }
    ac.holds("phi = (-1,-1) is an arbitrage on the stopped market", check_arbitrage_witness(&stopped, &phi).unwrap().is_arbitrage);
    ac.runtime(start.elapsed(), Duration::from_millis(100));
}

fn oracle_equivalence(ac: &mut Criterion) {
    let start = Instant::now();
    let trees = random_trees(200, 42, &RandomTreeSpec::default());
    let mut worst: f64 = 0.0;
    for tree in &trees {
        let co = compute_coefficients(tree, &matrix()).unwrap();
        for c in [0.0, 1.0] {
            let j = objective(tree, &optimal_strategy(tree, &co, c).unwrap(), c);
            let min = brute_force_optimum(tree, c, DEFAULT_UNKNOWN_CAP).unwrap().objective;
            worst = worst.max((j - min).abs() / (1.0 + min));
        }
    }
    ac.within("max |J - J_min| / (1 + J_min) over 200 trees x c in {0,1}", worst, 1e-9);
    ac.runtime(start.elapsed(), Duration::from_secs(30));
}

fn fixtures() -> Vec<(&'static str, ScenarioTree)> {
    let martingale = gen_binomial(3, 1.2, 0.8, 0.5, 1.0).unwrap();
    let weights = vec![1.0; martingale.len()];
    vec![
        ("schachermayer m=1", gen_schachermayer(1, false).unwrap()),
        ("schachermayer m=10", gen_schachermayer(10, false).unwrap()),
        ("schachermayer m=100", gen_schachermayer(100, false).unwrap()),
        ("capped m=10", gen_schachermayer(10, true).unwrap()),
        ("horizon example", HorizonExample::default().tree().unwrap()),
        ("martingale binomial", martingale.with_weights(&weights).unwrap()),
        ("independent horizon", independent_horizon_tree()),
        ("correlated two-asset", load_tree_str(CORRELATED).unwrap()),
    ]
}

fn battery(ac: &mut Criterion) {
    let cfg = BatteryConfig::default();
    for (name, tree) in fixtures() {
        let report = run_invariant_battery(&tree, &[-1.0, 0.0, 0.5, 2.0], &cfg);
        if let Some(f) = report.failures.first() {
            println!("       {name}: first failure {f:?}");
        }
        ac.holds(format!("{name}: {} checks, {} failures", report.checks, report.failures.len()), report.passed());
    }
    let mut checks = 0;
    let mut failures = 0;
    for tree in random_trees(200, 42, &RandomTreeSpec::default()) {
        let report = run_invariant_battery(&tree, &[0.0, 1.0], &cfg);
        checks += report.checks;
        failures += report.failures.len();
    }
    ac.holds(format!("200 random trees: {checks} checks, {failures} failures"), failures == 0);
}

fn martingale_capital_free(ac: &mut Criterion) {
    let tree = gen_binomial(3, 1.2, 0.8, 0.5, 1.0).unwrap();
    let claims: Vec<f64> = tree.nodes().iter().map(|n| (n.prices[0] - 1.0).max(0.0)).collect();
    let tree = tree.with_claims(&claims).unwrap().with_weights(&[1.0; 15]).unwrap();
    let co = compute_coefficients(&tree, &matrix()).unwrap();
    let xi0 = optimal_strategy(&tree, &co, 0.0).unwrap();
    let xi5 = optimal_strategy(&tree, &co, 5.0).unwrap();
    ac.within("||xi*(0) - xi*(5)||_inf on pu + (1-p)d = 1, constant weights", xi0.max_abs_diff(&xi5), 1e-12);
}

fn independent_horizon_tree() -> ScenarioTree {
    let tree = gen_binomial(2, 1.2, 0.8, 0.5, 1.0).unwrap();
    let claims: Vec<f64> = tree.nodes().iter().map(|n| (n.prices[0] - 0.9).max(0.0) + 0.1 * n.time as f64).collect();
    let tree = tree.with_claims(&claims).unwrap();
    horizon_to_weights(&tree, &RandomHorizon::IndependentPmf(vec![0.2, 0.3, 0.5])).unwrap()
}

fn independent_horizon_price(ac: &mut Criterion) {
    let tree = independent_horizon_tree();
    let pmf = [0.2, 0.3, 0.5];
    let prob = tree.path_probabilities();
    let want: f64 = (0..=2)
        .map(|t| pmf[t] * tree.nodes().iter().filter(|n| n.time == t).map(|n| prob[n.id] * n.claim).sum::<f64>())
        .sum();
    let co = compute_coefficients(&tree, &matrix()).unwrap();
    let q = value_function(&tree, &co).unwrap();
    ac.within("|c* - sum E[H_n] pmf[n]|", (q.c_star - want).abs(), 1e-10);
}

fn nd(ac: &mut Criterion) {
    let diag = nd_diagnostic(&gen_schachermayer(100, false).unwrap()).unwrap();
    ac.holds(format!("m=100 sup ratio {} >= 0.9", diag.sup_ratio), diag.sup_ratio >= 0.9);
    ac.holds("m=100 flags ND failure", diag.nd_fails);
    for (u, d) in [(1.2, 0.8), (1.1, 0.9), (1.5, 0.5)] {
        let diag = nd_diagnostic(&gen_binomial(3, u, d, 0.5, 1.0).unwrap()).unwrap();
        ac.within(format!("martingale u={u} d={d} sup ratio"), diag.sup_ratio, 1e-24);
    }
}

fn coefficient_gap(x: &CoefficientTable, y: &CoefficientTable) -> f64 {
    x.beta.max_abs_diff(&y.beta).max(x.rho.max_abs_diff(&y.rho))
}

fn literal_vs_matrix(ac: &mut Criterion) {
    let spec = RandomTreeSpec { max_assets: 1, ..Default::default() };
    let mut one_asset: Vec<ScenarioTree> = fixtures().into_iter().map(|(_, t)| t).filter(|t| t.num_assets() == 1).collect();
    one_asset.extend(random_trees(100, 42, &spec));
    let mut worst: f64 = 0.0;
    for tree in &one_asset {
        let mx = compute_coefficients(tree, &matrix()).unwrap();
        let lit = compute_coefficients(tree, &EngineConfig::with_mode(Mode::AppendixLiteral)).unwrap();
        worst = worst.max(coefficient_gap(&mx, &lit));
        for c in [0.0, 1.0] {
            let a = optimal_strategy(tree, &mx, c).unwrap();
            let b = optimal_strategy(tree, &lit, c).unwrap();
            worst = worst.max(a.max_abs_diff(&b));
        }
    }
    ac.within(format!("M=1 matrix vs literal on {} trees", one_asset.len()), worst, 1e-12);

    let tree = load_tree_str(CORRELATED).unwrap();
    let j = |mode| {
        let co = compute_coefficients(&tree, &EngineConfig::with_mode(mode)).unwrap();
        objective(&tree, &optimal_strategy(&tree, &co, 0.0).unwrap(), 0.0)
    };
    let (jm, jl) = (j(Mode::Matrix), j(Mode::AppendixLiteral));
    let min = brute_force_optimum(&tree, 0.0, DEFAULT_UNKNOWN_CAP).unwrap().objective;
    ac.holds(format!("correlated fixture: matrix {jm:.6e} < literal {jl:.6e}"), jm < jl);
    ac.within("correlated fixture: matrix vs brute force (relative)", (jm - min).abs() / (1.0 + min), 1e-9);
}

fn determinism(ac: &mut Criterion) {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_quadhedge"))
            .args(["verify", "--random", "200", "--seed", "42"])
            .env_remove("QUADHEDGE_SEED")
            .output()
            .expect("binary runs")
    };
    let (first, second) = (run(), run());
    ac.holds("both runs exit 0", first.status.success() && second.status.success());
    ac.holds(format!("reports byte-identical ({} bytes)", first.stdout.len()), !first.stdout.is_empty() && first.stdout == second.stdout);
}

type Step = (usize, &'static str, fn(&mut Criterion));

fn main() {
    let steps: [Step; 10] = [
        (1, "Schachermayer coefficients and strategy", schachermayer),
        (2, "capped variant", capped),
        (3, "binomial random-horizon example", horizon_example),
        (4, "oracle equivalence on 200 random trees", oracle_equivalence),
        (5, "invariant battery on fixtures and random trees", battery),
        (6, "capital-free strategy on a martingale", martingale_capital_free),
        (7, "price under an independent horizon", independent_horizon_price),
        (8, "ND diagnostic", nd),
        (9, "matrix vs literal denominators", literal_vs_matrix),
        (10, "deterministic verify reports", determinism),
    ];
    let mut failed = Vec::new();
    for (id, title, f) in steps {
        let mut ac = Criterion::new(id, title);
        f(&mut ac);
        ac.print();
        if !ac.passed() {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
