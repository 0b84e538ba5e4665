use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context};
use serde_json::{json, Value};

use quadhedge::engine::{compute_coefficients, hedge_report_with, value_function, z_process, CoefficientTable};
use quadhedge::generators::{gen_binomial, gen_schachermayer, HorizonExample};
use quadhedge::verify::{nd_diagnostic, random_battery, run_invariant_battery, BatteryConfig, BatteryReport};
use quadhedge::{horizon_to_weights, load_tree, save_tree, Capital, RandomHorizon, ScenarioTree};

use crate::cli::{Cli, Command, GenKind, GlobalOpts};
use crate::report::{num, Report, RunConfig, Table};

/// Text to emit and whether the run failed.
pub struct Outcome {
    pub text: String,
    pub failed: bool,
}

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let g = &cli.global;
    if !(g.eps_deg > 0.0) || !(g.check_tol > 0.0) {
        bail!("--eps-deg and --check-tol must be positive");
    }
    if let Command::Gen(kind) = &cli.command {
        return Ok(Outcome { text: save_tree(&generate(kind)?), failed: false });
    }
    let report = match &cli.command {
        Command::Gen(_) => unreachable!(),
        Command::Price { tree, capital } => {
            let mut r = Report::new(config(g, "price", Some(tree), capital.iter().map(|c| num(*c)).collect(), None));
            with_tree(&mut r, tree, |r, t| price(r, t, g, capital));
            r
        }
        Command::Hedge { tree, capital } => {
            let labels = capital.iter().map(capital_label).collect();
            let mut r = Report::new(config(g, "hedge", Some(tree), labels, None));
            with_tree(&mut r, tree, |r, t| hedge(r, t, g, capital));
            r
        }
        Command::Verify { tree, random, capital, no_oracle } => {
            let labels = capital.iter().map(|c| num(*c)).collect();
            let mut r = Report::new(config(g, "verify", tree.as_deref(), labels, *random));
            let cfg = BatteryConfig {
                mode: g.mode,
                eps_deg: g.eps_deg,
                check_tol: g.check_tol,
                run_oracle: !no_oracle,
                ..Default::default()
            };
            match (tree, random) {
                (_, Some(n)) => battery(&mut r, random_battery(*n, g.seed, capital, &cfg)),
                (Some(path), None) => with_tree(&mut r, path, |r, t| {
                    battery(r, run_invariant_battery(t, capital, &cfg));
                    Ok(())
                }),
                (None, None) => bail!("verify needs a tree file or --random N"),
            }
            r
        }
        Command::Diagnose { tree } => {
            let mut r = Report::new(config(g, "diagnose", Some(tree), Vec::new(), None));
            with_tree(&mut r, tree, |r, t| diagnose(r, t, g));
            r
        }
    };
    Ok(Outcome { text: report.render(g.format)?, failed: report.failed() })
}

fn config(g: &GlobalOpts, command: &'static str, input: Option<&Path>, capital: Vec<String>, random: Option<usize>) -> RunConfig {
    RunConfig {
        command,
        input: input.map(|p| p.display().to_string()),
        capital,
        random,
        mode: g.mode,
        eps_deg: g.eps_deg,
        check_tol: g.check_tol,
        seed: g.seed,
        format: g.format,
    }
}

fn capital_label(c: &Capital) -> String {
    match c {
        Capital::Optimal => "optimal".into(),
        Capital::Fixed(x) => num(*x),
    }
}

fn generate(kind: &GenKind) -> anyhow::Result<ScenarioTree> {
    Ok(match kind {
        GenKind::Binomial { periods, u, d, p, s0, strike, horizon_pmf } => {
            let mut tree = gen_binomial(*periods, *u, *d, *p, *s0)?;
            if let Some(k) = strike {
                let claims: Vec<f64> = tree.nodes().iter().map(|n| (n.prices[0] - k).max(0.0)).collect();
                tree = tree.with_claims(&claims)?;
            }
            if let Some(pmf) = horizon_pmf {
                tree = horizon_to_weights(&tree, &RandomHorizon::IndependentPmf(pmf.clone()))?;
            }
            tree
        }
        GenKind::Schachermayer { grid } => gen_schachermayer(*grid, false)?,
        GenKind::SchachermayerCapped { grid } => gen_schachermayer(*grid, true)?,
        GenKind::HorizonExample { stopped: false } => HorizonExample::default().tree()?,
        GenKind::HorizonExample { stopped: true } => HorizonExample::default().stopped_tree()?,
    })
}

fn read_tree(path: &Path) -> anyhow::Result<ScenarioTree> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    load_tree(BufReader::new(file)).with_context(|| format!("cannot load {}", path.display()))
}

/// Loads the tree and runs `f`; load and engine errors become named failures.
fn with_tree(r: &mut Report, path: &Path, f: impl FnOnce(&mut Report, &ScenarioTree) -> quadhedge::Result<()>) {
    let tree = match read_tree(path) {
        Ok(t) => t,
        Err(e) => {
            log::error!("{e:#}");
            r.failures.push(json!({"check": "load_tree", "message": format!("{e:#}")}));
            return;
        }
    };
    if let Err(e) = f(r, &tree) {
        log::error!("{e}");
        r.failures.push(json!({"check": "engine", "message": e.to_string()}));
    }
}

fn coefficients(tree: &ScenarioTree, g: &GlobalOpts) -> quadhedge::Result<CoefficientTable> {
    compute_coefficients(tree, &quadhedge::EngineConfig { mode: g.mode, eps_deg: g.eps_deg })
}

fn engine_diagnostics(tree: &ScenarioTree, coeffs: &CoefficientTable) -> quadhedge::Result<Value> {
    let m = tree.num_assets();
    let rank_deficient: Vec<usize> = tree.non_terminal().filter(|&u| coeffs.rank[u] > 0 && coeffs.rank[u] < m).collect();
    let nd = if m == 1 { Some(nd_diagnostic(tree)?) } else { None };
    Ok(json!({
        "degenerate_nodes": coeffs.degenerate_nodes(),
        "rank_deficient_nodes": rank_deficient,
        "nd": nd,
    }))
}

fn price(r: &mut Report, tree: &ScenarioTree, g: &GlobalOpts, capitals: &[f64]) -> quadhedge::Result<()> {
    let coeffs = coefficients(tree, g)?;
    let q = value_function(tree, &coeffs)?;
    let (z, z_tilde) = z_process(tree, &coeffs)?;
    let prob = tree.path_probabilities();
    let zt = z_tilde.values();
    let summary = json!({
        "total_mass": (0..tree.len()).map(|v| prob[v] * zt[v]).sum::<f64>(),
        "min": zt.iter().cloned().fold(f64::INFINITY, f64::min),
        "max": zt.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        "negative_nodes": (0..tree.len()).filter(|&v| zt[v] < 0.0).count(),
    });
    let mut results = json!({
        "a": q.a, "b": q.b, "d": q.d, "c_star": q.c_star, "v_star": q.v_star,
        "z_tilde": summary,
    });
    if !capitals.is_empty() {
        results["value_table"] = value_table(&q, capitals);
    }
    r.results = results;
    r.diagnostics = engine_diagnostics(tree, &coeffs)?;
    let mut table = Table::new(["node_id", "time", "weight", "z", "z_tilde"]);
    for n in tree.nodes() {
        table.push(vec![n.id.to_string(), n.time.to_string(), num(n.weight), num(z[n.id]), num(z_tilde[n.id])]);
    }
    r.table = table;
    Ok(())
}

fn value_table(q: &quadhedge::ValueQuadratic, capitals: &[f64]) -> Value {
    capitals.iter().map(|&c| json!({"capital": c, "value": q.eval(c)})).collect()
}

fn hedge(r: &mut Report, tree: &ScenarioTree, g: &GlobalOpts, capitals: &[Capital]) -> quadhedge::Result<()> {
    let coeffs = coefficients(tree, g)?;
    let m = tree.num_assets();
    let mut header = vec!["node_id".to_string(), "time".into(), "capital".into()];
    header.extend((0..m).map(|k| format!("strategy_{k}")));
    header.extend(["gain".to_string(), "z".into(), "residual".into()]);
    let mut table = Table::new(header);
    let mut hedges = Vec::new();
    let mut resolved = Vec::new();
    for &c in capitals {
        let report = hedge_report_with(tree, coeffs.clone(), c)?;
        if report.gains[0] != 0.0 {
            r.failures.push(json!({"check": "gains_root", "node_id": 0, "residual": report.gains[0], "tolerance": 0.0}));
        }
        for n in tree.nodes() {
            let mut row = vec![n.id.to_string(), n.time.to_string(), num(report.capital)];
            if tree.is_terminal(n.id) {
                row.extend((0..m).map(|_| String::new()));
            } else {
                row.extend(report.strategy.get(n.id).iter().map(|x| num(*x)));
            }
            row.extend([num(report.gains[n.id]), num(report.z[n.id]), num(report.residuals[n.id])]);
            table.push(row);
        }
        resolved.push(report.capital);
        hedges.push(serde_json::to_value(&report).expect("report serializes"));
    }
    let mut results = json!({ "hedges": hedges });
    if capitals.len() > 1 {
        results["value_table"] = value_table(&value_function(tree, &coeffs)?, &resolved);
    }
    r.results = results;
    r.diagnostics = engine_diagnostics(tree, &coeffs)?;
    r.table = table;
    Ok(())
}

fn battery(r: &mut Report, b: BatteryReport) {
    let mut table = Table::new(["instance", "check", "node_id", "residual", "tolerance"]);
    for f in &b.failures {
        table.push(vec![
            f.instance.to_string(),
            f.check.to_string(),
            f.node_id.map(|v| v.to_string()).unwrap_or_default(),
            num(f.residual),
            num(f.tolerance),
        ]);
    }
    r.results = json!({"instances": b.instances, "checks": b.checks, "passed": b.passed()});
    r.diagnostics = json!({"skipped": b.skipped});
    r.failures = b.failures.iter().map(|f| serde_json::to_value(f).expect("failure serializes")).collect();
    r.table = table;
}

fn diagnose(r: &mut Report, tree: &ScenarioTree, g: &GlobalOpts) -> quadhedge::Result<()> {
    let coeffs = coefficients(tree, g)?;
    let diagnostics = engine_diagnostics(tree, &coeffs)?;
    let nd = if tree.num_assets() == 1 { Some(nd_diagnostic(tree)?) } else { None };
    let mut table = Table::new(["node_id", "time", "nd_ratio", "degenerate", "rank"]);
    for u in tree.non_terminal() {
        let ratio = nd.as_ref().map(|d| num(d.ratios.iter().find(|x| x.node_id == u).unwrap().ratio));
        table.push(vec![
            u.to_string(),
            tree.node(u).time.to_string(),
            ratio.unwrap_or_default(),
            coeffs.degenerate[u].to_string(),
            coeffs.rank[u].to_string(),
        ]);
    }
    r.results = json!({
        "num_nodes": tree.len(),
        "num_periods": tree.num_periods(),
        "num_assets": tree.num_assets(),
        "sup_ratio": nd.as_ref().map(|d| d.sup_ratio),
        "nd_fails": nd.as_ref().map(|d| d.nd_fails),
    });
    r.diagnostics = diagnostics;
    r.table = table;
    Ok(())
}
