//! Acceptance suite. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line under `cargo test`; exits nonzero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use flexcoord::aggregation::AggregationMode;
use flexcoord::coordination::{run, HierarchicalRun, RunMode, Scenario};
use flexcoord::demand::random_profile;
use flexcoord::io::{load_scenario, run_cli, SweepSpec};
use flexcoord::io::sweep::sweep_rows;
use flexcoord::model::{EssParams, TimeGrid};
use flexcoord::verify::oracle_suite;
use rand::{Rng, SeedableRng};

/// Scenario (a) on the default demand, cross-checked with an independent
/// conic solver (Clarabel through cvxpy) on the same problem data.
const SCENARIO_A_EPSILON: f64 = 0.054_921_753_009_842_97;
const SCENARIO_A_ETA: f64 = 0.853_619_516_689_214_2;
const REGRESSION_TOL: f64 = 1e-6;

/// Lossy 24-step fleets rarely close their branch-and-bound gap; a smaller
/// node budget keeps the random runs short. Dominance is still checked on
/// whatever the search returns.
const RANDOM_NODE_LIMIT: usize = 1000;

const SHIPPED: [&str; 4] = ["scenario_a", "scenario_b", "scenario_c", "scenario_large"];

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

fn shipped(name: &str) -> Scenario {
    load_scenario(&scenario_path(name)).expect("shipped scenario loads")
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn lossless(result: &flexcoord::coordination::RunResult) -> (bool, f64, f64) {
    let eps = result.metrics.epsilon_agg.unwrap_or(f64::NAN);
    let eta = result.metrics.eta_agg.unwrap_or(f64::NAN);
    (eps <= 1e-6 && (eta - 1.0).abs() <= 1e-4, eps, eta)
}

/// Runs the scenario on its own demand and on 100 random profiles.
fn lossless_on_profiles(base: &Scenario, seed_offset: u64) -> Outcome {
    let mut worst_eps: f64 = 0.0;
    let mut worst_eta: f64 = 0.0;
    let mut passed = 0;
    let mut slowest: f64 = 0.0;
    let total_p: f64 = base.units.iter().map(|u| u.p_max).sum();
    let default = std::iter::once(base.baseline_ipf.clone());
    let random = (0..100).map(|s| random_profile(&base.grid, total_p, seed_offset + s));
    let mut default_ok = false;
    for (i, demand) in default.chain(random).enumerate() {
        let scenario = Scenario {
            baseline_ipf: demand,
            ..base.clone()
        };
        let start = Instant::now();
        let result = run(&scenario, RunMode::Both).expect("run succeeds");
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let (ok, eps, eta) = lossless(&result);
        worst_eps = worst_eps.max(eps);
        worst_eta = worst_eta.max((eta - 1.0).abs());
        if i == 0 {
            default_ok = ok;
        } else if ok {
            passed += 1;
        }
    }
    outcome(
        default_ok && passed == 100,
        format!(
            "default demand {}, random profiles {passed}/100; max eps {worst_eps:.3e}, max |eta-1| {worst_eta:.3e}, slowest run {slowest:.2} s",
            if default_ok { "ok" } else { "failed" }
        ),
    )
}

fn random_scenario(seed: u64) -> Scenario {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let groups = rng.random_range(1..=3);
    let mode = if rng.random_bool(0.5) {
        AggregationMode::Heterogeneous
    } else {
        AggregationMode::Homogeneous
    };
    let n_units = rng.random_range(groups.max(2)..=6);
    let lossy = rng.random_bool(0.3);
    let units: Vec<EssParams> = (0..n_units)
        .map(|i| EssParams {
            id: format!("u{i}"),
            p_max: rng.random_range(0.2..1.5),
            capacity: rng.random_range(0.2..2.0),
            eta_chg: if lossy { rng.random_range(0.85..1.0) } else { 1.0 },
            eta_dch: if lossy { rng.random_range(0.85..1.0) } else { 1.0 },
            soc_initial: rng.random_range(0.2..0.8),
        })
        .collect();
    let grid = TimeGrid::new(24, 0.5).unwrap();
    let total: f64 = units.iter().map(|u| u.p_max).sum();
    let demand = random_profile(&grid, total, seed);
    let mut scenario = Scenario::new(grid, units, demand).with_partition(mode, groups);
    scenario.solver.max_bnb_nodes = RANDOM_NODE_LIMIT;
    scenario
}

fn criterion_1() -> Outcome {
    lossless_on_profiles(&shipped("scenario_b"), 1_000)
}

fn criterion_2() -> Outcome {
    lossless_on_profiles(&shipped("scenario_c"), 2_000)
}

fn criterion_3() -> Outcome {
    let result = run(&shipped("scenario_a"), RunMode::Both).expect("run succeeds");
    let eps = result.metrics.epsilon_agg.unwrap_or(f64::NAN);
    let eta = result.metrics.eta_agg.unwrap_or(f64::NAN);
    let degraded = eps > 0.01 && eta < 0.99;
    let frozen = (eps - SCENARIO_A_EPSILON).abs() <= REGRESSION_TOL && (eta - SCENARIO_A_ETA).abs() <= REGRESSION_TOL;
    outcome(
        degraded && frozen,
        format!(
            "eps {eps:.10} (frozen {SCENARIO_A_EPSILON:.10}), eta {eta:.10} (frozen {SCENARIO_A_ETA:.10})"
        ),
    )
}

/// Monolithic dominance and proportionality share the same runs.
fn criteria_4_and_7() -> (Outcome, Outcome) {
    let mut runs: Vec<(String, Scenario)> = SHIPPED.iter().map(|n| (n.to_string(), shipped(n))).collect();
    runs.extend((0..50).map(|s| (format!("random {s}"), random_scenario(10_000 + s))));

    let mut dominance_failures = Vec::new();
    let mut worst_margin = f64::NEG_INFINITY;
    let mut nodes = 0;
    let mut proportional_failures = Vec::new();
    let mut worst_rel: f64 = 0.0;
    let mut node_limited = 0;
    for (name, scenario) in &runs {
        let result = run(scenario, RunMode::Both).expect("run succeeds");
        let limited = result.monolithic.as_ref().unwrap().stats.node_limited
            + result.hierarchical.as_ref().unwrap().stats.node_limited;
        node_limited += usize::from(limited > 0);
        let mono = result.metrics.objective_monolithic.unwrap();
        let hier = result.metrics.objective_hierarchical.unwrap();
        let margin = (mono - hier) / hier.abs().max(1.0);
        worst_margin = worst_margin.max(margin);
        if mono > hier + 1e-6 * hier.abs().max(1.0) {
            dominance_failures.push(name.clone());
        }
        let h: &HierarchicalRun = result.hierarchical.as_ref().unwrap();
        for (id, report) in &h.per_aggregator {
            let Some(eps) = report.epsilon else { continue };
            nodes += 1;
            let lhs = eps * report.requested.sum_squares();
            let rel = (lhs - report.tracking_objective).abs() / report.tracking_objective.max(f64::MIN_POSITIVE);
            if lhs != report.tracking_objective {
                worst_rel = worst_rel.max(rel);
            }
            if rel > 1e-9 {
                proportional_failures.push(format!("{name}/{id}"));
            }
        }
    }
    let dominance = outcome(
        dominance_failures.is_empty(),
        format!(
            "{} runs ({node_limited} stopped at the node limit), largest (mono - hier)/max(1,|hier|) = {worst_margin:.3e}{}",
            runs.len(),
            if dominance_failures.is_empty() { String::new() } else { format!(", violated by {dominance_failures:?}") }
        ),
    );
    let proportional = outcome(
        proportional_failures.is_empty(),
        format!(
            "{nodes} aggregator reports over {} runs, largest relative deviation {worst_rel:.3e}{}",
            runs.len(),
            if proportional_failures.is_empty() { String::new() } else { format!(", violated by {proportional_failures:?}") }
        ),
    );
    (dominance, proportional)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let report = oracle_suite(200, 0);
    let secs = start.elapsed().as_secs_f64();
    match report {
        Ok(r) => outcome(
            r.failures.is_empty() && secs < 60.0,
            format!(
                "{}/{} instances within slack, {secs:.2} s{}",
                r.passed,
                r.instances,
                if r.failures.is_empty() {
                    String::new()
                } else {
                    format!(", failing seeds {:?}", r.failures.iter().map(|f| f.0).collect::<Vec<_>>())
                }
            ),
        ),
        Err(e) => outcome(false, format!("suite aborted: {e}")),
    }
}

fn criterion_6() -> Outcome {
    let base = shipped("scenario_a");
    let spec = SweepSpec::load(&scenario_path("sweep_capacity")).expect("sweep spec loads");
    let rows = sweep_rows(&base, &spec, &base.baseline_ipf).expect("sweep runs");
    let c1 = spec.c1_values();
    let total = spec.capacity_split.total_mwh;
    let eps_at = |p1: f64, i: usize| {
        rows.iter()
            .find(|r| r.p1 == p1 && r.c1 == c1[i])
            .and_then(|r| r.epsilon)
            .unwrap_or(f64::NAN)
    };
    let last = c1.len() - 1;
    let mut worst_mirror: f64 = 0.0;
    let mut mirrored = true;
    for i in 0..=last {
        mirrored &= (c1[i] + c1[last - i] - total).abs() <= 1e-12;
        worst_mirror = worst_mirror.max((eps_at(1.0, i) - eps_at(1.0, last - i)).abs());
    }
    let mut worst_boundary: f64 = 0.0;
    for &p1 in &spec.power_split.p1_values {
        worst_boundary = worst_boundary.max(eps_at(p1, 0).abs()).max(eps_at(p1, last).abs());
    }
    let low_asymmetry = (0..=last)
        .map(|i| (eps_at(0.5, i) - eps_at(0.5, last - i)).abs())
        .fold(0.0, f64::max);
    outcome(
        mirrored && worst_mirror <= 1e-6 && worst_boundary == 0.0,
        format!(
            "{} rows; P1 = 1 MW max mirrored |delta eps| {worst_mirror:.3e}; boundary eps max {worst_boundary:.3e}; P1 = 0.5 MW asymmetry {low_asymmetry:.3e} (not asserted)",
            rows.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut mismatches = Vec::new();
    for name in SHIPPED {
        let path = scenario_path(name);
        let outs: Vec<PathBuf> = (0..2).map(|i| tmp.path().join(format!("{name}_{i}"))).collect();
        for out in &outs {
            let code = run_cli(["flexcoord", "run", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            if code != 0 {
                return outcome(false, format!("{name}: run exited with {code}"));
            }
        }
        for file in ["ipf.csv", "metrics.json"] {
            let a = fs::read(outs[0].join(file)).expect("first output");
            let b = fs::read(outs[1].join(file)).expect("second output");
            if a != b {
                mismatches.push(format!("{name}/{file}"));
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "{} scenarios run twice{}",
            SHIPPED.len(),
            if mismatches.is_empty() { ", ipf.csv and metrics.json identical".into() } else { format!(", differing: {mismatches:?}") }
        ),
    )
}

fn criterion_9() -> Outcome {
    let scenario = shipped("scenario_large");
    let tree = scenario.tree().expect("tree builds");
    let start = Instant::now();
    let result = run(&scenario, RunMode::Hierarchical);
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok(r) => outcome(
            secs < 60.0,
            format!(
                "{} units, {} aggregators, {} steps: hierarchical run {secs:.2} s, eps {:.3e}",
                scenario.units.len(),
                tree.nodes().len(),
                scenario.grid.n_steps(),
                r.metrics.epsilon_agg.unwrap_or(f64::NAN)
            ),
        ),
        Err(e) => outcome(false, format!("run failed after {secs:.2} s: {e}")),
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let value = f();
    (value, start.elapsed().as_secs_f64())
}

fn main() {
    let ((dominance, proportional), shared) = timed(criteria_4_and_7);
    let results = [
        ("1 homogeneous losslessness", timed(criterion_1)),
        ("2 identical-PtE losslessness", timed(criterion_2)),
        ("3 heterogeneous degradation", timed(criterion_3)),
        ("4 monolithic dominance", (dominance, shared)),
        ("5 solver-oracle equivalence", timed(criterion_5)),
        ("6 sweep symmetry and boundaries", timed(criterion_6)),
        ("7 proportionality", (proportional, shared)),
        ("8 determinism", timed(criterion_8)),
        ("9 scale", timed(criterion_9)),
    ];
    let mut failed = 0;
    for (name, (o, secs)) in &results {
        println!(
            "criterion {name}: {} ({}) [{secs:.1} s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
