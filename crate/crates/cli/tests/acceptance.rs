//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use parfee::allocate::{
    brute_force_welfare, check_concavity, eval_welfare, find_threshold_capacity, revenue_objective,
    solve_revenue, solve_revenue_uniform, solve_welfare,
};
use parfee::equilibrium::price_of_demand;
use parfee::pricing::{approx_price_ratio, limit_price_ratio, optimal_prices};
use parfee::simulate::{replay_worked_example, run_posted_price_sim, PostedPrices, SimConfig};
use parfee::{Allocation, DelayParams, DemandFamily, QueueSpec, SystemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn lu(name: &str, max_value: f64, d: f64, c: f64) -> QueueSpec {
    QueueSpec::new(
        name,
        1.0,
        DemandFamily::LinearUniform { max_value },
        DelayParams::new(d, c),
    )
}

fn iso(name: &str, size: f64, elasticity: f64, d: f64, c: f64) -> QueueSpec {
    QueueSpec::new(
        name,
        size,
        DemandFamily::Isoelastic { elasticity },
        DelayParams::new(d, c),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn queueing_validation() -> Check {
    let q = lu("solo", 20.0, 1.0, 1.0);
    let price = price_of_demand(0.5, &q).map_err(|e| e.to_string())?;
    let mut cfg = SimConfig::new(
        SystemSpec::new(vec![q], 1.0),
        PostedPrices::PerQueue(vec![price]),
        2.5e5,
        1,
        10,
    );
    cfg.warmup = 2.5e4;
    let started = Instant::now();
    let r = run_posted_price_sim(&cfg).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let s = &r.queues[0];
    let (d, c, t) = (s.discount.mean, s.cost.mean, s.mean_sojourn.mean);
    let summary = format!(
        "{} jobs, {} reps, D̂ = {d:.5}, Ĉ = {c:.5}, sojourn = {t:.5}, {secs:.1} s",
        r.measured_jobs, r.replications
    );
    let ok = r.measured_jobs >= 1_000_000
        && r.replications >= 10
        && rel(d, 1.0 / 3.0) < 0.01
        && rel(c, 2.0) < 0.02
        && rel(t, 2.0) < 0.01
        && secs < 60.0;
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn random_queue(rng: &mut ChaCha8Rng, name: &str) -> QueueSpec {
    let d = rng.random_range(0.2..3.0);
    let c = rng.random_range(0.0..0.5);
    if rng.random_bool(0.5) {
        lu(name, rng.random_range(2.0..20.0), d, c)
    } else {
        iso(
            name,
            rng.random_range(0.5..3.0),
            rng.random_range(1.5..6.0),
            d,
            c,
        )
    }
}

/// Each welfare-solved instance is kept for the price-consistency check.
fn water_filling(solved: &mut Vec<(SystemSpec, Allocation)>) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let started = Instant::now();
    let (mut worst_gap, mut worst_kkt) = (0.0f64, 0.0f64);
    let mut found = 0;
    while found < 25 {
        let queues: Vec<QueueSpec> = ["a", "b", "c"]
            .iter()
            .map(|n| random_queue(&mut rng, n))
            .collect();
        if queues
            .iter()
            .enumerate()
            .any(|(i, q)| check_concavity(q, i).is_err())
        {
            continue;
        }
        let spec = SystemSpec::new(queues, rng.random_range(0.1..0.75));
        let exact = solve_welfare(&spec).map_err(|e| e.to_string())?;
        let grid = brute_force_welfare(&spec, 1e-3).map_err(|e| e.to_string())?;
        for (a, b) in exact.rates.iter().zip(&grid.rates) {
            worst_gap = worst_gap.max((a - b).abs());
        }
        for &i in &exact.served_set {
            let w = eval_welfare(exact.rates[i], &spec.queues[i]).map_err(|e| e.to_string())?;
            worst_kkt = worst_kkt.max((w.marginal_welfare - exact.shadow_price).abs());
        }
        solved.push((spec, exact));
        found += 1;
    }
    let secs = started.elapsed().as_secs_f64();
    let summary = format!(
        "25 instances, max |λ - λ_grid| = {worst_gap:.2e}, max |W' - μ| = {worst_kkt:.2e}, {secs:.1} s"
    );
    if worst_gap < 2e-3 && worst_kkt < 1e-8 && secs < 120.0 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn all_isoelastic_served(solved: &mut Vec<(SystemSpec, Allocation)>) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut binding = 0;
    let mut min_rate = f64::INFINITY;
    let mut failures = Vec::new();
    while binding < 50 {
        let n = rng.random_range(2..=6);
        let queues: Vec<QueueSpec> = (0..n)
            .map(|k| {
                iso(
                    &format!("q{k}"),
                    rng.random_range(0.2..5.0),
                    rng.random_range(1.1..8.0),
                    rng.random_range(0.1..3.0),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let spec = SystemSpec::new(queues, rng.random_range(0.001..0.9));
        let a = solve_welfare(&spec).map_err(|e| e.to_string())?;
        if a.shadow_price <= 0.0 {
            continue;
        }
        binding += 1;
        let smallest = a.rates.iter().cloned().fold(f64::INFINITY, f64::min);
        min_rate = min_rate.min(smallest);
        if smallest <= 0.0 {
            failures.push(binding);
        }
        solved.push((spec, a));
    }
    let summary = format!("50 binding instances, smallest rate {min_rate:.3e}");
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; unserved queues in {failures:?}"))
    }
}

/// Best revenue with exactly the queues in `mask` served, on a rate grid.
fn grid_revenue_for_set(spec: &SystemSpec, mask: [bool; 2], steps: usize) -> f64 {
    let kappa = spec.capacity;
    let caps: Vec<f64> = spec
        .queues
        .iter()
        .map(|q| q.rate_cap().min(kappa))
        .collect();
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        for j in 0..=steps {
            let r0 = caps[0] * i as f64 / steps as f64;
            let r1 = caps[1] * j as f64 / steps as f64;
            if (r0 > 0.0) != mask[0] || (r1 > 0.0) != mask[1] || r0 + r1 > kappa + 1e-15 {
                continue;
            }
            if let Ok(v) = revenue_objective(&[r0, r1], spec) {
                best = best.max(v);
            }
        }
    }
    best
}

fn low_capacity_exclusion() -> Check {
    let base = SystemSpec::new(
        vec![lu("one", 10.0, 1.0, 1.0), lu("two", 6.0, 1.0, 1.0)],
        0.5,
    );
    let report = find_threshold_capacity(&base).map_err(|e| e.to_string())?;
    let kt = report.threshold;
    if !(report.found && kt > 0.0 && report.top_queue == 0) {
        return Err(format!("threshold report {report:?}"));
    }
    for k in 1..=10 {
        let spec = base.with_capacity(kt / 2.0 * k as f64 / 10.0);
        let disc = solve_revenue(&spec).map_err(|e| e.to_string())?;
        let unif = solve_revenue_uniform(&spec).map_err(|e| e.to_string())?;
        if disc.served_set != [0] || unif.allocation.served_set != [0] {
            return Err(format!(
                "κ = {}: served {:?} / {:?}",
                spec.capacity, disc.served_set, unif.allocation.served_set
            ));
        }
        let only_first = grid_revenue_for_set(&spec, [true, false], 400);
        let only_second = grid_revenue_for_set(&spec, [false, true], 400);
        let both = grid_revenue_for_set(&spec, [true, true], 400);
        if !(only_first > only_second && only_first >= both) {
            return Err(format!(
                "κ = {}: grid revenue {{0}} {only_first}, {{1}} {only_second}, both {both}",
                spec.capacity
            ));
        }
        if rel(disc.objective_value, only_first) > 1e-4 && disc.objective_value < only_first {
            return Err(format!(
                "κ = {}: solver {} below grid {only_first}",
                spec.capacity, disc.objective_value
            ));
        }
    }
    Ok(format!(
        "threshold {kt:.6}; 10 capacities up to {:.6} serve only queue 1",
        kt / 2.0
    ))
}

fn price_consistency(solved: &[(SystemSpec, Allocation)]) -> Check {
    let mut worst = 0.0f64;
    let mut served = 0;
    for (spec, a) in solved {
        let schedule = optimal_prices(spec, a).map_err(|e| e.to_string())?;
        for (i, e) in schedule.entries.iter().enumerate() {
            let sum = e.local_discount_externality + e.local_cost_externality + e.global_term;
            if sum != e.price {
                return Err(format!("decomposition {sum} != price {}", e.price));
            }
            if e.served {
                let p = price_of_demand(a.rates[i], &spec.queues[i]).map_err(|e| e.to_string())?;
                worst = worst.max((p - e.price).abs());
                served += 1;
            }
        }
    }
    let summary = format!(
        "{} instances, {served} served queues, max |p - P(λ)| = {worst:.2e}",
        solved.len()
    );
    if worst < 1e-8 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn approx_ratio_convergence(solved: &mut Vec<(SystemSpec, Allocation)>) -> Check {
    let queues = vec![iso("a", 1.0, 3.0, 1.0, 0.05), iso("b", 2.0, 3.0, 1.0, 0.05)];
    let mut kappa = 0.3;
    let mut errors = Vec::new();
    let mut last_max_rate = 0.0;
    for _ in 0..5 {
        let spec = SystemSpec::new(queues.clone(), kappa);
        let a = solve_welfare(&spec).map_err(|e| e.to_string())?;
        let p = optimal_prices(&spec, &a)
            .map_err(|e| e.to_string())?
            .prices();
        let approx = approx_price_ratio(0, 1, &spec, &a).map_err(|e| e.to_string())?;
        errors.push(rel(approx, p[0] / p[1]));
        last_max_rate = a.rates.iter().cloned().fold(0.0, f64::max);
        solved.push((spec, a));
        kappa /= 2.0;
    }
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    let last = *errors.last().unwrap();
    let shown: Vec<String> = errors
        .iter()
        .map(|e| format!("{:.3}%", 100.0 * e))
        .collect();
    let summary = format!(
        "errors [{}], final max λ = {last_max_rate:.4}",
        shown.join(", ")
    );
    if monotone && last < 0.02 && last_max_rate <= 0.02 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn high_elasticity_limit(solved: &mut Vec<(SystemSpec, Allocation)>) -> Check {
    let spec = SystemSpec::new(
        vec![iso("a", 1.0, 50.0, 1.0, 0.0), iso("b", 2.0, 50.0, 1.0, 0.0)],
        1.2,
    );
    let a = solve_welfare(&spec).map_err(|e| e.to_string())?;
    let p = optimal_prices(&spec, &a)
        .map_err(|e| e.to_string())?
        .prices();
    let min_p = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let exact = p[0] / p[1];
    let limit = limit_price_ratio(0, 1, &spec, &a).map_err(|e| e.to_string())?;
    let summary = format!(
        "μ = {:.2e}, exact {exact:.4}, limit {limit:.4}, gap {:.2}%",
        a.shadow_price,
        100.0 * rel(exact, limit)
    );
    let ok = a.shadow_price < 1e-3 * min_p && rel(exact, limit) < 0.05;
    solved.push((spec, a));
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn worked_example_replay() -> Check {
    let t = replay_worked_example();
    let labels = |s: &parfee::simulate::ReplayStep| -> Vec<String> {
        s.executed.iter().map(|e| e.label.clone()).collect()
    };
    let global = labels(&t.global_bid);
    let mvw = labels(&t.market_value_weighted);
    let adjusted: Vec<f64> = t
        .market_value_weighted
        .executed
        .iter()
        .map(|e| e.adjusted)
        .collect();
    let expected_adjusted = [1.5, 4.0 / 3.0, 1.2, 7.0 / 6.0, 1.0];
    let ok = global == ["a1", "a4", "a2", "b1", "a5"]
        && mvw == ["a1", "b1", "a4", "b5", "a2"]
        && adjusted
            .iter()
            .zip(&expected_adjusted)
            .all(|(a, b)| (a - b).abs() < 1e-12)
        && adjusted.len() == 5;
    let summary = format!("global bid {global:?}, value-weighted {mvw:?}, adjusted {adjusted:.4?}");
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

/// Every file in `dir`, with the timestamp dropped from `run.json`.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("output dir") {
        let path = entry.expect("dir entry").path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = std::fs::read(&path).expect("readable output");
        if name == "run.json" {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).expect("run.json");
            v.as_object_mut().unwrap().remove("timestamp");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        out.insert(name, bytes);
    }
    out
}

fn rerun_determinism() -> Check {
    let exe = env!("CARGO_BIN_EXE_parfee");
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/two_queue_linear.json");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let verbs = [
        "solve-welfare",
        "solve-revenue",
        "solve-revenue-uniform",
        "prices",
        "threshold",
        "simulate",
        "block-sim",
        "replay-example",
        "sweep",
    ];
    let mut files = 0;
    for verb in verbs {
        let mut runs = Vec::new();
        for k in 0..2 {
            let out = tmp.path().join(format!("{verb}-{k}"));
            let status = Command::new(exe)
                .arg(verb)
                .arg("--scenario")
                .arg(&scenario)
                .arg("--out")
                .arg(&out)
                .args(["--seed", "11", "--quiet"])
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("{verb} exited with {status}"));
            }
            runs.push(snapshot(&out));
        }
        if runs[0] != runs[1] {
            let differing: Vec<&String> = runs[0]
                .iter()
                .filter(|(name, bytes)| runs[1].get(*name) != Some(*bytes))
                .map(|(name, _)| name)
                .collect();
            return Err(format!("{verb}: files differ {differing:?}"));
        }
        files += runs[0].len();
    }
    Ok(format!(
        "{} commands, {files} files identical across reruns",
        verbs.len()
    ))
}

fn main() -> ExitCode {
    // instances solved along the way feed the price-consistency check
    let mut solved = Vec::new();
    let first = queueing_validation();
    let second = water_filling(&mut solved);
    let third = all_isoelastic_served(&mut solved);
    let fourth = low_capacity_exclusion();
    let sixth = approx_ratio_convergence(&mut solved);
    let seventh = high_elasticity_limit(&mut solved);
    let fifth = price_consistency(&solved);
    let results: Vec<(&str, Check)> = vec![
        ("1 single-queue simulation matches closed forms", first),
        ("2 water-filling matches brute force", second),
        (
            "3 isoelastic queues all served under binding capacity",
            third,
        ),
        ("4 low capacity excludes the weaker queue", fourth),
        ("5 welfare prices equal demand prices", fifth),
        ("6 small-rate price ratio converges", sixth),
        ("7 high-elasticity price ratio limit", seventh),
        (
            "8 worked block example replays exactly",
            worked_example_replay(),
        ),
        ("9 reruns are byte-identical", rerun_determinism()),
    ];

    let mut failed = 0;
    for (name, result) in &results {
        match result {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
