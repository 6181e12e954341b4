//! Verbs: each one solves or simulates, then writes its result files.

use std::fs;
use std::path::{Path, PathBuf};

use parfee::allocate::{
    find_threshold_capacity, solve_revenue, solve_revenue_uniform, solve_welfare, verify_interior,
};
use parfee::equilibrium::{choke_price, price_of_demand};
use parfee::pricing::optimal_prices;
use parfee::simulate::{
    replay_worked_example, run_block_sim, run_posted_price_sim, OrderingPolicy, PostedPrices,
    SimConfig, SimResult,
};
use parfee::{Allocation, PriceSchedule, SystemSpec};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Verb {
    SolveWelfare,
    SolveRevenue,
    SolveRevenueUniform,
    Prices,
    Threshold,
    Simulate,
    BlockSim,
    ReplayExample,
    Sweep,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::SolveWelfare => "solve-welfare",
            Verb::SolveRevenue => "solve-revenue",
            Verb::SolveRevenueUniform => "solve-revenue-uniform",
            Verb::Prices => "prices",
            Verb::Threshold => "threshold",
            Verb::Simulate => "simulate",
            Verb::BlockSim => "block-sim",
            Verb::ReplayExample => "replay-example",
            Verb::Sweep => "sweep",
        }
    }

    pub fn needs_scenario(self) -> bool {
        self != Verb::ReplayExample
    }
}

/// Solver run at each sweep point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepSolver {
    Welfare,
    #[default]
    Revenue,
    RevenueUniform,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Overrides the scenario's `sim.seed`.
    pub seed: Option<u64>,
    pub quiet: bool,
    pub block_capacity: usize,
    pub block_interval: f64,
    pub block_horizon: f64,
    /// Simulate under this price on every queue instead of welfare prices.
    pub uniform_price: Option<f64>,
    pub solver: SweepSolver,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            out: PathBuf::from("runs"),
            seed: None,
            quiet: false,
            block_capacity: 5,
            block_interval: 1.0,
            block_horizon: 1000.0,
            uniform_price: None,
            solver: SweepSolver::Revenue,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Core(#[from] parfee::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 1 for bad input, 2 when a solver or simulation fails on valid input.
    pub fn exit_code(&self) -> u8 {
        use parfee::Error as E;
        match self {
            CliError::Core(
                E::NonConcave { .. }
                | E::Saturated
                | E::Unstable { .. }
                | E::GridTooLarge { .. }
                | E::TooManyQueues { .. },
            ) => 2,
            _ => 1,
        }
    }
}

/// Provenance written next to every result.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub scenario_hash: Option<String>,
    pub command: String,
    pub seed: u64,
    pub tool_version: String,
    pub timestamp: String,
    pub result: Value,
}

#[derive(Debug)]
pub struct Outcome {
    pub summary: Value,
    pub files: Vec<PathBuf>,
    pub message: String,
}

#[derive(Serialize)]
struct AllocationRow<'a> {
    queue: &'a str,
    lambda: f64,
    price: f64,
    p_local_discount: Option<f64>,
    p_local_cost: Option<f64>,
    p_global_mu: Option<f64>,
}

#[derive(Serialize)]
struct SimRow<'a> {
    queue: &'a str,
    lambda_hat: f64,
    mean_sojourn: f64,
    discount_hat: f64,
    cost_hat: f64,
    revenue_rate: f64,
    welfare_rate: f64,
    ci_halfwidth_lambda: f64,
    ci_halfwidth_sojourn: f64,
    ci_halfwidth_discount: f64,
    ci_halfwidth_cost: f64,
    ci_halfwidth_revenue: f64,
    ci_halfwidth_welfare: f64,
}

#[derive(Serialize)]
struct BlockRow {
    block: usize,
    queue: usize,
    backlog: usize,
    executed_cum: u64,
}

#[derive(Serialize)]
struct SweepRow {
    index: usize,
    value: f64,
    objective: Option<f64>,
    shadow_price: Option<f64>,
    total_rate: Option<f64>,
    served_set: String,
    rates: String,
    error: String,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))? + "\n";
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.files.push(path);
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.files.push(path);
        Ok(())
    }
}

fn join_indices(v: &[usize]) -> String {
    v.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn join_values(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn negative_prices(spec: &SystemSpec, prices: &[f64]) -> Vec<String> {
    spec.queues
        .iter()
        .zip(prices)
        .filter(|(_, &p)| p < 0.0)
        .map(|(q, _)| q.name.clone())
        .collect()
}

/// Prices that induce a given allocation: the equilibrium price for served
/// queues and the choke price for the rest.
fn supporting_prices(spec: &SystemSpec, alloc: &Allocation) -> Result<Vec<f64>, CliError> {
    spec.queues
        .iter()
        .zip(&alloc.rates)
        .map(|(q, &r)| {
            if r > 0.0 {
                price_of_demand(r, q).map_err(CliError::from)
            } else {
                Ok(choke_price(q))
            }
        })
        .collect()
}

fn welfare_rows<'a>(
    spec: &'a SystemSpec,
    alloc: &Allocation,
    schedule: &PriceSchedule,
) -> Vec<AllocationRow<'a>> {
    spec.queues
        .iter()
        .zip(&alloc.rates)
        .zip(&schedule.entries)
        .map(|((q, &lambda), e)| AllocationRow {
            queue: &q.name,
            lambda,
            price: e.price,
            p_local_discount: Some(e.local_discount_externality),
            p_local_cost: Some(e.local_cost_externality),
            p_global_mu: Some(e.global_term),
        })
        .collect()
}

fn plain_rows<'a>(spec: &'a SystemSpec, rates: &[f64], prices: &[f64]) -> Vec<AllocationRow<'a>> {
    spec.queues
        .iter()
        .zip(rates)
        .zip(prices)
        .map(|((q, &lambda), &price)| AllocationRow {
            queue: &q.name,
            lambda,
            price,
            p_local_discount: None,
            p_local_cost: None,
            p_global_mu: None,
        })
        .collect()
}

fn describe_allocation(spec: &SystemSpec, alloc: &Allocation, prices: &[f64]) -> String {
    let mut lines = Vec::new();
    for ((q, r), p) in spec.queues.iter().zip(&alloc.rates).zip(prices) {
        lines.push(format!("  {:<12} λ = {:<12.6} p = {:.6}", q.name, r, p));
    }
    lines.push(format!(
        "  objective = {:.6}, μ = {:.6}, served = {:?}",
        alloc.objective_value, alloc.shadow_price, alloc.served_set
    ));
    lines.join("\n")
}

fn scenario_for(verb: Verb, scenario: Option<&Scenario>) -> Result<&Scenario, CliError> {
    scenario.ok_or_else(|| CliError::Input(format!("{} requires --scenario", verb.name())))
}

fn sim_result_rows<'a>(spec: &'a SystemSpec, r: &SimResult) -> Vec<SimRow<'a>> {
    spec.queues
        .iter()
        .zip(&r.queues)
        .map(|(q, s)| SimRow {
            queue: &q.name,
            lambda_hat: s.admitted_rate.mean,
            mean_sojourn: s.mean_sojourn.mean,
            discount_hat: s.discount.mean,
            cost_hat: s.cost.mean,
            revenue_rate: s.revenue_rate.mean,
            welfare_rate: s.welfare_rate.mean,
            ci_halfwidth_lambda: s.admitted_rate.half_width,
            ci_halfwidth_sojourn: s.mean_sojourn.half_width,
            ci_halfwidth_discount: s.discount.half_width,
            ci_halfwidth_cost: s.cost.half_width,
            ci_halfwidth_revenue: s.revenue_rate.half_width,
            ci_halfwidth_welfare: s.welfare_rate.half_width,
        })
        .collect()
}

fn sweep_point(
    scenario: &Scenario,
    path: &str,
    value: f64,
    solver: SweepSolver,
) -> Result<(Allocation, Option<f64>), CliError> {
    let s = scenario.with_value_at(path, value)?;
    let spec = s.system();
    Ok(match solver {
        SweepSolver::Welfare => (solve_welfare(&spec)?, None),
        SweepSolver::Revenue => (solve_revenue(&spec)?, None),
        SweepSolver::RevenueUniform => {
            let u = solve_revenue_uniform(&spec)?;
            (u.allocation, Some(u.price))
        }
    })
}

type SweepPoint = Result<(Allocation, Option<f64>), CliError>;

/// Runs one verb and writes `summary.json`, its CSV tables and `run.json`
/// into `options.out`.
pub fn run_command(
    verb: Verb,
    scenario: Option<&Scenario>,
    options: &RunOptions,
) -> Result<Outcome, CliError> {
    fs::create_dir_all(&options.out)?;
    let mut out = Writer {
        dir: &options.out,
        files: Vec::new(),
    };
    let seed = options.seed.or(scenario.map(|s| s.sim.seed)).unwrap_or(0);
    let mut message;

    let summary: Value = match verb {
        Verb::SolveWelfare | Verb::Prices => {
            let sc = scenario_for(verb, scenario)?;
            let spec = sc.system();
            let alloc = solve_welfare(&spec)?;
            let schedule = optimal_prices(&spec, &alloc)?;
            let interior = verify_interior(&spec, &alloc)?;
            let prices = schedule.prices();
            let negative = negative_prices(&spec, &prices);
            out.csv("allocations.csv", &welfare_rows(&spec, &alloc, &schedule))?;
            message = format!(
                "welfare optimum\n{}",
                describe_allocation(&spec, &alloc, &prices)
            );
            let mut summary = json!({
                "allocation": alloc,
                "prices": schedule,
                "negative_price_queues": negative,
                "interior": {
                    "hypothesis_holds": interior.hypothesis_holds,
                    "all_served": interior.all_served,
                    "consistent": interior.consistent,
                    "marginal_welfare_at_zero": interior.entries.iter().map(|e| e.marginal_welfare_at_zero).collect::<Vec<_>>(),
                },
            });
            if verb == Verb::Prices {
                let residuals: Vec<Option<f64>> = spec
                    .queues
                    .iter()
                    .zip(&alloc.rates)
                    .zip(&prices)
                    .map(|((q, &r), &p)| {
                        (r > 0.0).then(|| {
                            price_of_demand(r, q)
                                .map(|e| (p - e).abs())
                                .unwrap_or(f64::NAN)
                        })
                    })
                    .collect();
                summary["equilibrium_price_residuals"] = json!(residuals);
            }
            summary
        }
        Verb::SolveRevenue => {
            let sc = scenario_for(verb, scenario)?;
            let spec = sc.system();
            let alloc = solve_revenue(&spec)?;
            let prices = supporting_prices(&spec, &alloc)?;
            out.csv("allocations.csv", &plain_rows(&spec, &alloc.rates, &prices))?;
            message = format!(
                "revenue optimum\n{}",
                describe_allocation(&spec, &alloc, &prices)
            );
            json!({
                "allocation": alloc,
                "prices": prices,
                "negative_price_queues": negative_prices(&spec, &prices),
            })
        }
        Verb::SolveRevenueUniform => {
            let sc = scenario_for(verb, scenario)?;
            let spec = sc.system();
            let u = solve_revenue_uniform(&spec)?;
            let prices = vec![u.price; spec.len()];
            out.csv(
                "allocations.csv",
                &plain_rows(&spec, &u.allocation.rates, &prices),
            )?;
            message = format!(
                "uniform-price revenue optimum\n{}",
                describe_allocation(&spec, &u.allocation, &prices)
            );
            json!({ "price": u.price, "allocation": u.allocation })
        }
        Verb::Threshold => {
            let sc = scenario_for(verb, scenario)?;
            let spec = sc.system();
            let t = find_threshold_capacity(&spec)?;
            let half = solve_revenue(&spec.with_capacity(0.5 * t.threshold))?;
            message = format!(
                "threshold capacity {:.6} (top queue {}, found = {})",
                t.threshold, spec.queues[t.top_queue].name, t.found
            );
            json!({
                "threshold": t.threshold,
                "top_queue": t.top_queue,
                "found": t.found,
                "scan_upper": t.scan_upper,
                "revenue_at_half_threshold": half,
            })
        }
        Verb::Simulate => {
            let sc = scenario_for(verb, scenario)?;
            let spec = sc.system();
            let (source, prices) = match options.uniform_price {
                Some(p) => ("uniform", PostedPrices::Uniform(p)),
                None => {
                    let alloc = solve_welfare(&spec)?;
                    (
                        "welfare_optimal",
                        PostedPrices::Schedule(optimal_prices(&spec, &alloc)?),
                    )
                }
            };
            let config = SimConfig {
                warmup: sc.sim.warmup(),
                ..SimConfig::new(
                    spec.clone(),
                    prices.clone(),
                    sc.sim.horizon,
                    seed,
                    sc.sim.replications,
                )
            };
            let result = run_posted_price_sim(&config)?;
            out.csv("sim.csv", &sim_result_rows(&spec, &result))?;
            let resolved = prices.resolve(spec.len())?;
            message = format!(
                "simulated {} replications, {} measured jobs",
                result.replications, result.measured_jobs
            );
            for (q, s) in spec.queues.iter().zip(&result.queues) {
                message += &format!(
                    "\n  {:<12} λ̂ = {:.6} ± {:.6}  Ŵ = {:.4}",
                    q.name, s.admitted_rate.mean, s.admitted_rate.half_width, s.mean_sojourn.mean
                );
            }
            json!({
                "price_source": source,
                "prices": resolved,
                "horizon": config.horizon,
                "warmup": config.warmup,
                "result": result,
            })
        }
        Verb::BlockSim => {
            let sc = scenario_for(verb, scenario)?;
            let spec = sc.system();
            let policy = sc.policy.clone().unwrap_or(OrderingPolicy::GlobalBid {});
            let r = run_block_sim(
                &spec,
                &policy,
                options.block_capacity,
                options.block_interval,
                options.block_horizon,
                seed,
            )?;
            let rows: Vec<BlockRow> = r
                .blocks
                .iter()
                .flat_map(|b| {
                    (0..spec.len()).map(move |q| BlockRow {
                        block: b.block,
                        queue: q,
                        backlog: b.backlog[q],
                        executed_cum: b.executed_cum[q],
                    })
                })
                .collect();
            out.csv("blocks.csv", &rows)?;
            let last = r
                .blocks
                .last()
                .map(|b| b.backlog.clone())
                .unwrap_or_default();
            message = format!(
                "{} blocks; throughput shares {:?}; final backlog {:?}",
                r.blocks.len(),
                r.throughput_shares,
                last
            );
            json!({
                "policy": policy,
                "block_capacity": options.block_capacity,
                "block_interval": options.block_interval,
                "horizon": options.block_horizon,
                "blocks": r.blocks.len(),
                "throughput_shares": r.throughput_shares,
                "final_backlog": last,
                "rng": r.rng,
            })
        }
        Verb::ReplayExample => {
            let t = replay_worked_example();
            let show = |step: &parfee::simulate::ReplayStep| {
                step.executed
                    .iter()
                    .map(|e| format!("{}={}", e.label, e.bid))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            message = format!(
                "global bid executes {}\nvalue-weighted executes {}",
                show(&t.global_bid),
                show(&t.market_value_weighted)
            );
            json!({ "transcript": t })
        }
        Verb::Sweep => {
            let sc = scenario_for(verb, scenario)?;
            let sweep = sc.sweep.as_ref().ok_or_else(|| {
                CliError::Input("sweep requires a `sweep` section in the scenario".into())
            })?;
            let values = sweep.values();
            let points: Vec<(f64, SweepPoint)> = values
                .par_iter()
                .map(|&v| (v, sweep_point(sc, &sweep.path, v, options.solver)))
                .collect();
            let mut rows = Vec::with_capacity(points.len());
            for (index, (value, res)) in points.iter().enumerate() {
                let (doc, row) = match res {
                    Ok((alloc, price)) => (
                        json!({ "index": index, "value": value, "allocation": alloc, "uniform_price": price }),
                        SweepRow {
                            index,
                            value: *value,
                            objective: Some(alloc.objective_value),
                            shadow_price: Some(alloc.shadow_price),
                            total_rate: Some(alloc.total_rate()),
                            served_set: join_indices(&alloc.served_set),
                            rates: join_values(&alloc.rates),
                            error: String::new(),
                        },
                    ),
                    Err(e) => (
                        json!({ "index": index, "value": value, "error": e.to_string() }),
                        SweepRow {
                            index,
                            value: *value,
                            objective: None,
                            shadow_price: None,
                            total_rate: None,
                            served_set: String::new(),
                            rates: String::new(),
                            error: e.to_string(),
                        },
                    ),
                };
                out.json(&format!("point_{index:03}.json"), &doc)?;
                rows.push(row);
            }
            out.csv("sweep.csv", &rows)?;
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            message = format!(
                "swept {} over {} points ({} failed)",
                sweep.path,
                rows.len(),
                failed
            );
            let solver = match options.solver {
                SweepSolver::Welfare => "welfare",
                SweepSolver::Revenue => "revenue",
                SweepSolver::RevenueUniform => "revenue-uniform",
            };
            json!({
                "path": sweep.path,
                "solver": solver,
                "values": values,
                "served_sets": rows.iter().map(|r| r.served_set.clone()).collect::<Vec<_>>(),
                "objectives": rows.iter().map(|r| r.objective).collect::<Vec<_>>(),
                "failed_points": failed,
            })
        }
    };

    out.json("summary.json", &summary)?;
    let record = RunRecord {
        scenario_hash: scenario.map(Scenario::hash),
        command: verb.name().to_string(),
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        result: summary.clone(),
    };
    out.json("run.json", &record)?;
    if let Some(names) = summary
        .get("negative_price_queues")
        .and_then(Value::as_array)
    {
        if !names.is_empty() {
            message += &format!("\n  warning: negative prices on {names:?}");
        }
    }
    Ok(Outcome {
        summary,
        files: out.files,
        message,
    })
}
