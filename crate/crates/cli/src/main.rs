use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use parfee_cli::{load_scenario, run_command, RunOptions, SweepSolver, Verb};

/// Solve, price and simulate parallel fee-market queues.
#[derive(Debug, Parser)]
#[command(name = "parfee", version)]
struct Args {
    #[arg(value_enum)]
    verb: Verb,
    /// Scenario JSON document (not needed for replay-example).
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Overrides the scenario's sim.seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
    /// Transactions per block for block-sim.
    #[arg(long, default_value_t = 5)]
    block_capacity: usize,
    #[arg(long, default_value_t = 1.0)]
    block_interval: f64,
    /// Simulated time for block-sim.
    #[arg(long, default_value_t = 1000.0)]
    block_horizon: f64,
    /// Post this price on every queue in simulate instead of welfare prices.
    #[arg(long)]
    uniform_price: Option<f64>,
    /// Solver used at each sweep point.
    #[arg(long, value_enum, default_value_t = SweepSolver::Revenue)]
    solver: SweepSolver,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let scenario = match (&args.scenario, args.verb.needs_scenario()) {
        (Some(path), _) => match load_scenario(path) {
            Ok(s) => Some(s),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code());
            }
        },
        (None, true) => {
            eprintln!("error: {} requires --scenario PATH", args.verb.name());
            return ExitCode::from(1);
        }
        (None, false) => None,
    };
    let options = RunOptions {
        out: args.out,
        seed: args.seed,
        quiet: args.quiet,
        block_capacity: args.block_capacity,
        block_interval: args.block_interval,
        block_horizon: args.block_horizon,
        uniform_price: args.uniform_price,
        solver: args.solver,
    };
    match run_command(args.verb, scenario.as_ref(), &options) {
        Ok(outcome) => {
            if !options.quiet {
                println!("{}", outcome.message);
                println!(
                    "wrote {} files to {}",
                    outcome.files.len(),
                    options.out.display()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
