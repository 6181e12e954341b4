//! Capacity allocation across queues under the global inclusion constraint
//! `Σ λ_i ≤ κ`.
//!
//! * [`solve_welfare`] maximises `Σ W_i(λ_i)` with `W_i = V_i D̄_i - λ_i C̄_i`
//!   by water-filling on the common marginal welfare μ.
//! * [`brute_force_welfare`] is an exhaustive grid search used to check it.
//! * [`solve_revenue`] and [`solve_revenue_uniform`] maximise fee revenue with
//!   per-queue prices and with one shared price.
//! * [`find_threshold_capacity`] locates the capacity below which revenue
//!   maximisation serves only the highest-choke-price queue.

mod interior;
mod revenue;
mod welfare;

pub use interior::{verify_interior, InteriorEntry, InteriorReport};
pub use revenue::{
    find_threshold_capacity, revenue_objective, solve_revenue, solve_revenue_uniform,
    solve_revenue_uniform_with, ThresholdReport, UniformPriceConfig, UniformPriceOptimum,
    THRESHOLD_RESOLUTION,
};
pub use welfare::{
    brute_force_welfare, check_concavity, eval_welfare, inverse_marginal_welfare, solve_welfare,
    WelfareCurveEval,
};

/// Largest system [`solve_revenue`] will enumerate served sets for.
pub const MAX_REVENUE_QUEUES: usize = 12;

/// Largest system [`brute_force_welfare`] accepts.
pub const MAX_BRUTE_FORCE_QUEUES: usize = 4;

/// Largest grid (product of per-queue point counts) [`brute_force_welfare`] accepts.
pub const MAX_BRUTE_FORCE_POINTS: f64 = 1e8;
