use crate::delay::eval_delay;
use crate::demand::eval_demand;
use crate::error::{out_of_domain, Error, Result};
use crate::model::{ensure_valid, Allocation, QueueSpec, SystemSpec};
use crate::numeric::bisect_decreasing;

use super::{MAX_BRUTE_FORCE_POINTS, MAX_BRUTE_FORCE_QUEUES};

/// Net welfare `W(λ) = V(λ) D̄(λ) - λ C̄(λ)` of one queue and its derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelfareCurveEval {
    pub welfare: f64,
    /// `V' D̄ + V D̄' - C̄ - λ C̄'`; `+∞` at zero for isoelastic queues.
    pub marginal_welfare: f64,
}

pub fn eval_welfare(rate: f64, q: &QueueSpec) -> Result<WelfareCurveEval> {
    let upper = q.market_size.min(1.0);
    if !(rate >= 0.0 && rate < upper) {
        return Err(out_of_domain("rate", rate, format!("[0, {upper})")));
    }
    let v = eval_demand(rate, q.market_size, &q.demand)?;
    let dl = eval_delay(rate, &q.delay)?;
    let welfare = v.gross_value * dl.expected_discount - rate * dl.expected_cost;
    let marginal_welfare = v.marginal_value * dl.expected_discount + v.gross_value * dl.d_discount
        - dl.expected_cost
        - rate * dl.d_cost;
    Ok(WelfareCurveEval {
        welfare,
        marginal_welfare,
    })
}

fn welfare_at(rate: f64, q: &QueueSpec) -> f64 {
    eval_welfare(rate, q).map_or(f64::NEG_INFINITY, |w| w.welfare)
}

fn marginal_welfare_at(rate: f64, q: &QueueSpec) -> f64 {
    eval_welfare(rate, q).map_or(f64::NEG_INFINITY, |w| w.marginal_welfare)
}

const CONCAVITY_SAMPLES: usize = 256;

/// Samples `W'` across `[0, cap]` and fails unless it is strictly decreasing.
pub fn check_concavity(q: &QueueSpec, index: usize) -> Result<()> {
    let cap = q.rate_cap();
    let mut prev = marginal_welfare_at(0.0, q);
    for k in 1..=CONCAVITY_SAMPLES {
        let next = marginal_welfare_at(cap * k as f64 / CONCAVITY_SAMPLES as f64, q);
        if !(next < prev) {
            return Err(Error::NonConcave { queue: index });
        }
        prev = next;
    }
    Ok(())
}

/// `(W')^{-1}(μ)` restricted to `[0, cap]`: zero when `W'(0⁺) ≤ μ`, the cap
/// when `W'` stays above μ all the way up.
pub fn inverse_marginal_welfare(level: f64, q: &QueueSpec) -> f64 {
    if marginal_welfare_at(0.0, q) <= level {
        return 0.0;
    }
    let cap = q.rate_cap();
    if marginal_welfare_at(cap, q) >= level {
        return cap;
    }
    bisect_decreasing(|rate| marginal_welfare_at(rate, q) - level, 0.0, cap)
}

fn total_welfare(rates: &[f64], spec: &SystemSpec) -> f64 {
    rates
        .iter()
        .zip(&spec.queues)
        .map(|(&r, q)| welfare_at(r, q))
        .sum()
}

/// Welfare-maximising allocation by water-filling.
///
/// With μ = 0 each queue sits at its unconstrained optimum; if that fits in
/// κ the constraint is slack. Otherwise μ is bisected until the per-queue
/// inverses `(W'_i)^{-1}(μ)` sum to κ. A queue is excluded exactly when
/// `W'_i(0⁺) ≤ μ`.
pub fn solve_welfare(spec: &SystemSpec) -> Result<Allocation> {
    ensure_valid(spec)?;
    for (i, q) in spec.queues.iter().enumerate() {
        check_concavity(q, i)?;
    }
    let rates_at = |level: f64| -> Vec<f64> {
        spec.queues
            .iter()
            .map(|q| inverse_marginal_welfare(level, q))
            .collect()
    };
    let total_at = |level: f64| -> f64 {
        spec.queues
            .iter()
            .map(|q| inverse_marginal_welfare(level, q))
            .sum()
    };
    let kappa = spec.capacity;

    let unconstrained = rates_at(0.0);
    if unconstrained.iter().sum::<f64>() <= kappa {
        let all_pinned = unconstrained
            .iter()
            .zip(&spec.queues)
            .all(|(&r, q)| r == q.rate_cap());
        if all_pinned {
            return Err(Error::Saturated);
        }
        let objective = total_welfare(&unconstrained, spec);
        return Ok(Allocation::from_rates(unconstrained, 0.0, objective));
    }

    // At μ = max_i W'_i(κ/N) no queue takes more than κ/N.
    let share = kappa / spec.len() as f64;
    let mut upper = spec
        .queues
        .iter()
        .map(|q| marginal_welfare_at(share.min(q.rate_cap()), q))
        .fold(f64::NEG_INFINITY, f64::max);
    if !(upper.is_finite() && upper > 0.0) {
        upper = 1.0;
    }
    while total_at(upper) > kappa {
        upper *= 2.0;
    }
    let level = bisect_decreasing(|m| total_at(m) - kappa, 0.0, upper);
    let rates = rates_at(level);
    let objective = total_welfare(&rates, spec);
    Ok(Allocation::from_rates(rates, level, objective))
}

/// Exhaustive search over the grid `{k · step}` intersected with the
/// capacity simplex.
///
/// The last coordinate is resolved with a running maximum over its grid, so
/// the result is the exact grid optimum. Ties keep the lexicographically
/// first point. The multiplier is not estimated and is reported as zero.
pub fn brute_force_welfare(spec: &SystemSpec, grid_step: f64) -> Result<Allocation> {
    ensure_valid(spec)?;
    if spec.len() > MAX_BRUTE_FORCE_QUEUES {
        return Err(Error::TooManyQueues {
            n: spec.len(),
            max: MAX_BRUTE_FORCE_QUEUES,
        });
    }
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(out_of_domain("grid_step", grid_step, "(0, ∞)"));
    }
    let budget_f = (spec.capacity / grid_step + 1e-9).floor();
    let cap_points = |q: &QueueSpec| (q.rate_cap() / grid_step).floor() + 1.0;
    // a coordinate count beyond the limit makes the simplex count overflow too
    if budget_f > MAX_BRUTE_FORCE_POINTS
        || spec
            .queues
            .iter()
            .any(|q| cap_points(q).min(budget_f + 1.0) > MAX_BRUTE_FORCE_POINTS)
    {
        return Err(Error::GridTooLarge {
            points: f64::INFINITY,
            limit: MAX_BRUTE_FORCE_POINTS,
        });
    }
    let budget = budget_f as usize;
    let counts: Vec<usize> = spec
        .queues
        .iter()
        .map(|q| (cap_points(q) as usize).min(budget + 1))
        .collect();
    let points = simplex_grid_points(&counts, budget);
    if points > MAX_BRUTE_FORCE_POINTS {
        return Err(Error::GridTooLarge {
            points,
            limit: MAX_BRUTE_FORCE_POINTS,
        });
    }
    let tables: Vec<Vec<f64>> = spec
        .queues
        .iter()
        .zip(&counts)
        .map(|(q, &n)| {
            (0..n)
                .map(|k| welfare_at(k as f64 * grid_step, q))
                .collect()
        })
        .collect();

    // running (max, argmax) of the last queue's table
    let last = tables.last().expect("validated non-empty");
    let mut prefix = Vec::with_capacity(last.len());
    let mut best_so_far = (f64::NEG_INFINITY, 0usize);
    for (k, &w) in last.iter().enumerate() {
        if w > best_so_far.0 {
            best_so_far = (w, k);
        }
        prefix.push(best_so_far);
    }

    struct Search<'a> {
        tables: &'a [Vec<f64>],
        prefix: &'a [(f64, usize)],
        current: Vec<usize>,
        best: (f64, Vec<usize>),
    }

    impl Search<'_> {
        fn run(&mut self, level: usize, budget: usize, acc: f64) {
            let n = self.tables.len();
            if level + 1 == n {
                let idx = budget.min(self.prefix.len() - 1);
                let (w, k) = self.prefix[idx];
                let value = acc + w;
                if value > self.best.0 {
                    self.current[level] = k;
                    self.best = (value, self.current.clone());
                }
                return;
            }
            let limit = budget.min(self.tables[level].len() - 1);
            for k in 0..=limit {
                self.current[level] = k;
                let w = self.tables[level][k];
                self.run(level + 1, budget - k, acc + w);
            }
        }
    }

    let mut search = Search {
        tables: &tables,
        prefix: &prefix,
        current: vec![0; spec.len()],
        best: (f64::NEG_INFINITY, vec![0; spec.len()]),
    };
    search.run(0, budget, 0.0);
    let (objective, indices) = search.best;
    let rates = indices.iter().map(|&k| k as f64 * grid_step).collect();
    Ok(Allocation::from_rates(rates, 0.0, objective))
}

/// Number of integer vectors with `0 ≤ k_i < counts[i]` and `Σ k_i ≤ budget`.
fn simplex_grid_points(counts: &[usize], budget: usize) -> f64 {
    // ways[s] = number of prefixes summing to exactly s
    let mut ways = vec![0.0f64; budget + 1];
    ways[0] = 1.0;
    for &n in counts {
        let mut prefix = vec![0.0f64; budget + 2];
        for s in 0..=budget {
            prefix[s + 1] = prefix[s] + ways[s];
        }
        for s in 0..=budget {
            let from = s.saturating_sub(n - 1);
            ways[s] = prefix[s + 1] - prefix[from];
        }
    }
    ways.iter().sum()
}
