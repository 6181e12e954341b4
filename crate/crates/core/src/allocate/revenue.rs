use rayon::prelude::*;

use crate::delay::eval_delay;
use crate::demand::{eval_demand, marginal_value_slope};
use crate::equilibrium::{choke_price, demand_of_price, net_marginal_value};
use crate::error::{out_of_domain, Error, Result};
use crate::model::{ensure_valid, Allocation, QueueSpec, SystemSpec};
use crate::numeric::{golden_max, scan_max, MAX_BISECTIONS};

use super::MAX_REVENUE_QUEUES;

/// `λ p(λ)` for one queue; zero at zero rate.
fn queue_revenue(rate: f64, q: &QueueSpec) -> f64 {
    if rate <= 0.0 {
        return 0.0;
    }
    net_marginal_value(rate, q).map_or(f64::NEG_INFINITY, |p| rate * p)
}

/// `p(λ) + λ p'(λ)` with `p' = V'' D̄ + V' D̄' - C̄'`.
fn marginal_revenue(rate: f64, q: &QueueSpec) -> f64 {
    if rate <= 0.0 {
        return choke_price(q);
    }
    let (Ok(v), Ok(dl)) = (
        eval_demand(rate, q.market_size, &q.demand),
        eval_delay(rate, &q.delay),
    ) else {
        return f64::NEG_INFINITY;
    };
    let price = v.marginal_value * dl.expected_discount - dl.expected_cost;
    let slope = marginal_value_slope(rate, q.market_size, &q.demand) * dl.expected_discount
        + v.marginal_value * dl.d_discount
        - dl.d_cost;
    price + rate * slope
}

/// Fee revenue `Σ λ_i p_i(λ_i)` of a rate vector.
pub fn revenue_objective(rates: &[f64], spec: &SystemSpec) -> Result<f64> {
    if rates.len() != spec.len() {
        return Err(Error::AllocationMismatch {
            rates: rates.len(),
            queues: spec.len(),
        });
    }
    let mut total = 0.0;
    for (&rate, q) in rates.iter().zip(&spec.queues) {
        let upper = q.market_size.min(1.0);
        if !(rate >= 0.0 && rate < upper) {
            return Err(out_of_domain("rate", rate, format!("[0, {upper})")));
        }
        total += queue_revenue(rate, q);
    }
    Ok(total)
}

/// Largest finite gradient entry; stands in for the infinite marginal
/// revenue of an isoelastic queue at zero.
const GRADIENT_CLAMP: f64 = 1e8;
const DP_STEPS: usize = 200;
const ASCENT_ITERATIONS: usize = 500;
const POLISH_SWEEPS: usize = 12;
const GOLDEN_ITERATIONS: usize = 90;
const SNAP: f64 = 1e-13;
const TIE_TOLERANCE: f64 = 1e-12;

/// Revenue maximisation restricted to the queues in `members`.
struct SetProblem<'a> {
    queues: Vec<&'a QueueSpec>,
    caps: Vec<f64>,
    budget: f64,
}

impl<'a> SetProblem<'a> {
    fn new(spec: &'a SystemSpec, members: &[usize]) -> Self {
        let queues: Vec<&QueueSpec> = members.iter().map(|&i| &spec.queues[i]).collect();
        let caps: Vec<f64> = queues.iter().map(|q| q.rate_cap()).collect();
        let budget = spec.capacity.min(caps.iter().sum());
        Self {
            queues,
            caps,
            budget,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.queues)
            .map(|(&r, q)| queue_revenue(r, q))
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.queues)
            .map(|(&r, q)| marginal_revenue(r, q).clamp(-GRADIENT_CLAMP, GRADIENT_CLAMP))
            .collect()
    }

    /// Euclidean projection onto `{0 ≤ x_i ≤ cap_i, Σ x_i ≤ budget}`.
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let clamped: Vec<f64> = x
            .iter()
            .zip(&self.caps)
            .map(|(&v, &c)| v.clamp(0.0, c))
            .collect();
        if clamped.iter().sum::<f64>() <= self.budget {
            return clamped;
        }
        let shifted = |tau: f64| -> f64 {
            x.iter()
                .zip(&self.caps)
                .map(|(&v, &c)| (v - tau).clamp(0.0, c))
                .sum()
        };
        let mut lo = 0.0;
        let mut hi = x.iter().cloned().fold(0.0, f64::max);
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if shifted(mid) > self.budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x.iter()
            .zip(&self.caps)
            .map(|(&v, &c)| (v - hi).clamp(0.0, c))
            .collect()
    }

    /// Grid optimum with the budget split into `DP_STEPS` units.
    fn grid_start(&self) -> Vec<f64> {
        let h = self.budget / DP_STEPS as f64;
        let m = self.queues.len();
        let mut best = vec![0.0; DP_STEPS + 1];
        let mut choice = vec![vec![0usize; DP_STEPS + 1]; m];
        for (i, q) in self.queues.iter().enumerate() {
            let units = ((self.caps[i] / h).floor() as usize).min(DP_STEPS);
            let table: Vec<f64> = (0..=units)
                .map(|t| queue_revenue(t as f64 * h, q))
                .collect();
            let mut next = vec![f64::NEG_INFINITY; DP_STEPS + 1];
            for j in 0..=DP_STEPS {
                for (t, &r) in table.iter().enumerate().take(j.min(units) + 1) {
                    let value = best[j - t] + r;
                    if value > next[j] {
                        next[j] = value;
                        choice[i][j] = t;
                    }
                }
            }
            best = next;
        }
        let mut x = vec![0.0; m];
        let mut j = DP_STEPS;
        for i in (0..m).rev() {
            let t = choice[i][j];
            x[i] = t as f64 * h;
            j -= t;
        }
        self.project(&x)
    }

    fn weighted_start(&self, weights: &[f64], fill: f64) -> Vec<f64> {
        let total: f64 = weights.iter().sum();
        let x: Vec<f64> = weights
            .iter()
            .map(|w| fill * self.budget * w / total)
            .collect();
        self.project(&x)
    }

    fn starts(&self) -> Vec<Vec<f64>> {
        let m = self.queues.len();
        let mut rank: Vec<usize> = (0..m).collect();
        let chokes: Vec<f64> = self.queues.iter().map(|q| choke_price(q)).collect();
        rank.sort_by(|&a, &b| chokes[b].total_cmp(&chokes[a]).then(a.cmp(&b)));
        let mut position = vec![0usize; m];
        for (pos, &i) in rank.iter().enumerate() {
            position[i] = pos;
        }
        let standalone: Vec<f64> = self
            .queues
            .iter()
            .zip(&self.caps)
            .map(|(q, &c)| {
                scan_max(|r| queue_revenue(r, q), 0.0, c.min(self.budget), 200)
                    .0
                    .max(1e-12)
            })
            .collect();
        let descending: Vec<f64> = position.iter().map(|&p| 0.5f64.powi(p as i32)).collect();
        let ascending: Vec<f64> = position
            .iter()
            .map(|&p| 0.5f64.powi((m - 1 - p) as i32))
            .collect();
        let top: Vec<f64> = position
            .iter()
            .map(|&p| {
                if p == 0 {
                    0.9
                } else {
                    0.1 / (m.max(2) - 1) as f64
                }
            })
            .collect();
        let bottom: Vec<f64> = position
            .iter()
            .map(|&p| {
                if p == m - 1 {
                    0.9
                } else {
                    0.1 / (m.max(2) - 1) as f64
                }
            })
            .collect();
        let flat = vec![1.0; m];
        vec![
            self.grid_start(),
            self.weighted_start(&flat, 1.0),
            self.weighted_start(&self.caps, 1.0),
            self.project(&standalone),
            self.weighted_start(&descending, 1.0),
            self.weighted_start(&ascending, 1.0),
            self.weighted_start(&top, 1.0),
            self.weighted_start(&bottom, 1.0),
            self.weighted_start(&flat, 0.5),
        ]
    }

    /// Projected gradient ascent with Armijo backtracking.
    fn ascend(&self, start: Vec<f64>) -> (Vec<f64>, f64) {
        let mut x = start;
        let mut fx = self.value(&x);
        let g0 = self.gradient(&x);
        let gmax = g0.iter().fold(0.0f64, |a, g| a.max(g.abs())).max(1e-12);
        let mut t = 0.1 * self.budget / gmax;
        let tiny = 1e-15 * self.budget.max(1.0);
        'outer: for _ in 0..ASCENT_ITERATIONS {
            let g = self.gradient(&x);
            loop {
                let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + t * b).collect();
                let y = self.project(&trial);
                let step: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
                let size = step.iter().fold(0.0f64, |a, s| a.max(s.abs()));
                if size < tiny {
                    break 'outer;
                }
                let fy = self.value(&y);
                let predicted: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
                if fy >= fx + 1e-4 * predicted && fy >= fx {
                    x = y;
                    fx = fy;
                    t *= 2.0;
                    break;
                }
                t *= 0.5;
                if t < 1e-300 {
                    break 'outer;
                }
            }
        }
        (x, fx)
    }

    /// Coordinate and pairwise-transfer line searches.
    fn polish(&self, mut x: Vec<f64>, mut fx: f64) -> (Vec<f64>, f64) {
        let m = x.len();
        for _ in 0..POLISH_SWEEPS {
            let before = fx;
            for i in 0..m {
                for j in (i + 1)..m {
                    let lo = -(x[i].min(self.caps[j] - x[j]));
                    let hi = (self.caps[i] - x[i]).min(x[j]);
                    if !(hi > lo) {
                        continue;
                    }
                    let (qi, qj) = (self.queues[i], self.queues[j]);
                    let (xi, xj) = (x[i], x[j]);
                    let (ci, cj) = (self.caps[i], self.caps[j]);
                    let pair = |delta: f64| {
                        queue_revenue((xi + delta).clamp(0.0, ci), qi)
                            + queue_revenue((xj - delta).clamp(0.0, cj), qj)
                    };
                    let current = pair(0.0);
                    let (delta, value) = golden_max(pair, lo, hi, GOLDEN_ITERATIONS);
                    if value > current {
                        x[i] = (xi + delta).clamp(0.0, ci);
                        x[j] = (xj - delta).clamp(0.0, cj);
                        fx = self.value(&x);
                    }
                }
            }
            for i in 0..m {
                let others: f64 = x.iter().sum::<f64>() - x[i];
                let hi = ((self.budget - others).min(self.caps[i]) - x[i]).max(0.0);
                let lo = -x[i];
                if !(hi > lo) {
                    continue;
                }
                let (q, xi, cap) = (self.queues[i], x[i], self.caps[i]);
                let single = |delta: f64| queue_revenue((xi + delta).clamp(0.0, cap), q);
                let current = single(0.0);
                let (delta, value) = golden_max(single, lo, hi, GOLDEN_ITERATIONS);
                if value > current {
                    x[i] = (xi + delta).clamp(0.0, cap);
                    fx = self.value(&x);
                }
            }
            if fx - before <= 1e-15 * fx.abs().max(1.0) {
                break;
            }
        }
        (x, fx)
    }

    fn solve(&self) -> (Vec<f64>, f64) {
        let mut best: Option<(Vec<f64>, f64)> = None;
        for start in self.starts() {
            let (x, fx) = self.ascend(start);
            let (x, fx) = self.polish(x, fx);
            if best.as_ref().is_none_or(|b| fx > b.1) {
                best = Some((x, fx));
            }
        }
        let (mut x, _) = best.expect("at least one start");
        for v in &mut x {
            if *v < SNAP {
                *v = 0.0;
            }
        }
        let fx = self.value(&x);
        (x, fx)
    }
}

/// Candidate solution for one served set, in full coordinates.
struct Candidate {
    rates: Vec<f64>,
    revenue: f64,
    served: Vec<usize>,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        let scale = self.revenue.abs().max(other.revenue.abs()).max(1.0);
        if (self.revenue - other.revenue).abs() > TIE_TOLERANCE * scale {
            return self.revenue > other.revenue;
        }
        (self.served.len(), &self.served) < (other.served.len(), &other.served)
    }
}

fn solve_set(spec: &SystemSpec, mask: u32) -> Candidate {
    let members: Vec<usize> = (0..spec.len()).filter(|i| mask & (1 << i) != 0).collect();
    let mut rates = vec![0.0; spec.len()];
    if members.is_empty() {
        return Candidate {
            rates,
            revenue: 0.0,
            served: Vec::new(),
        };
    }
    let problem = SetProblem::new(spec, &members);
    let (x, _) = problem.solve();
    for (&i, &v) in members.iter().zip(&x) {
        rates[i] = v;
    }
    let revenue = rates
        .iter()
        .zip(&spec.queues)
        .map(|(&r, q)| queue_revenue(r, q))
        .sum();
    let served = (0..spec.len()).filter(|&i| rates[i] > 0.0).collect();
    Candidate {
        rates,
        revenue,
        served,
    }
}

/// Revenue-maximising allocation with a separate price per queue.
///
/// Every served set is optimised separately (grid seed, multi-start
/// projected ascent, line-search polish) and the best is kept; near-ties go
/// to the smaller served set. The reported multiplier is the common
/// marginal revenue of the interior queues when capacity binds.
pub fn solve_revenue(spec: &SystemSpec) -> Result<Allocation> {
    ensure_valid(spec)?;
    if spec.len() > MAX_REVENUE_QUEUES {
        return Err(Error::TooManyQueues {
            n: spec.len(),
            max: MAX_REVENUE_QUEUES,
        });
    }
    let sets = 1u32 << spec.len();
    let candidates: Vec<Candidate> = (0..sets)
        .into_par_iter()
        .map(|mask| solve_set(spec, mask))
        .collect();
    let mut best = &candidates[0];
    for c in &candidates[1..] {
        if c.better_than(best) {
            best = c;
        }
    }
    let caps_total: f64 = best.served.iter().map(|&i| spec.queues[i].rate_cap()).sum();
    let total: f64 = best.rates.iter().sum();
    let kappa = spec.capacity;
    let binding =
        !best.served.is_empty() && kappa <= caps_total && total >= kappa - 1e-9 * kappa.max(1.0);
    let shadow_price = if binding {
        let interior: Vec<f64> = best
            .served
            .iter()
            .filter(|&&i| best.rates[i] < spec.queues[i].rate_cap() - 1e-12)
            .map(|&i| marginal_revenue(best.rates[i], &spec.queues[i]))
            .collect();
        if interior.is_empty() {
            0.0
        } else {
            (interior.iter().sum::<f64>() / interior.len() as f64).max(0.0)
        }
    } else {
        0.0
    };
    Ok(Allocation::from_rates(
        best.rates.clone(),
        shadow_price,
        best.revenue,
    ))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UniformPriceConfig {
    /// Upper end of the price search when isoelastic queues make the choke
    /// price infinite. Defaults to 1000 times the median marginal value at
    /// an equal capacity split.
    pub max_price: Option<f64>,
}

/// Best single price posted on every queue, with the rates it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformPriceOptimum {
    pub price: f64,
    pub allocation: Allocation,
}

pub fn solve_revenue_uniform(spec: &SystemSpec) -> Result<UniformPriceOptimum> {
    solve_revenue_uniform_with(spec, &UniformPriceConfig::default())
}

fn total_demand(price: f64, spec: &SystemSpec) -> f64 {
    spec.queues.iter().map(|q| demand_of_price(price, q)).sum()
}

/// Smallest price whose induced demand fits in `capacity`, searched on
/// `[0, hi]` with `total_demand(hi) ≤ capacity`.
fn feasibility_price(spec: &SystemSpec, capacity: f64, mut hi: f64) -> f64 {
    if total_demand(0.0, spec) <= capacity {
        return 0.0;
    }
    while total_demand(hi, spec) > capacity {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total_demand(mid, spec) > capacity {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

const UNIFORM_SCAN_POINTS: usize = 2000;

/// Revenue-maximising uniform price.
///
/// Prices below the capacity-clearing price are infeasible, so revenue
/// `p Σ λ_i(p)` is scanned from there up to the largest choke price (or a
/// finite stand-in when some choke price is infinite) and polished by
/// golden-section search.
pub fn solve_revenue_uniform_with(
    spec: &SystemSpec,
    config: &UniformPriceConfig,
) -> Result<UniformPriceOptimum> {
    ensure_valid(spec)?;
    let finite_max = spec
        .queues
        .iter()
        .map(choke_price)
        .filter(|p| p.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let has_unbounded = spec.queues.iter().any(|q| choke_price(q).is_infinite());
    let mut upper = finite_max;
    if has_unbounded {
        let cap_price = match config.max_price {
            Some(p) if p > 0.0 && p.is_finite() => p,
            Some(p) => return Err(out_of_domain("max_price", p, "(0, ∞)")),
            None => {
                let share = spec.capacity / spec.len() as f64;
                let mut values: Vec<f64> = spec
                    .queues
                    .iter()
                    .map(|q| {
                        let rate = share.min(q.rate_cap());
                        eval_demand(rate, q.market_size, &q.demand)
                            .map_or(f64::NAN, |e| e.marginal_value)
                    })
                    .filter(|v| v.is_finite())
                    .collect();
                values.sort_by(f64::total_cmp);
                let median = if values.is_empty() {
                    1.0
                } else if values.len() % 2 == 1 {
                    values[values.len() / 2]
                } else {
                    0.5 * (values[values.len() / 2 - 1] + values[values.len() / 2])
                };
                1e3 * median
            }
        };
        upper = upper.max(cap_price);
    }
    let revenue_at = |p: f64| p * total_demand(p, spec);
    let n = spec.len();
    if !(upper > 0.0) {
        return Ok(UniformPriceOptimum {
            price: 0.0,
            allocation: Allocation::from_rates(vec![0.0; n], 0.0, 0.0),
        });
    }

    let kappa = spec.capacity;
    let lower = feasibility_price(spec, kappa, upper);
    let upper = upper.max(lower);
    let (mut price, mut revenue) = scan_max(revenue_at, lower, upper, UNIFORM_SCAN_POINTS);
    let at_lower = revenue_at(lower);
    if at_lower >= revenue {
        price = lower;
        revenue = at_lower;
    }
    let rates: Vec<f64> = spec
        .queues
        .iter()
        .map(|q| demand_of_price(price, q))
        .collect();
    let total: f64 = rates.iter().sum();
    let binding = lower > 0.0 && price == lower && total >= kappa - 1e-9 * kappa.max(1.0);
    let shadow_price = if binding {
        let h = 1e-6 * kappa;
        let up = feasibility_price(spec, kappa + h, upper) * (kappa + h);
        let down = feasibility_price(spec, kappa - h, upper) * (kappa - h);
        ((up - down) / (2.0 * h)).max(0.0)
    } else {
        0.0
    };
    Ok(UniformPriceOptimum {
        price,
        allocation: Allocation::from_rates(rates, shadow_price, revenue),
    })
}

/// Result of [`find_threshold_capacity`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    /// Smallest capacity (to within [`THRESHOLD_RESOLUTION`]) at which the
    /// revenue optimum serves more than the top queue; `scan_upper` when no
    /// such capacity was found.
    pub threshold: f64,
    /// Queue with the highest choke price (lowest index on ties).
    pub top_queue: usize,
    pub found: bool,
    /// Largest capacity examined, the sum of the stability caps.
    pub scan_upper: f64,
}

pub const THRESHOLD_RESOLUTION: f64 = 1e-4;
const THRESHOLD_GRID: usize = 48;

/// Capacity below which the revenue optimum serves only the queue with the
/// highest choke price.
///
/// Scans a geometric capacity grid for the first point where the optimum
/// serves anything other than exactly that queue, then bisects.
pub fn find_threshold_capacity(spec: &SystemSpec) -> Result<ThresholdReport> {
    ensure_valid(spec)?;
    let chokes: Vec<f64> = spec.queues.iter().map(choke_price).collect();
    let mut top_queue = 0;
    for (i, &c) in chokes.iter().enumerate() {
        if c > chokes[top_queue] {
            top_queue = i;
        }
    }
    let scan_upper: f64 = spec.queues.iter().map(|q| q.rate_cap()).sum();
    let only_top = |kappa: f64| -> Result<bool> {
        let a = solve_revenue(&spec.with_capacity(kappa))?;
        Ok(a.served_set == [top_queue])
    };

    let ratio = (scan_upper / THRESHOLD_RESOLUTION).powf(1.0 / (THRESHOLD_GRID - 1) as f64);
    let mut previous = 0.0;
    for k in 0..THRESHOLD_GRID {
        let kappa = if k + 1 == THRESHOLD_GRID {
            scan_upper
        } else {
            THRESHOLD_RESOLUTION * ratio.powi(k as i32)
        };
        if !only_top(kappa)? {
            let (mut lo, mut hi) = (previous, kappa);
            while hi - lo > THRESHOLD_RESOLUTION {
                let mid = 0.5 * (lo + hi);
                if only_top(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(ThresholdReport {
                threshold: hi,
                top_queue,
                found: true,
                scan_upper,
            });
        }
        previous = kappa;
    }
    Ok(ThresholdReport {
        threshold: scan_upper,
        top_queue,
        found: false,
        scan_upper,
    })
}
