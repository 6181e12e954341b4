//! Local equilibrium in a single queue.
//!
//! Users forecast delay from the steady state at the equilibrium rate, so the
//! marginal joiner has valuation `V'(λ)` and zero expected utility:
//!
//! ```text
//! V'(λ) D̄(λ) - C̄(λ) - p = 0
//! ```
//!
//! The left side is strictly decreasing in `λ`, which makes price and rate a
//! bijection on the active range.

use std::cmp::Ordering;

use crate::delay::eval_delay;
use crate::demand::eval_demand;
use crate::error::{out_of_domain, Error, Result};
use crate::model::{DemandFamily, QueueSpec, SystemSpec};
use crate::numeric::bisect_decreasing;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueEquilibrium {
    pub price: f64,
    pub rate: f64,
    pub marginal_value: f64,
    pub active: bool,
}

/// `V'(λ) D̄(λ) - C̄(λ)` on `[0, min(Λ, 1))`; equals the choke price at zero.
pub(crate) fn net_marginal_value(rate: f64, q: &QueueSpec) -> Result<f64> {
    if rate == 0.0 {
        return Ok(choke_price(q));
    }
    let demand = eval_demand(rate, q.market_size, &q.demand)?;
    let delay = eval_delay(rate, &q.delay)?;
    Ok(demand.marginal_value * delay.expected_discount - delay.expected_cost)
}

/// Price that induces demand rate `rate`.
pub fn price_of_demand(rate: f64, q: &QueueSpec) -> Result<f64> {
    let upper = q.market_size.min(1.0);
    if !(rate > 0.0 && rate < upper) {
        return Err(out_of_domain("rate", rate, format!("(0, {upper})")));
    }
    net_marginal_value(rate, q)
}

/// Net value of immediate service to the highest-value user,
/// `V'(0) D̄(0) - C̄(0)`. Infinite for isoelastic queues.
pub fn choke_price(q: &QueueSpec) -> f64 {
    match q.demand {
        DemandFamily::Isoelastic { .. } => f64::INFINITY,
        DemandFamily::LinearUniform { max_value } => {
            let d = q.delay.discount_rate;
            max_value / (1.0 + d) - q.delay.linear_cost
        }
    }
}

/// Whether every potential user joins at price `p`, pinning the rate at the
/// stability cap.
pub fn saturates_at(price: f64, q: &QueueSpec) -> bool {
    let cap = q.rate_cap();
    net_marginal_value(cap, q).is_ok_and(|net| net >= price)
}

/// Equilibrium demand rate at price `p`.
///
/// Zero when `p` is at or above the choke price; otherwise the unique root of
/// the marginal-user condition on `(0, min(Λ, 1))`, clamped to the stability
/// cap when even the cap leaves the marginal user with positive utility.
pub fn demand_of_price(price: f64, q: &QueueSpec) -> f64 {
    if price >= choke_price(q) || price.is_nan() {
        return 0.0;
    }
    let cap = q.rate_cap();
    if saturates_at(price, q) {
        return cap;
    }
    bisect_decreasing(
        |rate| net_marginal_value(rate, q).map_or(f64::NEG_INFINITY, |net| net - price),
        0.0,
        cap,
    )
}

pub fn equilibrium_at_price(price: f64, q: &QueueSpec) -> QueueEquilibrium {
    let rate = demand_of_price(price, q);
    let marginal_value = if rate > 0.0 {
        eval_demand(rate, q.market_size, &q.demand)
            .map(|e| e.marginal_value)
            .unwrap_or(f64::NAN)
    } else {
        q.demand.max_valuation(q.market_size)
    };
    QueueEquilibrium {
        price,
        rate,
        marginal_value,
        active: rate > 0.0,
    }
}

/// Permutation listing queues by decreasing choke price.
///
/// Isoelastic queues all have infinite choke prices; among them larger
/// market size comes first, then input order. Exact ties between finite
/// choke prices are an error.
pub fn choke_order(spec: &SystemSpec) -> Result<Vec<usize>> {
    let chokes: Vec<f64> = spec.queues.iter().map(choke_price).collect();
    let mut order: Vec<usize> = (0..spec.len()).collect();
    order.sort_by(|&a, &b| {
        chokes[b]
            .partial_cmp(&chokes[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                spec.queues[b]
                    .market_size
                    .partial_cmp(&spec.queues[a].market_size)
                    .unwrap_or(Ordering::Equal)
            })
            .then(a.cmp(&b))
    });
    for pair in order.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if chokes[a].is_finite() && chokes[a] == chokes[b] {
            return Err(Error::TiedChokePrices {
                first: a.min(b),
                second: a.max(b),
                price: chokes[a],
            });
        }
    }
    Ok(order)
}
