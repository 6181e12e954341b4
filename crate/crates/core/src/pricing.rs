//! Welfare-supporting posted prices.
//!
//! At a welfare optimum every served queue satisfies `W'_i(λ_i) = μ`, which
//! rearranges into a price charging each user for the harm they do:
//!
//! ```text
//! p_i = -V_i(λ_i) D̄'_i(λ_i)  +  λ_i C̄'_i(λ_i)  +  μ
//!       lost discounted value   extra delay cost   capacity
//! ```
//!
//! The same price solves the marginal-user condition at `λ_i`, so posting it
//! decentralises the optimum.

use crate::allocate::eval_welfare;
use crate::delay::eval_delay;
use crate::demand::eval_demand;
use crate::equilibrium::choke_price;
use crate::error::{Error, Result};
use crate::model::{Allocation, DemandFamily, PriceSchedule, QueuePrice, SystemSpec};

fn check_shapes(spec: &SystemSpec, alloc: &Allocation) -> Result<()> {
    if alloc.rates.len() != spec.len() {
        return Err(Error::AllocationMismatch {
            rates: alloc.rates.len(),
            queues: spec.len(),
        });
    }
    Ok(())
}

fn check_index(index: usize, spec: &SystemSpec) -> Result<()> {
    if index >= spec.len() {
        return Err(Error::NoSuchQueue {
            index,
            queues: spec.len(),
        });
    }
    Ok(())
}

/// Prices supporting a welfare allocation, with their externality split.
///
/// Unserved queues are priced at their choke price, the cheapest price at
/// which nobody joins; the whole amount sits in `global_term`. A queue
/// pinned at its rate cap has `W'_i > μ`, and its `global_term` is
/// `W'_i(λ_i)`: the capacity price plus the rent from running out of users.
pub fn optimal_prices(spec: &SystemSpec, alloc: &Allocation) -> Result<PriceSchedule> {
    check_shapes(spec, alloc)?;
    let mu = alloc.shadow_price;
    let mut entries = Vec::with_capacity(spec.len());
    for (&rate, q) in alloc.rates.iter().zip(&spec.queues) {
        if rate > 0.0 {
            let v = eval_demand(rate, q.market_size, &q.demand)?;
            let dl = eval_delay(rate, &q.delay)?;
            let global = if rate >= q.rate_cap() {
                eval_welfare(rate, q)?.marginal_welfare.max(mu)
            } else {
                mu
            };
            entries.push(QueuePrice::from_components(
                -v.gross_value * dl.d_discount,
                rate * dl.d_cost,
                global,
                true,
            ));
        } else {
            entries.push(QueuePrice::from_components(0.0, 0.0, choke_price(q), false));
        }
    }
    Ok(PriceSchedule {
        shadow_price: mu,
        entries,
    })
}

/// Small-rate approximation of `p_i / p_j` for two isoelastic queues sharing
/// `d` and `c`:
///
/// ```text
/// [V_i d/(1+d)² + c λ_i + μ] / [V_j d/(1+d)² + c λ_j + μ]
/// ```
///
/// i.e. the exact ratio with `D̄'` and `C̄'` frozen at zero load.
pub fn approx_price_ratio(
    i: usize,
    j: usize,
    spec: &SystemSpec,
    alloc: &Allocation,
) -> Result<f64> {
    check_shapes(spec, alloc)?;
    check_index(i, spec)?;
    check_index(j, spec)?;
    for k in [i, j] {
        if !matches!(spec.queues[k].demand, DemandFamily::Isoelastic { .. }) {
            return Err(Error::NotIsoelastic { queue: k });
        }
    }
    let (qi, qj) = (&spec.queues[i], &spec.queues[j]);
    if qi.delay != qj.delay {
        return Err(Error::HeterogeneousDelay {
            first: i.min(j),
            second: i.max(j),
        });
    }
    let d = qi.delay.discount_rate;
    let c = qi.delay.linear_cost;
    let mu = alloc.shadow_price;
    let weight = d / ((1.0 + d) * (1.0 + d));
    let term = |k: usize| -> Result<f64> {
        let q = &spec.queues[k];
        let rate = alloc.rates[k];
        let v = eval_demand(rate, q.market_size, &q.demand)?.gross_value;
        Ok(v * weight + c * rate + mu)
    };
    Ok(term(i)? / term(j)?)
}

/// High-elasticity, negligible-μ limit of `p_i / p_j`:
/// `(λ_i/Λ_i) / (λ_j/Λ_j)`.
///
/// The limit also needs the additive cost term to be negligible; with
/// `c > 0` and unequal market sizes the exact ratio does not approach it.
pub fn limit_price_ratio(i: usize, j: usize, spec: &SystemSpec, alloc: &Allocation) -> Result<f64> {
    check_shapes(spec, alloc)?;
    check_index(i, spec)?;
    check_index(j, spec)?;
    if alloc.rates[j] == 0.0 {
        return Err(Error::ZeroRate { queue: j });
    }
    let share = |k: usize| alloc.rates[k] / spec.queues[k].market_size;
    Ok(share(i) / share(j))
}
