//! Expected delay discount and delay cost in a unit-rate M/M/1 queue.
//!
//! At demand rate `λ < 1` the steady-state sojourn `W` is exponential with
//! rate `1 - λ`. Averaging `e^{-d W}` and `c W` over it gives
//!
//! ```text
//! D̄(λ) = (1 - λ) / (1 + d - λ)      D̄'(λ) = -d / (1 + d - λ)²
//! C̄(λ) = c / (1 - λ)                C̄'(λ) =  c / (1 - λ)²
//! ```

use crate::error::{out_of_domain, Result};
use crate::model::DelayParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayCurveEval {
    pub expected_discount: f64,
    pub expected_cost: f64,
    pub d_discount: f64,
    pub d_cost: f64,
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(out_of_domain("rate", rate, "[0, 1)"))
    }
}

pub fn eval_delay(rate: f64, params: &DelayParams) -> Result<DelayCurveEval> {
    check_rate(rate)?;
    let DelayParams {
        discount_rate: d,
        linear_cost: c,
    } = *params;
    let idle = 1.0 - rate;
    let denom = idle + d;
    Ok(DelayCurveEval {
        expected_discount: idle / denom,
        expected_cost: c / idle,
        d_discount: -d / (denom * denom),
        d_cost: c / (idle * idle),
    })
}

/// Mean sojourn time `1 / (1 - λ)`.
pub fn mean_sojourn(rate: f64) -> Result<f64> {
    check_rate(rate)?;
    Ok(1.0 / (1.0 - rate))
}
