//! Valuation laws and the gross-value / marginal-value curves they induce.
//!
//! If every user valuing service above `v` joins a queue of size Λ, the
//! demand rate is `λ = Λ Φ̄(v)`; the marginal value `V'(λ)` is the inverse
//! map and the gross value `V(λ)` its integral from zero.
//!
//! The isoelastic family is normalised per unit of market share: gross value
//! is `V(λ) = (λ/Λ)^{1-1/ε} / (1-1/ε)`, a function of `λ/Λ` alone, and the
//! marginal value is its derivative `V'(λ) = (λ/Λ)^{-1/ε} / Λ`. Valuations in
//! a queue of size Λ are therefore standard Pareto(ε) draws on `[1, ∞)`
//! scaled by `1/Λ`. With `Λ = 1` this is the plain `V'(λ) = λ^{-1/ε}` curve.

use crate::error::{out_of_domain, Result};
use crate::model::DemandFamily;

/// Gross value and marginal value at one demand rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandCurveEval {
    pub gross_value: f64,
    /// `+∞` at zero rate for the isoelastic family.
    pub marginal_value: f64,
}

impl DemandFamily {
    /// Factor mapping the family's unit valuation law onto a queue of the
    /// given market size.
    pub fn valuation_scale(&self, market_size: f64) -> f64 {
        match *self {
            DemandFamily::Isoelastic { .. } => 1.0 / market_size,
            DemandFamily::LinearUniform { .. } => 1.0,
        }
    }

    /// Largest valuation in the support, `+∞` when unbounded.
    pub fn max_valuation(&self, market_size: f64) -> f64 {
        match *self {
            DemandFamily::Isoelastic { .. } => f64::INFINITY,
            DemandFamily::LinearUniform { max_value } => {
                max_value * self.valuation_scale(market_size)
            }
        }
    }
}

/// Survival function `Φ̄(v) = P(valuation > v)` of the unit valuation law.
///
/// Isoelastic: `min(1, v^{-ε})` (Pareto on `[1, ∞)`). Linear-uniform:
/// `clamp(1 - v / v̄, 0, 1)`.
pub fn survival(v: f64, family: &DemandFamily) -> f64 {
    match *family {
        DemandFamily::Isoelastic { elasticity } => {
            if v <= 1.0 {
                1.0
            } else {
                v.powf(-elasticity)
            }
        }
        DemandFamily::LinearUniform { max_value } => (1.0 - v / max_value).clamp(0.0, 1.0),
    }
}

/// Demand rate when every user with valuation above `v` joins.
pub fn demand_of_value(v: f64, market_size: f64, family: &DemandFamily) -> f64 {
    market_size * survival(v / family.valuation_scale(market_size), family)
}

/// Evaluates `V(λ)` and `V'(λ)` for a queue of size `market_size`.
pub fn eval_demand(rate: f64, market_size: f64, family: &DemandFamily) -> Result<DemandCurveEval> {
    if !(rate >= 0.0) {
        return Err(out_of_domain("rate", rate, "[0, Λ)"));
    }
    match *family {
        DemandFamily::Isoelastic { elasticity } => {
            if rate > market_size {
                return Err(out_of_domain("rate", rate, format!("[0, {market_size}]")));
            }
            if rate == 0.0 {
                return Ok(DemandCurveEval {
                    gross_value: 0.0,
                    marginal_value: f64::INFINITY,
                });
            }
            let share = rate / market_size;
            let power = 1.0 - 1.0 / elasticity;
            Ok(DemandCurveEval {
                gross_value: share.powf(power) / power,
                marginal_value: share.powf(-1.0 / elasticity) / market_size,
            })
        }
        DemandFamily::LinearUniform { max_value } => {
            if rate >= market_size {
                return Err(out_of_domain("rate", rate, format!("[0, {market_size})")));
            }
            Ok(DemandCurveEval {
                gross_value: max_value * rate * (1.0 - rate / (2.0 * market_size)),
                marginal_value: max_value * (1.0 - rate / market_size),
            })
        }
    }
}

/// `V''(λ)`; `-∞` at zero for the isoelastic family. Caller checks the domain.
pub(crate) fn marginal_value_slope(rate: f64, market_size: f64, family: &DemandFamily) -> f64 {
    match *family {
        DemandFamily::Isoelastic { elasticity } => {
            if rate == 0.0 {
                return f64::NEG_INFINITY;
            }
            let share = rate / market_size;
            -share.powf(-1.0 / elasticity - 1.0) / (elasticity * market_size * market_size)
        }
        DemandFamily::LinearUniform { max_value } => -max_value / market_size,
    }
}
