//! Domain types shared by every solver: queue and system descriptions,
//! allocations and price schedules.
//!
//! Queues are indexed in the order they are given. Nothing here requires the
//! queues to be sorted; [`crate::equilibrium::choke_order`] computes the
//! decreasing-choke-price permutation when a result depends on it.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Distance kept from the stability boundary `min(Λ, 1)` by every solver.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Valuation law of a queue, which fixes its inverse demand curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandFamily {
    /// Constant-elasticity marginal value. Requires `elasticity > 1`.
    Isoelastic { elasticity: f64 },
    /// Valuations uniform on `[0, max_value]`, giving a linear inverse demand.
    LinearUniform { max_value: f64 },
}

/// Exponential delay discount `e^{-d t}` and linear delay cost `c t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayParams {
    pub discount_rate: f64,
    pub linear_cost: f64,
}

impl DelayParams {
    pub fn new(discount_rate: f64, linear_cost: f64) -> Self {
        Self {
            discount_rate,
            linear_cost,
        }
    }
}

/// One submarket: Poisson arrivals of potential users with a valuation law
/// and delay sensitivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSpec {
    pub name: String,
    /// Arrival rate of potential users, Λ.
    pub market_size: f64,
    pub demand: DemandFamily,
    pub delay: DelayParams,
}

impl QueueSpec {
    pub fn new(
        name: impl Into<String>,
        market_size: f64,
        demand: DemandFamily,
        delay: DelayParams,
    ) -> Self {
        Self {
            name: name.into(),
            market_size,
            demand,
            delay,
        }
    }

    /// Largest demand rate any solver will assign: `min(Λ, 1) - STABILITY_MARGIN`.
    pub fn rate_cap(&self) -> f64 {
        self.market_size.min(1.0) - STABILITY_MARGIN
    }
}

/// `N` parallel queues sharing a global inclusion capacity κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub queues: Vec<QueueSpec>,
    pub capacity: f64,
}

impl SystemSpec {
    pub fn new(queues: Vec<QueueSpec>, capacity: f64) -> Self {
        Self { queues, capacity }
    }

    pub fn len(&self) -> usize {
        self.queues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.is_empty()
    }

    /// Same queues, different capacity.
    pub fn with_capacity(&self, capacity: f64) -> Self {
        Self {
            queues: self.queues.clone(),
            capacity,
        }
    }
}

/// A demand-rate vector with its served set and capacity multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub rates: Vec<f64>,
    /// Indices with strictly positive rate, ascending.
    pub served_set: Vec<usize>,
    /// Multiplier μ on the capacity constraint; zero when it is slack.
    pub shadow_price: f64,
    /// Welfare or revenue, depending on the solver.
    pub objective_value: f64,
}

impl Allocation {
    pub fn from_rates(rates: Vec<f64>, shadow_price: f64, objective_value: f64) -> Self {
        let served_set = rates
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 0.0)
            .map(|(i, _)| i)
            .collect();
        Self {
            rates,
            served_set,
            shadow_price,
            objective_value,
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn is_served(&self, queue: usize) -> bool {
        self.served_set.binary_search(&queue).is_ok()
    }

    /// Lists broken allocation invariants (empty when consistent).
    pub fn invariant_violations(&self, spec: &SystemSpec, tolerance: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.rates.len() != spec.len() {
            out.push(format!(
                "{} rates for {} queues",
                self.rates.len(),
                spec.len()
            ));
            return out;
        }
        for (i, (&rate, q)) in self.rates.iter().zip(&spec.queues).enumerate() {
            if (rate > 0.0) != self.is_served(i) {
                out.push(format!("queue {i}: served flag disagrees with rate {rate}"));
            }
            if rate < 0.0 {
                out.push(format!("queue {i}: negative rate {rate}"));
            }
            if rate >= q.market_size.min(1.0) {
                out.push(format!("queue {i}: rate {rate} violates stability"));
            }
        }
        let total = self.total_rate();
        if total > spec.capacity + tolerance {
            out.push(format!(
                "total rate {total} exceeds capacity {}",
                spec.capacity
            ));
        }
        if self.shadow_price < 0.0 {
            out.push(format!("negative shadow price {}", self.shadow_price));
        }
        if self.shadow_price > 0.0 && (total - spec.capacity).abs() > tolerance {
            out.push(format!(
                "shadow price {} with slack capacity ({} of {})",
                self.shadow_price, total, spec.capacity
            ));
        }
        out
    }
}

/// Posted price of one queue, split into the externalities it charges for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueuePrice {
    pub price: f64,
    /// Lost discounted value imposed on the queue's other users, `-V D̄'`.
    pub local_discount_externality: f64,
    /// Extra additive delay cost imposed on the queue's other users, `λ C̄'`.
    pub local_cost_externality: f64,
    /// Capacity term. Equals μ for served queues; for an unserved queue it
    /// holds the choke price, the lowest price that keeps the queue empty.
    pub global_term: f64,
    pub served: bool,
}

impl QueuePrice {
    /// Builds an entry whose price is the sum of its three components.
    pub fn from_components(
        local_discount_externality: f64,
        local_cost_externality: f64,
        global_term: f64,
        served: bool,
    ) -> Self {
        Self {
            price: local_discount_externality + local_cost_externality + global_term,
            local_discount_externality,
            local_cost_externality,
            global_term,
            served,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub shadow_price: f64,
    pub entries: Vec<QueuePrice>,
}

impl PriceSchedule {
    pub fn prices(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.price).collect()
    }
}

/// A single broken invariant, located by a schema path such as
/// `queues[0].demand.elasticity`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation {
        path: path.into(),
        message: message.into(),
    }
}

/// Checks every structural invariant of a system. An empty list means valid.
pub fn validate_system(spec: &SystemSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(spec.capacity.is_finite() && spec.capacity > 0.0) {
        out.push(violation("capacity", "capacity must be positive"));
    }
    if spec.queues.is_empty() {
        out.push(violation("queues", "at least one queue is required"));
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, q) in spec.queues.iter().enumerate() {
        let at = |field: &str| format!("queues[{i}].{field}");
        if q.name.is_empty() {
            out.push(violation(at("name"), "name must be non-empty"));
        } else if let Some(first) = seen.insert(q.name.as_str(), i) {
            // keep the first index as the canonical owner of the name
            seen.insert(q.name.as_str(), first);
            out.push(violation(
                at("name"),
                format!("duplicate queue name '{}'", q.name),
            ));
        }
        if !(q.market_size.is_finite() && q.market_size > 0.0) {
            out.push(violation(at("market_size"), "market size must be positive"));
        }
        match q.demand {
            DemandFamily::Isoelastic { elasticity } => {
                if !(elasticity.is_finite() && elasticity > 1.0) {
                    out.push(violation(
                        at("demand.elasticity"),
                        "elasticity must exceed 1",
                    ));
                }
            }
            DemandFamily::LinearUniform { max_value } => {
                if !(max_value.is_finite() && max_value > 0.0) {
                    out.push(violation(
                        at("demand.max_value"),
                        "max value must be positive",
                    ));
                }
            }
        }
        if !(q.delay.discount_rate.is_finite() && q.delay.discount_rate >= 0.0) {
            out.push(violation(
                at("delay.discount_rate"),
                "discount rate must be non-negative",
            ));
        }
        if !(q.delay.linear_cost.is_finite() && q.delay.linear_cost >= 0.0) {
            out.push(violation(
                at("delay.linear_cost"),
                "linear cost must be non-negative",
            ));
        }
    }
    out
}

/// `Ok(())` when [`validate_system`] finds nothing.
pub fn ensure_valid(spec: &SystemSpec) -> crate::Result<()> {
    let violations = validate_system(spec);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(crate::Error::InvalidSystem(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lu(name: &str, max_value: f64) -> QueueSpec {
        QueueSpec::new(
            name,
            1.0,
            DemandFamily::LinearUniform { max_value },
            DelayParams::new(1.0, 1.0),
        )
    }

    #[test]
    fn valid_two_queue_system() {
        let spec = SystemSpec::new(vec![lu("a", 10.0), lu("b", 6.0)], 0.5);
        assert!(validate_system(&spec).is_empty());
    }

    #[test]
    fn unit_elasticity_rejected() {
        let mut q = lu("a", 10.0);
        q.demand = DemandFamily::Isoelastic { elasticity: 1.0 };
        let v = validate_system(&SystemSpec::new(vec![q], 1.0));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "queues[0].demand.elasticity");
        assert_eq!(v[0].message, "elasticity must exceed 1");
    }

    #[test]
    fn zero_capacity_rejected() {
        let v = validate_system(&SystemSpec::new(vec![lu("a", 10.0)], 0.0));
        assert_eq!(v, vec![violation("capacity", "capacity must be positive")]);
    }

    #[test]
    fn duplicate_names_reported_once_per_repeat() {
        let spec = SystemSpec::new(vec![lu("a", 1.0), lu("a", 2.0), lu("a", 3.0)], 1.0);
        let v = validate_system(&spec);
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].path, "queues[1].name");
        assert_eq!(v[1].path, "queues[2].name");
    }

    #[test]
    fn negative_delay_and_market_size() {
        let mut q = lu("a", 1.0);
        q.market_size = -1.0;
        q.delay = DelayParams::new(-0.1, f64::NAN);
        let v = validate_system(&SystemSpec::new(vec![q], 1.0));
        let paths: Vec<_> = v.iter().map(|v| v.path.as_str()).collect();
        assert_eq!(
            paths,
            [
                "queues[0].market_size",
                "queues[0].delay.discount_rate",
                "queues[0].delay.linear_cost"
            ]
        );
    }

    #[test]
    fn price_components_sum() {
        let e = QueuePrice::from_components(0.1, 0.2, 0.3, true);
        assert_eq!(e.price, 0.1 + 0.2 + 0.3);
    }

    #[test]
    fn allocation_served_set_tracks_positive_rates() {
        let a = Allocation::from_rates(vec![0.2, 0.0, 0.1], 0.0, 1.0);
        assert_eq!(a.served_set, vec![0, 2]);
        assert!(a.is_served(2));
        assert!(!a.is_served(1));
    }

    #[test]
    fn demand_family_json_shape() {
        let json = r#"{"type":"linear_uniform","max_value":10.0}"#;
        let d: DemandFamily = serde_json::from_str(json).unwrap();
        assert_eq!(d, DemandFamily::LinearUniform { max_value: 10.0 });
        let bad = r#"{"type":"isoelastic","elasticity":2.0,"extra":1}"#;
        assert!(serde_json::from_str::<DemandFamily>(bad).is_err());
    }
}
