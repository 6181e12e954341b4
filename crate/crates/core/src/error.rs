use thiserror::Error;

use crate::model::Violation;

/// Errors raised by the solvers and simulators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside {domain}")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("invalid system: {}", format_violations(.0))]
    InvalidSystem(Vec<Violation>),

    #[error("net welfare of queue {queue} is not strictly concave on its feasible range")]
    NonConcave { queue: usize },

    #[error("every queue saturates its stability cap before the capacity constraint binds")]
    Saturated,

    #[error("queue {queue} is unstable at the posted price (induced rate reaches {rate})")]
    Unstable { queue: usize, rate: f64 },

    #[error("queues {first} and {second} have tied choke prices ({price})")]
    TiedChokePrices {
        first: usize,
        second: usize,
        price: f64,
    },

    #[error("brute-force grid has {points} points, above the limit of {limit}")]
    GridTooLarge { points: f64, limit: f64 },

    #[error("{n} queues exceeds the limit of {max} for this operation")]
    TooManyQueues { n: usize, max: usize },

    #[error("queue {queue} is not isoelastic")]
    NotIsoelastic { queue: usize },

    #[error("queues {first} and {second} have different delay parameters")]
    HeterogeneousDelay { first: usize, second: usize },

    #[error("allocation has {rates} rates but the system has {queues} queues")]
    AllocationMismatch { rates: usize, queues: usize },

    #[error("queue index {index} out of range for {queues} queues")]
    NoSuchQueue { index: usize, queues: usize },

    #[error("queue {queue} has zero rate")]
    ZeroRate { queue: usize },

    #[error("expected value {0} must be positive")]
    NonPositiveExpectedValue(f64),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn out_of_domain(what: &'static str, value: f64, domain: impl Into<String>) -> Error {
    Error::OutOfDomain {
        what,
        value,
        domain: domain.into(),
    }
}
