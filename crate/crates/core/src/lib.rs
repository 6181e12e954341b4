//! Solvers and simulators for posted-price fee mechanisms on blockchains
//! that execute transactions in parallel queues under one global inclusion
//! capacity.

// `!(x > y)` is used on purpose so that NaN fails domain checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocate;
pub mod delay;
pub mod demand;
pub mod equilibrium;
mod error;
pub mod model;
mod numeric;
pub mod pricing;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{
    validate_system, Allocation, DelayParams, DemandFamily, PriceSchedule, QueuePrice, QueueSpec,
    SystemSpec, Violation,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/equilibrium.md")]
    mod equilibrium {}
    #[doc = include_str!("../../../book/src/allocation.md")]
    mod allocation {}
    #[doc = include_str!("../../../book/src/pricing.md")]
    mod pricing {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
