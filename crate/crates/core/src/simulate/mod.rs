//! Stochastic checks of the closed forms.
//!
//! * [`run_posted_price_sim`] runs parallel FIFO queues under posted prices
//!   and measures rates, delays, revenue and welfare.
//! * [`run_block_sim`] and [`select_block`] build capacity-limited blocks
//!   from per-queue pools under global-bid or value-weighted ordering.
//! * [`replay_worked_example`] reproduces the two-queue worked example.

mod block;
mod posted;
mod rng;
mod stats;

pub use block::{
    mvw_adjust, replay_worked_example, run_block_sim, select_block, BlockOrdering, BlockRecord,
    BlockSimResult, ExpectedValues, OrderingPolicy, ReplayEntry, ReplayStep, ReplayTranscript,
    Transaction,
};
pub use posted::{
    run_posted_price_sim, AdmissionRule, ConservationCounts, PostedPrices, QueueSimStats,
    SimConfig, SimResult,
};
pub use rng::RNG_ALGORITHM;
pub use stats::Estimate;
