use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::posted::ValuationSampler;
use super::rng::{substream, Purpose, RNG_ALGORITHM};
use crate::error::{out_of_domain, Error, Result};
use crate::model::{ensure_valid, SystemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: u64,
    pub queue: usize,
    pub valuation: f64,
    pub arrival_time: f64,
    pub bid: f64,
    pub completion_time: Option<f64>,
}

/// Source of per-queue expected values for value-weighted ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ExpectedValues {
    Fixed(Vec<f64>),
    /// Exponential moving average of observed bids, started at the first bid.
    Estimated {
        ema_half_life: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OrderingPolicy {
    /// Highest raw bid first, across all queues.
    GlobalBid {},
    /// Highest `bid / E[v]` first, where `E[v]` belongs to the bid's queue.
    #[serde(rename = "mvw")]
    MarketValueWeighted { expected_values: ExpectedValues },
}

/// Ordering rule for one block, with expected values already resolved.
#[derive(Debug, Clone, Copy)]
pub enum BlockOrdering<'a> {
    GlobalBid,
    ValueWeighted(&'a [f64]),
}

/// Bid scaled by its queue's expected value.
pub fn mvw_adjust(bid: f64, expected_value: f64) -> Result<f64> {
    if !(expected_value > 0.0) {
        return Err(out_of_domain("expected_value", expected_value, "(0, ∞)"));
    }
    Ok(bid / expected_value)
}

/// Picks up to `capacity` transactions and removes them from `pools`.
///
/// Ranking is by raw or adjusted bid, descending; ties go to the lower queue
/// index, then the earlier arrival, then the lower id. The selection is
/// returned in rank order and the remaining pools keep their order.
pub fn select_block(
    pools: &mut [Vec<Transaction>],
    capacity: usize,
    ordering: BlockOrdering<'_>,
) -> Result<Vec<Transaction>> {
    if let BlockOrdering::ValueWeighted(values) = ordering {
        if values.len() != pools.len() {
            return Err(Error::InvalidConfig(format!(
                "{} expected values for {} queues",
                values.len(),
                pools.len()
            )));
        }
    }
    let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
    for (qi, pool) in pools.iter().enumerate() {
        for (ti, tx) in pool.iter().enumerate() {
            let key = match ordering {
                BlockOrdering::GlobalBid => tx.bid,
                BlockOrdering::ValueWeighted(values) => mvw_adjust(tx.bid, values[qi])?,
            };
            ranked.push((key, qi, ti));
        }
    }
    ranked.sort_by(|a, b| {
        let (ta, tb) = (&pools[a.1][a.2], &pools[b.1][b.2]);
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(
                ta.arrival_time
                    .partial_cmp(&tb.arrival_time)
                    .unwrap_or(Ordering::Equal),
            )
            .then(ta.id.cmp(&tb.id))
    });
    ranked.truncate(capacity);

    let mut taken: Vec<Vec<bool>> = pools.iter().map(|p| vec![false; p.len()]).collect();
    let selected: Vec<Transaction> = ranked
        .iter()
        .map(|&(_, qi, ti)| {
            taken[qi][ti] = true;
            pools[qi][ti].clone()
        })
        .collect();
    for (pool, flags) in pools.iter_mut().zip(&taken) {
        let mut keep = flags.iter().map(|f| !f);
        pool.retain(|_| keep.next().unwrap_or(true));
    }
    Ok(selected)
}

/// State after one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block: usize,
    pub time: f64,
    /// Transactions left waiting in each queue after the block.
    pub backlog: Vec<usize>,
    /// Transactions executed from each queue so far.
    pub executed_cum: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSimResult {
    pub blocks: Vec<BlockRecord>,
    /// Fraction of all executed transactions taken from each queue.
    pub throughput_shares: Vec<f64>,
    pub rng: String,
}

/// Per-queue exponential moving average with a half-life in observations.
struct EmaEstimator {
    alpha: f64,
    values: Vec<Option<f64>>,
}

impl EmaEstimator {
    fn new(half_life: f64, queues: usize) -> Self {
        Self {
            alpha: 1.0 - 0.5f64.powf(1.0 / half_life),
            values: vec![None; queues],
        }
    }

    fn observe(&mut self, queue: usize, bid: f64) {
        let slot = &mut self.values[queue];
        *slot = Some(match *slot {
            None => bid,
            Some(prev) => prev + self.alpha * (bid - prev),
        });
    }

    /// Queues with no observation yet have nothing to rank; they get 1.
    fn current(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.unwrap_or(1.0)).collect()
    }
}

/// Repeated arrival and block-building rounds.
///
/// Each interval, queue `i` receives Poisson(`Λ_i · interval`) transactions
/// bidding their valuation, then one block of up to `capacity` transactions
/// is built under `policy`.
pub fn run_block_sim(
    spec: &SystemSpec,
    policy: &OrderingPolicy,
    capacity: usize,
    interval: f64,
    horizon: f64,
    seed: u64,
) -> Result<BlockSimResult> {
    ensure_valid(spec)?;
    if capacity == 0 {
        return Err(Error::InvalidConfig(
            "block capacity must be at least 1".into(),
        ));
    }
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "block interval must be positive, got {interval}"
        )));
    }
    if !(horizon >= interval && horizon.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "horizon {horizon} must cover at least one block interval"
        )));
    }
    let n = spec.len();
    let mut ema = None;
    let mut fixed = None;
    match policy {
        OrderingPolicy::GlobalBid {} => {}
        OrderingPolicy::MarketValueWeighted { expected_values } => match expected_values {
            ExpectedValues::Fixed(values) => {
                if values.len() != n || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidConfig(format!(
                        "expected values must be {n} positive numbers"
                    )));
                }
                fixed = Some(values.clone());
            }
            ExpectedValues::Estimated { ema_half_life } => {
                if !(*ema_half_life > 0.0 && ema_half_life.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "EMA half-life must be positive, got {ema_half_life}"
                    )));
                }
                ema = Some(EmaEstimator::new(*ema_half_life, n));
            }
        },
    }

    let mut counts = Vec::with_capacity(n);
    let mut bids = Vec::with_capacity(n);
    let mut arrivals_rng = Vec::with_capacity(n);
    let mut bids_rng = Vec::with_capacity(n);
    for (i, q) in spec.queues.iter().enumerate() {
        counts.push(
            Poisson::new(q.market_size * interval)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?,
        );
        bids.push(ValuationSampler::for_queue(q)?);
        arrivals_rng.push(substream(seed, 0, i as u64, Purpose::Arrivals));
        bids_rng.push(substream(seed, 0, i as u64, Purpose::Bids));
    }

    let blocks_total = (horizon / interval).floor() as usize;
    let mut pools: Vec<Vec<Transaction>> = vec![Vec::new(); n];
    let mut executed = vec![0u64; n];
    let mut next_id = 0u64;
    let mut blocks = Vec::with_capacity(blocks_total);
    for b in 0..blocks_total {
        let start = b as f64 * interval;
        for i in 0..n {
            let k = counts[i].sample(&mut arrivals_rng[i]) as usize;
            let mut times: Vec<f64> = (0..k)
                .map(|_| start + interval * arrivals_rng[i].random::<f64>())
                .collect();
            times.sort_by(f64::total_cmp);
            for t in times {
                let v = bids[i].sample(&mut bids_rng[i]);
                if let Some(e) = ema.as_mut() {
                    e.observe(i, v);
                }
                pools[i].push(Transaction {
                    id: next_id,
                    queue: i,
                    valuation: v,
                    arrival_time: t,
                    bid: v,
                    completion_time: None,
                });
                next_id += 1;
            }
        }
        let estimated;
        let ordering = if let Some(values) = &fixed {
            BlockOrdering::ValueWeighted(values)
        } else if let Some(e) = &ema {
            estimated = e.current();
            BlockOrdering::ValueWeighted(&estimated)
        } else {
            BlockOrdering::GlobalBid
        };
        let block_time = start + interval;
        for tx in select_block(&mut pools, capacity, ordering)? {
            executed[tx.queue] += 1;
        }
        blocks.push(BlockRecord {
            block: b,
            time: block_time,
            backlog: pools.iter().map(Vec::len).collect(),
            executed_cum: executed.clone(),
        });
    }
    let total: u64 = executed.iter().sum();
    let throughput_shares = executed
        .iter()
        .map(|&e| {
            if total == 0 {
                0.0
            } else {
                e as f64 / total as f64
            }
        })
        .collect();
    Ok(BlockSimResult {
        blocks,
        throughput_shares,
        rng: RNG_ALGORITHM.to_string(),
    })
}

/// One transaction in the worked example, labelled like `a4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub label: String,
    pub queue: usize,
    pub bid: f64,
    pub adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub policy: String,
    /// Executed transactions in rank order.
    pub executed: Vec<ReplayEntry>,
    /// Bids left in each queue, highest first.
    pub remaining: Vec<Vec<f64>>,
    pub backlog_before: Vec<usize>,
    pub backlog_after: Vec<usize>,
}

/// The two-queue, five-slot worked example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayTranscript {
    pub queue_names: Vec<String>,
    pub block_capacity: usize,
    pub expected_values: Vec<f64>,
    /// Waiting bids at the start, highest first.
    pub initial_pools: Vec<Vec<f64>>,
    /// Initial bids divided by their queue's expected value.
    pub adjusted_initial_pools: Vec<Vec<f64>>,
    /// Bids arriving during the period, in arrival order.
    pub arrivals: Vec<Vec<f64>>,
    pub global_bid: ReplayStep,
    pub market_value_weighted: ReplayStep,
}

const EXAMPLE_INITIAL: [&[f64]; 2] = [&[15.0, 10.0, 5.0], &[8.0, 6.0, 4.0]];
const EXAMPLE_ARRIVALS: [&[f64]; 2] = [&[12.0, 7.0], &[5.0, 7.0]];
const EXAMPLE_EXPECTED: [f64; 2] = [10.0, 6.0];
const EXAMPLE_CAPACITY: usize = 5;

fn example_pools() -> Vec<Vec<Transaction>> {
    let mut id = 0;
    (0..2)
        .map(|q| {
            let initial = EXAMPLE_INITIAL[q].iter().map(|&b| (b, 0.0));
            let arriving = EXAMPLE_ARRIVALS[q].iter().map(|&b| (b, 1.0));
            initial
                .chain(arriving)
                .map(|(bid, t)| {
                    id += 1;
                    Transaction {
                        id,
                        queue: q,
                        valuation: bid,
                        arrival_time: t,
                        bid,
                        completion_time: None,
                    }
                })
                .collect()
        })
        .collect()
}

fn label(tx: &Transaction) -> String {
    // ids run a1..a5 then b1..b5
    let letter = if tx.queue == 0 { 'a' } else { 'b' };
    let index = tx.id as usize - tx.queue * (EXAMPLE_INITIAL[0].len() + EXAMPLE_ARRIVALS[0].len());
    format!("{letter}{index}")
}

fn replay_step(policy: &str, ordering: BlockOrdering<'_>) -> Result<ReplayStep> {
    let mut pools = example_pools();
    let backlog_before = EXAMPLE_INITIAL.iter().map(|p| p.len()).collect();
    let chosen = select_block(&mut pools, EXAMPLE_CAPACITY, ordering)?;
    let executed = chosen
        .iter()
        .map(|tx| {
            let adjusted = match ordering {
                BlockOrdering::GlobalBid => tx.bid,
                BlockOrdering::ValueWeighted(v) => tx.bid / v[tx.queue],
            };
            ReplayEntry {
                label: label(tx),
                queue: tx.queue,
                bid: tx.bid,
                adjusted,
            }
        })
        .collect();
    let remaining: Vec<Vec<f64>> = pools
        .iter()
        .map(|p| {
            let mut b: Vec<f64> = p.iter().map(|t| t.bid).collect();
            b.sort_by(|x, y| y.total_cmp(x));
            b
        })
        .collect();
    Ok(ReplayStep {
        policy: policy.to_string(),
        executed,
        backlog_after: remaining.iter().map(Vec::len).collect(),
        remaining,
        backlog_before,
    })
}

/// Replays the worked example: two queues holding bids {15, 10, 5} and
/// {8, 6, 4}, two arrivals each ({12, 7} and {5, 7}), one five-slot block
/// built by global bid and by value-weighted ordering with expected values
/// {10, 6}.
pub fn replay_worked_example() -> ReplayTranscript {
    let global_bid = replay_step("global_bid", BlockOrdering::GlobalBid).expect("static example");
    let market_value_weighted = replay_step("mvw", BlockOrdering::ValueWeighted(&EXAMPLE_EXPECTED))
        .expect("static example");
    ReplayTranscript {
        queue_names: vec!["A".into(), "B".into()],
        block_capacity: EXAMPLE_CAPACITY,
        expected_values: EXAMPLE_EXPECTED.to_vec(),
        initial_pools: EXAMPLE_INITIAL.iter().map(|p| p.to_vec()).collect(),
        adjusted_initial_pools: EXAMPLE_INITIAL
            .iter()
            .zip(EXAMPLE_EXPECTED)
            .map(|(p, e)| p.iter().map(|b| b / e).collect())
            .collect(),
        arrivals: EXAMPLE_ARRIVALS.iter().map(|p| p.to_vec()).collect(),
        global_bid,
        market_value_weighted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DelayParams, DemandFamily, QueueSpec};

    fn labels(step: &ReplayStep) -> Vec<&str> {
        step.executed.iter().map(|e| e.label.as_str()).collect()
    }

    #[test]
    fn adjust_examples() {
        assert_eq!(mvw_adjust(15.0, 10.0).unwrap(), 1.5);
        assert_eq!(mvw_adjust(8.0, 6.0).unwrap(), 4.0 / 3.0);
        assert_eq!(mvw_adjust(3.7, 3.7).unwrap(), 1.0);
        assert!(mvw_adjust(1.0, 0.0).is_err());
        assert!(mvw_adjust(1.0, -2.0).is_err());
    }

    #[test]
    fn replay_matches_worked_example() {
        let t = replay_worked_example();
        assert_eq!(
            t.initial_pools,
            vec![vec![15.0, 10.0, 5.0], vec![8.0, 6.0, 4.0]]
        );
        assert_eq!(labels(&t.global_bid), vec!["a1", "a4", "a2", "b1", "a5"]);
        let bids: Vec<f64> = t.global_bid.executed.iter().map(|e| e.bid).collect();
        assert_eq!(bids, vec![15.0, 12.0, 10.0, 8.0, 7.0]);
        assert_eq!(
            labels(&t.market_value_weighted),
            vec!["a1", "b1", "a4", "b5", "a2"]
        );
        let adjusted: Vec<f64> = t
            .market_value_weighted
            .executed
            .iter()
            .map(|e| e.adjusted)
            .collect();
        assert_eq!(adjusted, vec![1.5, 8.0 / 6.0, 1.2, 7.0 / 6.0, 1.0]);
        assert_eq!(t.adjusted_initial_pools[0], vec![1.5, 1.0, 0.5]);
        assert_eq!(t.global_bid.backlog_before[1], 3);
        assert_eq!(t.global_bid.backlog_after[1], 4);
        assert_eq!(
            t.global_bid.remaining,
            vec![vec![5.0], vec![7.0, 6.0, 5.0, 4.0]]
        );
        assert_eq!(
            t.market_value_weighted.remaining,
            vec![vec![7.0, 5.0], vec![6.0, 5.0, 4.0]]
        );
    }

    #[test]
    fn zero_capacity_selects_nothing() {
        let mut pools = example_pools();
        let before = pools.clone();
        let chosen = select_block(&mut pools, 0, BlockOrdering::GlobalBid).unwrap();
        assert!(chosen.is_empty());
        assert_eq!(pools, before);
    }

    #[test]
    fn equal_expected_values_reduce_to_global_bid() {
        let mut a = example_pools();
        let mut b = example_pools();
        let x = select_block(&mut a, 5, BlockOrdering::GlobalBid).unwrap();
        let y = select_block(&mut b, 5, BlockOrdering::ValueWeighted(&[3.0, 3.0])).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rescaling_one_queue_leaves_selection_unchanged() {
        let mut a = example_pools();
        let mut b = example_pools();
        for tx in &mut b[1] {
            tx.bid *= 4.0;
        }
        let x = select_block(&mut a, 5, BlockOrdering::ValueWeighted(&EXAMPLE_EXPECTED)).unwrap();
        let y = select_block(&mut b, 5, BlockOrdering::ValueWeighted(&[10.0, 24.0])).unwrap();
        let ids = |v: &[Transaction]| v.iter().map(|t| t.id).collect::<Vec<_>>();
        assert_eq!(ids(&x), ids(&y));
    }

    fn lu(name: &str, v: f64, size: f64) -> QueueSpec {
        QueueSpec::new(
            name,
            size,
            DemandFamily::LinearUniform { max_value: v },
            DelayParams::new(1.0, 0.0),
        )
    }

    #[test]
    fn global_bid_starves_low_value_queue() {
        let spec = SystemSpec::new(vec![lu("a", 20.0, 3.0), lu("b", 6.0, 3.0)], 1.0);
        let g = run_block_sim(&spec, &OrderingPolicy::GlobalBid {}, 5, 1.0, 200.0, 1).unwrap();
        let m = run_block_sim(
            &spec,
            &OrderingPolicy::MarketValueWeighted {
                expected_values: ExpectedValues::Fixed(vec![10.0, 3.0]),
            },
            5,
            1.0,
            200.0,
            1,
        )
        .unwrap();
        let last_g = g.blocks.last().unwrap();
        let last_m = m.blocks.last().unwrap();
        assert!(last_g.backlog[1] > last_m.backlog[1]);
        assert!(g.throughput_shares[1] < m.throughput_shares[1]);
    }

    #[test]
    fn symmetric_queues_share_throughput() {
        let spec = SystemSpec::new(vec![lu("a", 10.0, 2.0), lu("b", 10.0, 2.0)], 1.0);
        for policy in [
            OrderingPolicy::GlobalBid {},
            OrderingPolicy::MarketValueWeighted {
                expected_values: ExpectedValues::Estimated {
                    ema_half_life: 20.0,
                },
            },
        ] {
            let r = run_block_sim(&spec, &policy, 3, 1.0, 5000.0, 4).unwrap();
            assert!(
                (r.throughput_shares[0] - 0.5).abs() < 0.02,
                "{:?}",
                r.throughput_shares
            );
        }
    }

    #[test]
    fn ema_starts_at_first_bid_and_halves_distance() {
        let mut e = EmaEstimator::new(1.0, 1);
        e.observe(0, 10.0);
        assert_eq!(e.current(), vec![10.0]);
        e.observe(0, 20.0);
        assert_eq!(e.current(), vec![15.0]);
    }

    #[test]
    fn policy_serde_shapes() {
        let g: OrderingPolicy = serde_json::from_str(r#"{"type":"global_bid"}"#).unwrap();
        assert_eq!(g, OrderingPolicy::GlobalBid {});
        let f: OrderingPolicy =
            serde_json::from_str(r#"{"type":"mvw","expected_values":[10,6]}"#).unwrap();
        assert_eq!(
            f,
            OrderingPolicy::MarketValueWeighted {
                expected_values: ExpectedValues::Fixed(vec![10.0, 6.0])
            }
        );
        let e: OrderingPolicy =
            serde_json::from_str(r#"{"type":"mvw","expected_values":{"ema_half_life":5}}"#)
                .unwrap();
        assert!(matches!(
            e,
            OrderingPolicy::MarketValueWeighted {
                expected_values: ExpectedValues::Estimated { .. }
            }
        ));
        assert!(serde_json::from_str::<OrderingPolicy>(
            r#"{"type":"mvw","expected_values":{"ema_half_life":5,"x":1}}"#
        )
        .is_err());
        assert!(
            serde_json::from_str::<OrderingPolicy>(r#"{"type":"global_bid","extra":1}"#).is_err()
        );
    }

    #[test]
    fn block_sim_validation() {
        let spec = SystemSpec::new(vec![lu("a", 10.0, 1.0)], 1.0);
        assert!(run_block_sim(&spec, &OrderingPolicy::GlobalBid {}, 0, 1.0, 10.0, 0).is_err());
        assert!(run_block_sim(&spec, &OrderingPolicy::GlobalBid {}, 1, 0.0, 10.0, 0).is_err());
        let bad = OrderingPolicy::MarketValueWeighted {
            expected_values: ExpectedValues::Fixed(vec![0.0]),
        };
        assert!(run_block_sim(&spec, &bad, 1, 1.0, 10.0, 0).is_err());
    }
}
