use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp, Pareto, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{substream, Purpose, RNG_ALGORITHM};
use super::stats::Estimate;
use crate::delay::eval_delay;
use crate::equilibrium::{demand_of_price, saturates_at};
use crate::error::{Error, Result};
use crate::model::{ensure_valid, DemandFamily, PriceSchedule, QueueSpec, SystemSpec};

/// Where the posted prices come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostedPrices {
    Schedule(PriceSchedule),
    Uniform(f64),
    PerQueue(Vec<f64>),
}

impl PostedPrices {
    pub fn resolve(&self, queues: usize) -> Result<Vec<f64>> {
        let prices = match self {
            PostedPrices::Schedule(s) => s.prices(),
            PostedPrices::Uniform(p) => vec![*p; queues],
            PostedPrices::PerQueue(v) => v.clone(),
        };
        if prices.len() != queues {
            return Err(Error::InvalidConfig(format!(
                "{} prices for {queues} queues",
                prices.len()
            )));
        }
        if let Some(p) = prices.iter().find(|p| p.is_nan()) {
            return Err(Error::InvalidConfig(format!("price {p} is not a number")));
        }
        Ok(prices)
    }
}

/// How an arriving user forecasts delay when deciding to join.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissionRule {
    /// Steady-state delay at the equilibrium rate for the posted price.
    #[default]
    SteadyState,
    /// Diagnostic: exact expected delay given the jobs currently in the
    /// queue. Not an equilibrium model.
    InstantaneousBacklog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: SystemSpec,
    pub prices: PostedPrices,
    pub horizon: f64,
    /// Arrivals before this time are simulated but not measured.
    pub warmup: f64,
    pub seed: u64,
    pub replications: usize,
    pub admission: AdmissionRule,
}

impl SimConfig {
    /// Config with the default warmup of 10% of the horizon.
    pub fn new(
        spec: SystemSpec,
        prices: PostedPrices,
        horizon: f64,
        seed: u64,
        replications: usize,
    ) -> Self {
        Self {
            spec,
            prices,
            horizon,
            warmup: 0.1 * horizon,
            seed,
            replications,
            admission: AdmissionRule::SteadyState,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure_valid(&self.spec)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.horizon) {
            return Err(Error::InvalidConfig(format!(
                "warmup must lie in [0, horizon), got {}",
                self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig(
                "replications must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Job counts of one queue in one replication, taken at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationCounts {
    pub admitted: u64,
    pub completed: u64,
    pub in_system: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSimStats {
    pub price: f64,
    /// Equilibrium rate users forecast delay from.
    pub forecast_rate: f64,
    pub admitted_rate: Estimate,
    pub mean_sojourn: Estimate,
    /// Mean realised `e^{-d W}` per admitted job.
    pub discount: Estimate,
    /// Mean realised `c W` per admitted job.
    pub cost: Estimate,
    pub revenue_rate: Estimate,
    /// Realised `Σ (v e^{-d W} - c W)` per unit time; prices are transfers
    /// and do not enter.
    pub welfare_rate: Estimate,
    /// Measured jobs over all replications.
    pub measured_jobs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub queues: Vec<QueueSimStats>,
    pub replications: usize,
    pub measured_jobs: u64,
    /// Indexed by replication, then queue.
    pub conservation: Vec<Vec<ConservationCounts>>,
    pub rng: String,
}

pub(crate) enum ValuationSampler {
    Pareto(Pareto<f64>),
    Uniform(Uniform<f64>),
}

impl ValuationSampler {
    pub(crate) fn for_queue(q: &QueueSpec) -> Result<Self> {
        let scale = q.demand.valuation_scale(q.market_size);
        match q.demand {
            DemandFamily::Isoelastic { elasticity } => Pareto::new(scale, elasticity)
                .map(ValuationSampler::Pareto)
                .map_err(|e| Error::InvalidConfig(e.to_string())),
            DemandFamily::LinearUniform { max_value } => Uniform::new(0.0, max_value * scale)
                .map(ValuationSampler::Uniform)
                .map_err(|e| Error::InvalidConfig(e.to_string())),
        }
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            ValuationSampler::Pareto(d) => d.sample(rng),
            ValuationSampler::Uniform(d) => d.sample(rng),
        }
    }
}

/// Per-replication sums for one queue.
#[derive(Default)]
struct QueueRun {
    measured: u64,
    sojourn: f64,
    discount: f64,
    cost: f64,
    welfare: f64,
    counts: Option<ConservationCounts>,
}

struct QueueSetup<'a> {
    queue: &'a QueueSpec,
    index: usize,
    price: f64,
    /// Steady-state `(D̄, C̄)` at the forecast rate.
    forecast: (f64, f64),
}

fn run_queue(cfg: &SimConfig, setup: &QueueSetup<'_>, replication: usize) -> Result<QueueRun> {
    let q = setup.queue;
    let (rep, qi) = (replication as u64, setup.index as u64);
    let mut arrivals_rng = substream(cfg.seed, rep, qi, Purpose::Arrivals);
    let mut values_rng = substream(cfg.seed, rep, qi, Purpose::Valuations);
    let mut service_rng = substream(cfg.seed, rep, qi, Purpose::Service);
    let gaps = Exp::new(q.market_size).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let service = Exp::new(1.0).expect("unit rate");
    let values = ValuationSampler::for_queue(q)?;
    let (d, c) = (q.delay.discount_rate, q.delay.linear_cost);

    let mut run = QueueRun::default();
    let mut departures: VecDeque<f64> = VecDeque::new();
    let mut last_departure = 0.0f64;
    let (mut admitted, mut completed, mut in_system) = (0u64, 0u64, 0u64);
    let mut t = 0.0;
    loop {
        t += gaps.sample(&mut arrivals_rng);
        if t > cfg.horizon {
            break;
        }
        let v = values.sample(&mut values_rng);
        while departures.front().is_some_and(|&dep| dep <= t) {
            departures.pop_front();
        }
        let joins = match cfg.admission {
            AdmissionRule::SteadyState => {
                let (discount, cost) = setup.forecast;
                v * discount - cost - setup.price >= 0.0
            }
            AdmissionRule::InstantaneousBacklog => {
                // sojourn is Erlang(n + 1, 1) behind n jobs with unit service
                let stages = (departures.len() + 1) as f64;
                v * (1.0 + d).powf(-stages) - c * stages - setup.price >= 0.0
            }
        };
        if !joins {
            continue;
        }
        let departure = t.max(last_departure) + service.sample(&mut service_rng);
        last_departure = departure;
        departures.push_back(departure);
        admitted += 1;
        if departure <= cfg.horizon {
            completed += 1;
        } else {
            in_system += 1;
        }
        if t >= cfg.warmup {
            let w = departure - t;
            let disc = (-d * w).exp();
            run.measured += 1;
            run.sojourn += w;
            run.discount += disc;
            run.cost += c * w;
            run.welfare += v * disc - c * w;
        }
    }
    run.counts = Some(ConservationCounts {
        admitted,
        completed,
        in_system,
    });
    Ok(run)
}

/// Simulates independent FIFO queues with unit-rate exponential service
/// under posted prices.
///
/// Potential users arrive to queue `i` as a Poisson(`Λ_i`) process, draw a
/// valuation from the queue's law and join when their forecast utility is
/// non-negative. Arrivals stop at the horizon and every admitted job is
/// followed to completion, so each measured job has a complete sojourn.
/// Queues share no state, so each one is run as its own event sequence.
pub fn run_posted_price_sim(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let prices = config.prices.resolve(config.spec.len())?;
    let mut setups = Vec::with_capacity(prices.len());
    for (i, (q, &price)) in config.spec.queues.iter().zip(&prices).enumerate() {
        let rate = demand_of_price(price, q);
        if config.admission == AdmissionRule::SteadyState
            && q.market_size >= 1.0
            && saturates_at(price, q)
        {
            return Err(Error::Unstable { queue: i, rate });
        }
        let dl = eval_delay(rate, &q.delay)?;
        setups.push(QueueSetup {
            queue: q,
            index: i,
            price,
            forecast: (dl.expected_discount, dl.expected_cost),
        });
    }

    let window = config.horizon - config.warmup;
    let runs: Vec<Vec<QueueRun>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            setups
                .iter()
                .map(|s| run_queue(config, s, rep))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut queues = Vec::with_capacity(setups.len());
    for (i, s) in setups.iter().enumerate() {
        let per_rep: Vec<&QueueRun> = runs.iter().map(|r| &r[i]).collect();
        let collect =
            |f: &dyn Fn(&QueueRun) -> f64| -> Vec<f64> { per_rep.iter().map(|r| f(r)).collect() };
        let per_job = |f: &dyn Fn(&QueueRun) -> f64| -> Estimate {
            Estimate::from_samples(&collect(&|r: &QueueRun| f(r) / r.measured as f64))
        };
        queues.push(QueueSimStats {
            price: s.price,
            forecast_rate: demand_of_price(s.price, s.queue),
            admitted_rate: Estimate::from_samples(&collect(&|r| r.measured as f64 / window)),
            mean_sojourn: per_job(&|r| r.sojourn),
            discount: per_job(&|r| r.discount),
            cost: per_job(&|r| r.cost),
            revenue_rate: Estimate::from_samples(&collect(&|r| {
                s.price * r.measured as f64 / window
            })),
            welfare_rate: Estimate::from_samples(&collect(&|r| r.welfare / window)),
            measured_jobs: per_rep.iter().map(|r| r.measured).sum(),
        });
    }
    let conservation = runs
        .iter()
        .map(|r| {
            r.iter()
                .map(|q| q.counts.expect("set at end of run"))
                .collect()
        })
        .collect();
    Ok(SimResult {
        measured_jobs: queues.iter().map(|q| q.measured_jobs).sum(),
        queues,
        replications: config.replications,
        conservation,
        rng: RNG_ALGORITHM.to_string(),
    })
}
