//! Epoch-by-epoch simulation of a fleet under a crawl policy.
//!
//! Each epoch: observe the states, compute indices, choose actions, collect
//! the pre-crawl state of every crawled source as reward, then advance the
//! states. In deterministic mode a passive source moves to `alpha x + u`; in
//! stochastic mode `u` is replaced by a sampled net utility from Poisson
//! arrivals over the period.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::model::{active_step, passive_step, FleetParams, SourceParams};
use crate::policy::{ActionVector, Policy, PolicyError, PolicySpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("horizon {horizon} must exceed warmup {warmup}")]
    Horizon { horizon: u64, warmup: u64 },
    #[error("stochastic mode needs a seed")]
    MissingSeed,
    #[error("initial states: expected {expected} finite nonnegative values, got {got:?}")]
    InitialStates { expected: usize, got: Vec<f64> },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("writing trace: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Deterministic,
    Stochastic,
}

/// Law of the initial utility of one content item; both have mean `xi_mean`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityDistribution {
    #[default]
    Constant,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalModel {
    #[serde(default)]
    pub utility: UtilityDistribution,
}

/// Utility added to a source over one period.
///
/// Draws the Poisson number of arrivals, places them uniformly on the
/// period, and sums each item's utility decayed to the period end. The
/// expectation is `u`.
pub fn sample_net_utility<R: Rng + ?Sized>(
    p: &SourceParams,
    model: &ArrivalModel,
    rng: &mut R,
) -> f64 {
    let mean_count = p.lambda_rate() * p.period();
    let count = match Poisson::new(mean_count) {
        Ok(d) => d.sample(rng) as u64,
        // Rates too small for the sampler produce no arrivals.
        Err(_) => 0,
    };
    let exp = Exp::new(1.0 / p.xi_mean()).ok();
    let mut total = 0.0;
    for _ in 0..count {
        let age = rng.random::<f64>() * p.period();
        let xi = match (model.utility, &exp) {
            (UtilityDistribution::Exponential, Some(d)) => d.sample(rng),
            _ => p.xi_mean(),
        };
        total += xi * (-p.mu() * age).exp();
    }
    total
}

/// Advances every source one period with its expected dynamics.
pub fn step_deterministic(states: &[f64], actions: &ActionVector, fleet: &FleetParams) -> Vec<f64> {
    states
        .iter()
        .zip(&actions.active)
        .zip(fleet.sources())
        .map(|((&x, &a), p)| {
            if a {
                active_step(p)
            } else {
                passive_step(x, p)
            }
        })
        .collect()
}

/// Advances every source one period with sampled arrivals.
pub fn step_stochastic<R: Rng + ?Sized>(
    states: &[f64],
    actions: &ActionVector,
    fleet: &FleetParams,
    model: &ArrivalModel,
    rng: &mut R,
) -> Vec<f64> {
    states
        .iter()
        .zip(&actions.active)
        .zip(fleet.sources())
        .map(|((&x, &a), p)| {
            let fresh = sample_net_utility(p, model, rng);
            if a {
                fresh
            } else {
                p.alpha() * x + fresh
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceRecord {
    /// State before the action.
    pub state: f64,
    pub index: f64,
    pub action: bool,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub sources: Vec<SourceRecord>,
    pub total_reward: f64,
    pub cost: f64,
    /// Round-robin position after this epoch's decision.
    pub cursor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub records: Vec<EpochRecord>,
}

impl Trace {
    /// Mean total reward over epochs `from..`.
    pub fn average_reward(&self, from: usize) -> f64 {
        let tail = &self.records[from.min(self.records.len())..];
        tail.iter().map(|r| r.total_reward).sum::<f64>() / tail.len().max(1) as f64
    }

    /// Action matrix: one row per epoch, one bit per source.
    pub fn actions(&self) -> Vec<Vec<bool>> {
        self.records
            .iter()
            .map(|r| r.sources.iter().map(|s| s.action).collect())
            .collect()
    }

    /// CSV with header `epoch,source,state,index,action,reward`, one line per
    /// epoch and source.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "source", "state", "index", "action", "reward"])?;
        for r in &self.records {
            for (i, s) in r.sources.iter().enumerate() {
                w.write_record([
                    r.epoch.to_string(),
                    i.to_string(),
                    s.state.to_string(),
                    s.index.to_string(),
                    u8::from(s.action).to_string(),
                    s.reward.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Exactly repeating action pattern found after warmup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub period: usize,
    /// Active source ids at each epoch of one period, starting at the first
    /// post-warmup epoch.
    pub pattern: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub crawl_count: u64,
    pub crawl_fraction: f64,
    /// Gap between consecutive crawls (in epochs) mapped to how often it occurred.
    #[serde(deserialize_with = "gap_keys")]
    pub interval_histogram: BTreeMap<u64, u64>,
}

/// JSON object keys are strings, and serde cannot coerce them to integers
/// once the summary is flattened into another struct.
fn gap_keys<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u64, u64>, D::Error> {
    BTreeMap::<String, u64>::deserialize(d)?
        .into_iter()
        .map(|(k, v)| k.parse().map(|k| (k, v)).map_err(serde::de::Error::custom))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub horizon: u64,
    pub warmup: u64,
    /// Mean total reward per epoch after warmup.
    pub average_reward: f64,
    /// Mean total reward per epoch over the whole run.
    pub average_reward_no_warmup: f64,
    /// Mean crawl cost per epoch after warmup.
    pub average_cost: f64,
    pub per_source: Vec<SourceSummary>,
    pub cycle: Option<Cycle>,
    /// Scheduled crawls dropped because the budget ran out.
    pub dropped_crawls: u64,
    /// Sources whose initial state lay outside `[u, u_star]`.
    pub transient_sources: Vec<usize>,
}

/// Smallest `p <= rows.len() / 4` with `rows[t] == rows[t + p]` throughout.
pub fn detect_cycle(rows: &[Vec<bool>]) -> Option<Cycle> {
    let len = rows.len();
    (1..=len / 4)
        .find(|&p| (0..len - p).all(|t| rows[t] == rows[t + p]))
        .map(|period| Cycle {
            period,
            pattern: rows[..period]
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter_map(|(i, &a)| a.then_some(i))
                        .collect()
                })
                .collect(),
        })
}

/// Steady-state average reward of repeating `cycle` forever, in closed form.
///
/// A source crawled `g` epochs after its previous crawl collects the lattice
/// state `(1 - alpha^g) u_star`.
pub fn periodic_pattern_reward(fleet: &FleetParams, cycle: &Cycle) -> f64 {
    let period = cycle.period as u64;
    let mut total = 0.0;
    for (id, p) in fleet.sources().iter().enumerate() {
        let crawls: Vec<u64> = cycle
            .pattern
            .iter()
            .enumerate()
            .filter(|(_, ids)| ids.contains(&id))
            .map(|(t, _)| t as u64)
            .collect();
        for (j, &t) in crawls.iter().enumerate() {
            let prev = if j == 0 {
                crawls[crawls.len() - 1]
            } else {
                crawls[j - 1]
            };
            let gap = (t + period - prev - 1) % period + 1;
            total += p.lattice_state(gap);
        }
    }
    total / period as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub horizon: u64,
    pub warmup: u64,
    pub seed: Option<u64>,
    /// Defaults to the post-crawl states `u_i`.
    pub initial_states: Option<Vec<f64>>,
    pub arrivals: ArrivalModel,
}

impl RunOptions {
    /// Deterministic run with warmup of a tenth of the horizon.
    pub fn deterministic(horizon: u64) -> Self {
        Self {
            mode: Mode::Deterministic,
            horizon,
            warmup: horizon / 10,
            seed: None,
            initial_states: None,
            arrivals: ArrivalModel::default(),
        }
    }

    pub fn stochastic(horizon: u64, seed: u64, arrivals: ArrivalModel) -> Self {
        Self {
            mode: Mode::Stochastic,
            seed: Some(seed),
            arrivals,
            ..Self::deterministic(horizon)
        }
    }
}

/// Simulates epochs `0..horizon`, returning the trace and its summary.
pub fn run(
    fleet: &FleetParams,
    spec: &PolicySpec,
    opts: &RunOptions,
) -> Result<(Trace, Summary), SimError> {
    if opts.horizon <= opts.warmup {
        return Err(SimError::Horizon {
            horizon: opts.horizon,
            warmup: opts.warmup,
        });
    }
    let mut rng = match (opts.mode, opts.seed) {
        (Mode::Stochastic, None) => return Err(SimError::MissingSeed),
        (_, seed) => ChaCha8Rng::seed_from_u64(seed.unwrap_or(0)),
    };
    let mut states = match &opts.initial_states {
        None => fleet.reset_states(),
        Some(x) if x.len() == fleet.len() && x.iter().all(|v| v.is_finite() && *v >= 0.0) => {
            x.clone()
        }
        Some(x) => {
            return Err(SimError::InitialStates {
                expected: fleet.len(),
                got: x.clone(),
            })
        }
    };
    let transient_sources: Vec<usize> = states
        .iter()
        .zip(fleet.sources())
        .enumerate()
        .filter(|(_, (&x, p))| !p.in_recurrent_range(x))
        .map(|(i, _)| i)
        .collect();

    let mut policy = Policy::new(spec.clone(), fleet)?;
    let mut trace = Trace {
        records: Vec::with_capacity(opts.horizon as usize),
    };
    let mut reward_all = 0.0;
    let mut reward_tail = 0.0;
    let mut cost_tail = 0.0;
    let mut dropped = 0u64;
    for epoch in 0..opts.horizon {
        let decision = policy.decide(epoch, &states, fleet)?;
        let sources: Vec<SourceRecord> = states
            .iter()
            .zip(&decision.indices)
            .zip(&decision.actions.active)
            .map(|((&state, &index), &action)| SourceRecord {
                state,
                index,
                action,
                reward: if action { state } else { 0.0 },
            })
            .collect();
        let total_reward: f64 = sources.iter().map(|s| s.reward).sum();
        let cost = decision.actions.cost(fleet);
        reward_all += total_reward;
        if epoch >= opts.warmup {
            reward_tail += total_reward;
            cost_tail += cost;
            dropped += decision.dropped as u64;
        }
        states = match opts.mode {
            Mode::Deterministic => step_deterministic(&states, &decision.actions, fleet),
            Mode::Stochastic => {
                step_stochastic(&states, &decision.actions, fleet, &opts.arrivals, &mut rng)
            }
        };
        trace.records.push(EpochRecord {
            epoch,
            sources,
            total_reward,
            cost,
            cursor: decision.cursor,
        });
    }

    let tail_len = (opts.horizon - opts.warmup) as f64;
    let actions = trace.actions();
    let tail = &actions[opts.warmup as usize..];
    let per_source = (0..fleet.len())
        .map(|i| {
            let crawl_epochs: Vec<u64> = tail
                .iter()
                .enumerate()
                .filter(|(_, row)| row[i])
                .map(|(t, _)| t as u64)
                .collect();
            let mut interval_histogram = BTreeMap::new();
            for w in crawl_epochs.windows(2) {
                *interval_histogram.entry(w[1] - w[0]).or_insert(0) += 1;
            }
            SourceSummary {
                crawl_count: crawl_epochs.len() as u64,
                crawl_fraction: crawl_epochs.len() as f64 / tail_len,
                interval_histogram,
            }
        })
        .collect();
    let summary = Summary {
        horizon: opts.horizon,
        warmup: opts.warmup,
        average_reward: reward_tail / tail_len,
        average_reward_no_warmup: reward_all / opts.horizon as f64,
        average_cost: cost_tail / tail_len,
        per_source,
        cycle: detect_cycle(tail),
        dropped_crawls: dropped,
        transient_sources,
    };
    Ok((trace, summary))
}
