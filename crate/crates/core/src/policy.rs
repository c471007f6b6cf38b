//! Per-epoch crawl decisions under the budget `sum_i C_i v_i <= M`.
//!
//! Every policy ranks sources somehow and then fills the budget greedily in
//! rank order, skipping sources whose cost no longer fits. Ties in the ranking
//! go to the lower source id.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FleetParams;
use crate::whittle::whittle_index;

/// Relative slack on the budget comparison.
const BUDGET_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("static schedule has {got} entries but the fleet has {expected} sources")]
    ScheduleLength { expected: usize, got: usize },
    #[error("static schedule for source {source_id} has period 0; periods must be at least 1")]
    ZeroPeriod { source_id: usize },
    #[error("state vector has {got} entries but the fleet has {expected} sources")]
    StateLength { expected: usize, got: usize },
}

/// Crawl every `period` epochs, first at epoch `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticEntry {
    pub period: u64,
    #[serde(default)]
    pub offset: u64,
}

impl StaticEntry {
    pub fn fires_at(&self, epoch: u64) -> bool {
        epoch % self.period == self.offset % self.period
    }
}

/// Which policy to run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", try_from = "RawPolicySpec")]
pub enum PolicySpec {
    /// Highest Whittle index first.
    Whittle,
    /// Highest current state first.
    GreedyState,
    /// Cycle through sources in id order.
    RoundRobin,
    /// Fixed periodic schedule; `None` entries are never crawled.
    Static { schedule: Vec<Option<StaticEntry>> },
}

#[derive(Deserialize)]
#[serde(rename_all = "kebab-case")]
enum PolicyKind {
    Whittle,
    GreedyState,
    RoundRobin,
    Static,
}

/// Wire form of [`PolicySpec`]; unit variants of an internally tagged enum
/// would otherwise accept unknown fields.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicySpec {
    kind: PolicyKind,
    schedule: Option<Vec<Option<StaticEntry>>>,
}

impl TryFrom<RawPolicySpec> for PolicySpec {
    type Error = String;

    fn try_from(raw: RawPolicySpec) -> Result<Self, Self::Error> {
        match (raw.kind, raw.schedule) {
            (PolicyKind::Static, Some(schedule)) => Ok(PolicySpec::Static { schedule }),
            (PolicyKind::Static, None) => Err("static policy needs a `schedule`".into()),
            (_, Some(_)) => Err("`schedule` is only allowed for the static policy".into()),
            (PolicyKind::Whittle, None) => Ok(PolicySpec::Whittle),
            (PolicyKind::GreedyState, None) => Ok(PolicySpec::GreedyState),
            (PolicyKind::RoundRobin, None) => Ok(PolicySpec::RoundRobin),
        }
    }
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Whittle => "whittle",
            PolicySpec::GreedyState => "greedy-state",
            PolicySpec::RoundRobin => "round-robin",
            PolicySpec::Static { .. } => "static",
        }
    }
}

/// One activation bit per source.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionVector {
    pub active: Vec<bool>,
}

impl ActionVector {
    pub fn idle(n: usize) -> Self {
        Self {
            active: vec![false; n],
        }
    }

    pub fn active_ids(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn cost(&self, fleet: &FleetParams) -> f64 {
        self.active
            .iter()
            .zip(fleet.sources())
            .filter(|(a, _)| **a)
            .map(|(_, p)| p.cost())
            .sum()
    }
}

fn fits(spent: f64, cost: f64, budget: f64) -> bool {
    spent + cost <= budget * (1.0 + BUDGET_SLACK)
}

/// Activates sources in `ranking` order while their cost fits the budget.
pub fn fill_budget(ranking: impl IntoIterator<Item = usize>, fleet: &FleetParams) -> ActionVector {
    let mut actions = ActionVector::idle(fleet.len());
    let mut spent = 0.0;
    for id in ranking {
        let cost = fleet.sources()[id].cost();
        if fits(spent, cost, fleet.budget()) {
            actions.active[id] = true;
            spent += cost;
        }
    }
    actions
}

/// Source ids sorted by decreasing score, ties by lower id.
fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids
}

fn check_states(states: &[f64], fleet: &FleetParams) -> Result<(), PolicyError> {
    if states.len() == fleet.len() {
        Ok(())
    } else {
        Err(PolicyError::StateLength {
            expected: fleet.len(),
            got: states.len(),
        })
    }
}

/// Whittle index of every source at its current state.
pub fn indices(states: &[f64], fleet: &FleetParams) -> Vec<f64> {
    states
        .iter()
        .zip(fleet.sources())
        .map(|(&x, p)| whittle_index(x, p))
        .collect()
}

/// Crawl the sources with the largest Whittle indices that fit the budget.
pub fn select_whittle(states: &[f64], fleet: &FleetParams) -> Result<ActionVector, PolicyError> {
    check_states(states, fleet)?;
    Ok(fill_budget(rank_descending(&indices(states, fleet)), fleet))
}

/// Crawl the sources holding the most uncollected utility that fit the budget.
pub fn select_greedy_state(
    states: &[f64],
    fleet: &FleetParams,
) -> Result<ActionVector, PolicyError> {
    check_states(states, fleet)?;
    Ok(fill_budget(rank_descending(states), fleet))
}

/// Outcome of a static schedule at one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticSelection {
    pub actions: ActionVector,
    /// Scheduled sources dropped because the budget ran out.
    pub dropped: usize,
}

pub fn validate_schedule(
    schedule: &[Option<StaticEntry>],
    fleet: &FleetParams,
) -> Result<(), PolicyError> {
    if schedule.len() != fleet.len() {
        return Err(PolicyError::ScheduleLength {
            expected: fleet.len(),
            got: schedule.len(),
        });
    }
    match schedule
        .iter()
        .position(|e| matches!(e, Some(StaticEntry { period: 0, .. })))
    {
        Some(source_id) => Err(PolicyError::ZeroPeriod { source_id }),
        None => Ok(()),
    }
}

/// Sources whose schedule fires at `epoch`, clipped to the budget in id order.
pub fn select_static(
    epoch: u64,
    fleet: &FleetParams,
    schedule: &[Option<StaticEntry>],
) -> Result<StaticSelection, PolicyError> {
    validate_schedule(schedule, fleet)?;
    let due: Vec<usize> = schedule
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.filter(|e| e.fires_at(epoch)).map(|_| i))
        .collect();
    let actions = fill_budget(due.iter().copied(), fleet);
    let dropped = due.len() - actions.count();
    Ok(StaticSelection { actions, dropped })
}

/// Round-robin over source ids, resuming after the last source crawled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundRobin {
    pub cursor: usize,
}

impl RoundRobin {
    pub fn select(&mut self, fleet: &FleetParams) -> ActionVector {
        let n = fleet.len();
        let mut actions = ActionVector::idle(n);
        let mut spent = 0.0;
        let mut pos = self.cursor % n;
        for _ in 0..n {
            let cost = fleet.sources()[pos].cost();
            if fits(spent, cost, fleet.budget()) {
                actions.active[pos] = true;
                spent += cost;
            } else if spent > 0.0 {
                break;
            }
            // A source that can never fit on its own is skipped.
            pos = (pos + 1) % n;
        }
        self.cursor = pos;
        actions
    }
}

/// Actions chosen at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub actions: ActionVector,
    /// Whittle index of each source, whichever policy made the decision.
    pub indices: Vec<f64>,
    /// Scheduled crawls dropped for lack of budget (static policies only).
    pub dropped: usize,
    /// Round-robin position after this decision.
    pub cursor: Option<usize>,
}

/// A policy together with its mutable state, ready to run over epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    spec: PolicySpec,
    round_robin: RoundRobin,
}

impl Policy {
    pub fn new(spec: PolicySpec, fleet: &FleetParams) -> Result<Self, PolicyError> {
        if let PolicySpec::Static { schedule } = &spec {
            validate_schedule(schedule, fleet)?;
        }
        Ok(Self {
            spec,
            round_robin: RoundRobin::default(),
        })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn decide(
        &mut self,
        epoch: u64,
        states: &[f64],
        fleet: &FleetParams,
    ) -> Result<Decision, PolicyError> {
        check_states(states, fleet)?;
        let idx = indices(states, fleet);
        let mut dropped = 0;
        let mut cursor = None;
        let actions = match &self.spec {
            PolicySpec::Whittle => fill_budget(rank_descending(&idx), fleet),
            PolicySpec::GreedyState => fill_budget(rank_descending(states), fleet),
            PolicySpec::RoundRobin => {
                let a = self.round_robin.select(fleet);
                cursor = Some(self.round_robin.cursor);
                a
            }
            PolicySpec::Static { schedule } => {
                let sel = select_static(epoch, fleet, schedule)?;
                dropped = sel.dropped;
                sel.actions
            }
        };
        Ok(Decision {
            actions,
            indices: idx,
            dropped,
            cursor,
        })
    }
}
