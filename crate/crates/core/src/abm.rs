//! Networked SIR agent simulation.
//!
//! One step visits every infected agent of every partition. Susceptible
//! neighbors in the same partition are infected with probability
//! `r_beta / avgD(G)`, where `r_beta` is a fresh draw per contact; the agent
//! then recovers with probability `r_gamma`, a fresh draw per agent. Agents
//! infected during a step neither transmit nor recover until the next step.
//! Partitions run concurrently on their own random streams and the ledger is
//! rebuilt at the step barrier.

use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ContactNetwork;
use crate::rng::{self, Domain, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HealthState {
    Susceptible,
    Infected,
    Recovered,
}

/// Per-agent health states plus the three compartment index sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HealthLedger {
    states: Vec<HealthState>,
    susceptible: Vec<u32>,
    infected: Vec<u32>,
    recovered: Vec<u32>,
    day: u32,
}

impl HealthLedger {
    pub fn all_susceptible(node_count: usize) -> Self {
        HealthLedger {
            states: vec![HealthState::Susceptible; node_count],
            susceptible: (0..node_count as u32).collect(),
            infected: Vec::new(),
            recovered: Vec::new(),
            day: 0,
        }
    }

    pub fn from_states(states: Vec<HealthState>, day: u32) -> Self {
        let mut ledger = HealthLedger {
            states,
            susceptible: Vec::new(),
            infected: Vec::new(),
            recovered: Vec::new(),
            day,
        };
        ledger.rebuild_sets();
        ledger
    }

    fn rebuild_sets(&mut self) {
        self.susceptible.clear();
        self.infected.clear();
        self.recovered.clear();
        for (v, s) in self.states.iter().enumerate() {
            match s {
                HealthState::Susceptible => self.susceptible.push(v as u32),
                HealthState::Infected => self.infected.push(v as u32),
                HealthState::Recovered => self.recovered.push(v as u32),
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.states.len()
    }

    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn state(&self, v: usize) -> HealthState {
        self.states[v]
    }

    pub fn states(&self) -> &[HealthState] {
        &self.states
    }

    /// Sorted ids of susceptible agents.
    pub fn susceptible(&self) -> &[u32] {
        &self.susceptible
    }

    pub fn infected(&self) -> &[u32] {
        &self.infected
    }

    pub fn recovered(&self) -> &[u32] {
        &self.recovered
    }

    /// `(s, i, r)` counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.susceptible.len(), self.infected.len(), self.recovered.len())
    }

    /// Checks that the sets partition the ids and agree with the states.
    pub fn check_invariants(&self) -> Result<()> {
        let (s, i, r) = self.counts();
        if s + i + r != self.node_count() {
            return Err(Error::invalid(format!(
                "ledger sets cover {} of {} agents",
                s + i + r,
                self.node_count()
            )));
        }
        let sets = [
            (&self.susceptible, HealthState::Susceptible),
            (&self.infected, HealthState::Infected),
            (&self.recovered, HealthState::Recovered),
        ];
        for (set, expected) in sets {
            if let Some(&v) = set.iter().find(|&&v| self.states[v as usize] != expected) {
                return Err(Error::invalid(format!("agent {v} listed as {expected:?}")));
            }
        }
        Ok(())
    }
}

/// Distribution of a per-event rate draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RateDistribution {
    Point { value: f64 },
    LogNormal { log_mean: f64, log_sd: f64 },
    Empirical { samples: Vec<f64> },
}

impl RateDistribution {
    pub fn point(value: f64) -> Self {
        RateDistribution::Point { value }
    }

    pub fn lognormal(log_mean: f64, log_sd: f64) -> Self {
        RateDistribution::LogNormal { log_mean, log_sd }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RateDistribution::Point { value } if !(value.is_finite() && *value >= 0.0) => {
                Err(Error::invalid(format!("point rate {value} must be finite and >= 0")))
            }
            RateDistribution::LogNormal { log_mean, log_sd }
                if !(log_mean.is_finite() && log_sd.is_finite() && *log_sd >= 0.0) =>
            {
                Err(Error::invalid("lognormal rate needs finite log_mean and log_sd >= 0"))
            }
            RateDistribution::Empirical { samples } if samples.is_empty() => {
                Err(Error::invalid("empirical rate distribution has no samples"))
            }
            RateDistribution::Empirical { samples }
                if samples.iter().any(|x| !(x.is_finite() && *x > 0.0)) =>
            {
                Err(Error::invalid("empirical rate samples must be finite and > 0"))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RateDistribution::Point { value } => *value,
            RateDistribution::LogNormal { log_mean, log_sd } => {
                let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                (log_mean + log_sd * z).exp()
            }
            RateDistribution::Empirical { samples } => samples[rng.random_range(0..samples.len())],
        }
    }
}

/// Compartment counts after one simulated day.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyCounts {
    pub day: u32,
    pub s_count: usize,
    pub i_count: usize,
    pub r_count: usize,
    pub new_infections: usize,
    pub new_recoveries: usize,
}

impl DailyCounts {
    pub fn population(&self) -> usize {
        self.s_count + self.i_count + self.r_count
    }

    pub fn infected_proportion(&self) -> f64 {
        self.i_count as f64 / self.population() as f64
    }
}

/// Everything that happened during one step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepEvents {
    /// `(source, target)` per transmission.
    pub infections: Vec<(u32, u32)>,
    pub recoveries: Vec<u32>,
}

/// Infects `n_i` agents chosen uniformly without replacement.
pub fn seed_infections(ledger: &mut HealthLedger, n_i: usize, seed: u64) -> Result<()> {
    let n = ledger.node_count();
    if n_i == 0 || n_i > n {
        return Err(Error::invalid(format!("initial infections {n_i} outside 1..={n}")));
    }
    if ledger.infected.len() + ledger.recovered.len() > 0 {
        return Err(Error::invalid("seeding requires an all-susceptible ledger"));
    }
    let mut rng = rng::stream(seed, Domain::Seeding, &[]);
    for v in index::sample(&mut rng, n, n_i) {
        ledger.states[v] = HealthState::Infected;
    }
    ledger.rebuild_sets();
    Ok(())
}

#[inline]
fn unit_prob(p: f64) -> f64 {
    if p.is_nan() {
        0.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_partition(
    net: &ContactNetwork,
    range: std::ops::Range<usize>,
    states: &mut [HealthState],
    infected: &[u32],
    beta: &RateDistribution,
    gamma: &RateDistribution,
    avg_degree: f64,
    mut rng: Stream,
) -> StepEvents {
    let mut events = StepEvents::default();
    let (lo, hi) = (range.start as u32, range.end as u32);
    for &v in infected {
        let nbrs = net.neighbors(v as usize);
        let a = nbrs.partition_point(|&u| u < lo);
        let b = nbrs.partition_point(|&u| u < hi);
        for &u in &nbrs[a..b] {
            let slot = &mut states[(u - lo) as usize];
            if *slot == HealthState::Susceptible {
                let r1: f64 = rng.random();
                let r_beta = beta.sample(&mut rng);
                if r1 < unit_prob(r_beta / avg_degree) {
                    *slot = HealthState::Infected;
                    events.infections.push((v, u));
                }
            }
        }
        let r2: f64 = rng.random();
        let r_gamma = gamma.sample(&mut rng);
        if r2 < unit_prob(r_gamma) {
            states[(v - lo) as usize] = HealthState::Recovered;
            events.recoveries.push(v);
        }
    }
    events
}

/// Advances the ledger one day and reports the events of the step.
pub fn abm_step_detailed(
    net: &ContactNetwork,
    ledger: &mut HealthLedger,
    beta: &RateDistribution,
    gamma: &RateDistribution,
    seed: u64,
) -> Result<(DailyCounts, StepEvents)> {
    if ledger.node_count() != net.node_count() {
        return Err(Error::invalid(format!(
            "ledger has {} agents, network {} nodes",
            ledger.node_count(),
            net.node_count()
        )));
    }
    beta.validate()?;
    gamma.validate()?;
    let avg_degree = net.avg_degree();
    let day = ledger.day;
    let workers = net.workers();

    let mut chunks: Vec<(usize, &mut [HealthState])> = Vec::with_capacity(workers);
    let mut rest: &mut [HealthState] = &mut ledger.states;
    for p in 0..workers {
        let len = net.partition_range(p).len();
        let (head, tail) = rest.split_at_mut(len);
        chunks.push((p, head));
        rest = tail;
    }
    let infected = &ledger.infected;

    let per_partition: Vec<StepEvents> = chunks
        .into_par_iter()
        .map(|(p, states)| {
            let range = net.partition_range(p);
            let a = infected.partition_point(|&v| (v as usize) < range.start);
            let b = infected.partition_point(|&v| (v as usize) < range.end);
            let rng = rng::stream(seed, Domain::Abm, &[u64::from(day), p as u64]);
            run_partition(net, range, states, &infected[a..b], beta, gamma, avg_degree, rng)
        })
        .collect();

    let mut events = StepEvents::default();
    for e in per_partition {
        events.infections.extend(e.infections);
        events.recoveries.extend(e.recoveries);
    }
    ledger.rebuild_sets();
    ledger.day += 1;
    let (s, i, r) = ledger.counts();
    let counts = DailyCounts {
        day: ledger.day,
        s_count: s,
        i_count: i,
        r_count: r,
        new_infections: events.infections.len(),
        new_recoveries: events.recoveries.len(),
    };
    Ok((counts, events))
}

pub fn abm_step(
    net: &ContactNetwork,
    ledger: &mut HealthLedger,
    beta: &RateDistribution,
    gamma: &RateDistribution,
    seed: u64,
) -> Result<DailyCounts> {
    abm_step_detailed(net, ledger, beta, gamma, seed).map(|(c, _)| c)
}

/// Runs `days` synchronized steps.
pub fn run_window(
    net: &ContactNetwork,
    ledger: &mut HealthLedger,
    beta: &RateDistribution,
    gamma: &RateDistribution,
    days: usize,
    seed: u64,
) -> Result<Vec<DailyCounts>> {
    if days == 0 {
        return Err(Error::invalid("run_window needs days >= 1"));
    }
    (0..days)
        .map(|_| abm_step(net, ledger, beta, gamma, seed))
        .collect()
}

pub const DAILY_COUNTS_HEADER: &str = "day,s,i,r,new_i,new_r";

pub fn write_daily_counts<W: Write>(rows: &[DailyCounts], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{DAILY_COUNTS_HEADER}")?;
    for c in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.day, c.s_count, c.i_count, c.r_count, c.new_infections, c.new_recoveries
        )?;
    }
    Ok(())
}
