//! The combined agent-based / particle-filter calibration loop.
//!
//! A run is described by a [`RunConfig`] (usually parsed from TOML) and
//! produces plain CSV / NDJSON artifacts plus a [`RunReport`]. Two modes are
//! supported: `static` filters a complete observation record once, while
//! `streaming` alternates ABM windows with filter updates and feeds the
//! posterior back into the ABM's rate distributions.

mod driver;
mod ingest;

pub use driver::{run, run_static, run_streaming, KdeRecord, RunReport, Seeds, Timings, WindowReport};
pub use ingest::{ingest_observations, ObservationFeed};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abm::RateDistribution;
use crate::error::{Error, Result};
use crate::network::{self, BterSpec, ContactNetwork};
use crate::smc::FilterConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Edge list on disk (with optional `.json` sidecar).
    pub path: Option<PathBuf>,
    /// Fully connected graph on this many nodes.
    pub complete: Option<usize>,
    pub bter: Option<BterSpec>,
}

impl NetworkConfig {
    pub fn complete(n: usize) -> Self {
        NetworkConfig { complete: Some(n), ..Default::default() }
    }

    pub fn bter(spec: BterSpec) -> Self {
        NetworkConfig { bter: Some(spec), ..Default::default() }
    }

    /// Builds (or loads) the network. Returns the generator seed, if any.
    pub fn build(&self) -> Result<(ContactNetwork, Option<u64>)> {
        match (&self.path, self.complete, &self.bter) {
            (Some(p), None, None) => Ok((network::load_edge_list(p)?, None)),
            (None, Some(n), None) => Ok((ContactNetwork::complete(n)?, None)),
            (None, None, Some(spec)) => Ok((network::generate_bter(spec)?, Some(spec.seed))),
            (None, None, None) => Err(Error::Config("[network] needs one of path, complete, bter".into())),
            _ => Err(Error::Config("[network] takes exactly one of path, complete, bter".into())),
        }
    }
}

/// A rate given either as a bare number or as a distribution table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    Fixed(f64),
    Distribution(RateDistribution),
}

impl RateSpec {
    pub fn distribution(&self) -> RateDistribution {
        match self {
            RateSpec::Fixed(v) => RateDistribution::point(*v),
            RateSpec::Distribution(d) => d.clone(),
        }
    }

    /// Representative constant rate: the point value, the lognormal median or
    /// the empirical mean.
    pub fn central(&self) -> f64 {
        match self.distribution() {
            RateDistribution::Point { value } => value,
            RateDistribution::LogNormal { log_mean, .. } => log_mean.exp(),
            RateDistribution::Empirical { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbmConfig {
    pub beta: RateSpec,
    pub gamma: RateSpec,
    pub initial_infected_fraction: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for AbmConfig {
    fn default() -> Self {
        AbmConfig {
            beta: RateSpec::Fixed(0.5),
            gamma: RateSpec::Fixed(0.1),
            initial_infected_fraction: 0.002,
            seed: 0,
            workers: 1,
        }
    }
}

impl AbmConfig {
    /// Number of agents infected on day 0 (at least one).
    pub fn initial_infected(&self, node_count: usize) -> usize {
        ((self.initial_infected_fraction * node_count as f64).round() as usize).clamp(1, node_count.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExchangeSchedule {
    pub window_days: usize,
    pub total_days: usize,
    /// Overrides `smc.interp_steps`.
    pub interp_steps: usize,
}

impl Default for ExchangeSchedule {
    fn default() -> Self {
        ExchangeSchedule { window_days: 7, total_days: 50, interp_steps: 1 }
    }
}

impl ExchangeSchedule {
    /// `(start, end)` day pairs; the last window may be short.
    pub fn windows(&self) -> Vec<(usize, usize)> {
        (0..self.total_days)
            .step_by(self.window_days.max(1))
            .map(|start| (start, (start + self.window_days).min(self.total_days)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    #[default]
    Static,
    Streaming,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Static => "static",
            RunMode::Streaming => "streaming",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub output_dir: PathBuf,
    pub mode: RunMode,
    /// Observation file, or `-` for standard input. Without it the ABM
    /// generates the observations.
    pub observations: Option<String>,
    /// Sub-step days (inclusive) whose infected-proportion densities are
    /// written as `kde_<day>.csv`.
    pub kde_days: [f64; 2],
    pub kde_grid: usize,
    /// Streaming mode only: hand posterior rate summaries back to the ABM.
    pub feedback: bool,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            output_dir: PathBuf::from("out"),
            mode: RunMode::Static,
            observations: None,
            kde_days: [14.0, 21.0],
            kde_grid: 256,
            feedback: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub abm: AbmConfig,
    pub smc: FilterConfig,
    pub schedule: ExchangeSchedule,
    pub io: IoConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().replace('\n', " ")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    /// Filter configuration with the schedule's sub-step count applied.
    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig { interp_steps: self.schedule.interp_steps, ..self.smc.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.filter_config().validate()?;
        if self.schedule.window_days == 0 {
            return Err(Error::Config("schedule.window_days must be >= 1".into()));
        }
        if self.schedule.total_days == 0 {
            return Err(Error::Config("schedule.total_days must be >= 1".into()));
        }
        if !(self.abm.initial_infected_fraction > 0.0 && self.abm.initial_infected_fraction <= 1.0) {
            return Err(Error::Config("abm.initial_infected_fraction must lie in (0, 1]".into()));
        }
        if self.abm.workers == 0 {
            return Err(Error::Config("abm.workers must be >= 1".into()));
        }
        for (name, rate) in [("beta", &self.abm.beta), ("gamma", &self.abm.gamma)] {
            rate.distribution()
                .validate()
                .map_err(|e| Error::Config(format!("abm.{name}: {e}")))?;
        }
        let [lo, hi] = self.io.kde_days;
        if !(lo <= hi) || self.io.kde_grid < 2 {
            return Err(Error::Config("io.kde_days must be ordered and io.kde_grid >= 2".into()));
        }
        Ok(())
    }
}
