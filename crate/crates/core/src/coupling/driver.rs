use std::collections::hash_map::DefaultHasher;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ObservationFeed, RunConfig, RunMode};
use crate::abm::{run_window, seed_infections, write_daily_counts, DailyCounts, HealthLedger, RateDistribution};
use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use rand::Rng;
use crate::network::{ContactNetwork, NetworkStats};
use crate::ode::{solve_sir, DEFAULT_DT};
use crate::smc::{write_filter_csv, write_params_ndjson, Filter, Observation};
use crate::stats::{kde, summarize, DensityEstimate, ParameterSummary};

/// Relative peak height below which a KDE bump is not listed as a maximum.
const PEAK_FLOOR: f64 = 0.01;
/// Probability mass a KDE basin needs to count as a mode.
const MODE_MASS: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub network: Option<u64>,
    pub abm: u64,
    pub smc: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: usize,
    pub start_day: u32,
    pub end_day: u32,
    pub summary: ParameterSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeRecord {
    pub day: f64,
    pub file: String,
    pub bandwidth: f64,
    pub local_maxima: usize,
    pub modes: usize,
}

/// Wall-clock phases of a run. Kept out of `report.json` so the report is
/// reproducible byte for byte.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timings {
    pub network: Duration,
    pub abm: Duration,
    pub filter: Duration,
    pub total: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub mode: RunMode,
    pub seeds: Seeds,
    pub network: Option<NetworkStats>,
    pub initial_infected_proportion: f64,
    pub observations: usize,
    pub curve_rows: usize,
    pub windows: Vec<WindowReport>,
    pub final_summary: ParameterSummary,
    pub kde: Vec<KdeRecord>,
    pub outputs: Vec<String>,
    #[serde(skip)]
    pub timings: Timings,
}

pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    match cfg.io.mode {
        RunMode::Static => run_static(cfg),
        RunMode::Streaming => run_streaming(cfg),
    }
}

/// Identifier derived from everything that determines the results; output
/// location and observation transport are excluded.
fn run_id(cfg: &RunConfig) -> String {
    let key = serde_json::json!({
        "mode": cfg.io.mode,
        "network": cfg.network,
        "abm": cfg.abm,
        "smc": cfg.filter_config(),
        "schedule": cfg.schedule,
    });
    let mut h = DefaultHasher::new();
    key.to_string().hash(&mut h);
    format!("{}-{:016x}", cfg.io.mode, h.finish())
}

struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs { dir: dir.to_path_buf(), names: Vec::new() })
    }

    fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
        self.names.push(name.to_string());
        Ok(())
    }
}

/// The filter plus the bookkeeping shared by both run modes.
struct Session {
    filter: Filter,
    kde_days: [f64; 2],
    kde_grid: usize,
    densities: Vec<(f64, DensityEstimate)>,
    windows: Vec<WindowReport>,
    window_start: u32,
    observations: usize,
    elapsed: Duration,
}

impl Session {
    fn new(cfg: &RunConfig, i0: f64) -> Result<Self> {
        Ok(Session {
            filter: Filter::new(cfg.filter_config(), i0, 0)?,
            kde_days: cfg.io.kde_days,
            kde_grid: cfg.io.kde_grid,
            densities: Vec::new(),
            windows: Vec::new(),
            window_start: 0,
            observations: 0,
            elapsed: Duration::ZERO,
        })
    }

    fn assimilate(&mut self, obs: &Observation) -> Result<()> {
        let t = Instant::now();
        let [lo, hi] = self.kde_days;
        let grid = self.kde_grid;
        let densities = &mut self.densities;
        let mut failure = None;
        self.filter.assimilate_with(obs, |s, e| {
            if s.day >= lo && s.day <= hi && failure.is_none() {
                let xs: Vec<f64> = e.particles.iter().map(|p| p.i).collect();
                match kde(&xs, &e.weights, grid) {
                    Ok(d) => densities.push((s.day, d)),
                    Err(err) => failure = Some(err),
                }
            }
        })?;
        self.observations += 1;
        self.elapsed += t.elapsed();
        failure.map_or(Ok(()), Err)
    }

    fn close_window(&mut self, end_day: u32) -> Result<ParameterSummary> {
        let summary = summarize(&self.filter.parameter_samples())?;
        self.windows.push(WindowReport {
            window: self.windows.len(),
            start_day: self.window_start,
            end_day,
            summary,
        });
        self.window_start = end_day;
        Ok(summary)
    }
}

fn seeded_ledger(net: &ContactNetwork, cfg: &RunConfig) -> Result<HealthLedger> {
    let mut ledger = HealthLedger::all_susceptible(net.node_count());
    seed_infections(&mut ledger, cfg.abm.initial_infected(net.node_count()), cfg.abm.seed)?;
    Ok(ledger)
}

fn to_observations(rows: &[DailyCounts]) -> Vec<Observation> {
    rows.iter()
        .map(|c| Observation { day: c.day, infected_proportion: c.infected_proportion() })
        .collect()
}

struct Prepared {
    net: Option<(ContactNetwork, Option<u64>)>,
    elapsed: Duration,
}

/// Builds the network when the run needs the ABM.
fn prepare(cfg: &RunConfig, needs_abm: bool) -> Result<Prepared> {
    cfg.validate()?;
    let t = Instant::now();
    let net = if needs_abm {
        let (net, seed) = cfg.network.build()?;
        Some((net.partition(cfg.abm.workers)?, seed))
    } else {
        None
    };
    Ok(Prepared { net, elapsed: t.elapsed() })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cfg: &RunConfig,
    session: Session,
    net: Option<(&ContactNetwork, Option<u64>)>,
    abm_rows: &[DailyCounts],
    i0: f64,
    mut timings: Timings,
    started: Instant,
) -> Result<RunReport> {
    let mut out = Outputs::create(&cfg.io.output_dir)?;
    let final_summary = summarize(&session.filter.parameter_samples())?;
    if !abm_rows.is_empty() {
        out.write("abm_counts.csv", |w| write_daily_counts(abm_rows, w))?;
    }
    let summaries = session.filter.summaries().to_vec();
    out.write("curves.csv", |w| write_filter_csv(&summaries, w))?;
    let samples = session.filter.parameter_samples();
    out.write("params.ndjson", |w| write_params_ndjson(&samples, w))?;

    let mut kde_records = Vec::new();
    for (day, d) in &session.densities {
        let name = format!("kde_{day}.csv");
        out.write(&name, |w| d.write_csv(w))?;
        kde_records.push(KdeRecord {
            day: *day,
            file: name,
            bandwidth: d.bandwidth,
            local_maxima: d.local_maxima(PEAK_FLOOR).len(),
            modes: d.modes(MODE_MASS).len(),
        });
    }

    let days = session.filter.day().max(1) as f64;
    let curve = solve_sir(cfg.abm.beta.central(), cfg.abm.gamma.central(), (1.0 - i0, i0, 0.0), days, DEFAULT_DT, 1.0)?;
    out.write("ode_baseline.csv", |w| curve.write_csv(w))?;

    let mut outputs = out.names.clone();
    outputs.push("report.json".to_string());
    timings.filter = session.elapsed;
    timings.total = started.elapsed();
    let report = RunReport {
        run_id: run_id(cfg),
        mode: cfg.io.mode,
        seeds: Seeds {
            network: net.and_then(|(_, s)| s),
            abm: cfg.abm.seed,
            smc: cfg.smc.seed,
        },
        network: net.map(|(n, _)| n.stats()),
        initial_infected_proportion: i0,
        observations: session.observations,
        curve_rows: summaries.len(),
        windows: session.windows,
        final_summary,
        kde: kde_records,
        outputs,
        timings,
    };
    out.write("report.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)
    })?;
    Ok(report)
}

/// Filters one complete observation record: the configured observation
/// source, or a fresh ABM run with the configured rates.
pub fn run_static(cfg: &RunConfig) -> Result<RunReport> {
    let started = Instant::now();
    let prep = prepare(cfg, cfg.io.observations.is_none())?;
    let mut timings = Timings { network: prep.elapsed, ..Default::default() };
    let window_days = cfg.schedule.window_days as u32;

    let (session, abm_rows, i0) = match (&cfg.io.observations, &prep.net) {
        (Some(source), _) => {
            let i0 = cfg.abm.initial_infected_fraction;
            let mut session = Session::new(cfg, i0)?;
            for obs in ObservationFeed::open(source)? {
                let obs = obs?;
                session.assimilate(&obs)?;
                while obs.day >= session.window_start + window_days {
                    let end = session.window_start + window_days;
                    session.close_window(end)?;
                }
            }
            if session.observations == 0 {
                return Err(Error::Parse { path: source.clone(), line: 0, msg: "no observations".into() });
            }
            (session, Vec::new(), i0)
        }
        (None, Some((net, _))) => {
            let t = Instant::now();
            let mut ledger = seeded_ledger(net, cfg)?;
            let i0 = ledger.counts().1 as f64 / net.node_count() as f64;
            let (beta, gamma) = (cfg.abm.beta.distribution(), cfg.abm.gamma.distribution());
            let rows = run_window(net, &mut ledger, &beta, &gamma, cfg.schedule.total_days, cfg.abm.seed)?;
            timings.abm = t.elapsed();
            let mut session = Session::new(cfg, i0)?;
            for obs in to_observations(&rows) {
                session.assimilate(&obs)?;
                if obs.day >= session.window_start + window_days {
                    session.close_window(obs.day)?;
                }
            }
            (session, rows, i0)
        }
        (None, None) => unreachable!("network is built whenever the ABM runs"),
    };
    let mut session = session;
    if session.filter.day() > session.window_start {
        let end = session.filter.day();
        session.close_window(end)?;
    }
    let net = prep.net.as_ref().map(|(n, s)| (n, *s));
    finish(cfg, session, net, &abm_rows, i0, timings, started)
}

/// Alternates ABM windows with filter updates. The first window runs the ABM
/// at one draw of each rate from the filter's log-uniform prior; later
/// windows draw per-event rates from lognormals fitted to the posterior.
/// With feedback disabled the configured rates are kept throughout.
pub fn run_streaming(cfg: &RunConfig) -> Result<RunReport> {
    let started = Instant::now();
    let prep = prepare(cfg, true)?;
    let mut timings = Timings { network: prep.elapsed, ..Default::default() };
    let (net, net_seed) = prep.net.as_ref().expect("streaming always builds a network");

    let mut ledger = seeded_ledger(net, cfg)?;
    let i0 = match cfg.io.observations {
        Some(_) => cfg.abm.initial_infected_fraction,
        None => ledger.counts().1 as f64 / net.node_count() as f64,
    };
    let mut session = Session::new(cfg, i0)?;
    let mut feed = cfg.io.observations.as_deref().map(ObservationFeed::open).transpose()?;
    let mut pending: Option<Observation> = None;

    let (mut beta, mut gamma) = if cfg.io.feedback {
        let fc = cfg.filter_config();
        let mut rng = rng::stream(cfg.abm.seed, Domain::Driver, &[]);
        let [g_lo, g_hi] = fc.gamma_bounds();
        let mut draw = |lo: f64, hi: f64| if lo == hi { lo.exp() } else { rng.random_range(lo..hi).exp() };
        (
            RateDistribution::point(draw(fc.prior_log_low, fc.prior_log_high)),
            RateDistribution::point(draw(g_lo, g_hi)),
        )
    } else {
        (cfg.abm.beta.distribution(), cfg.abm.gamma.distribution())
    };

    let mut abm_rows = Vec::new();
    for (w, (start, end)) in cfg.schedule.windows().into_iter().enumerate() {
        let mut window = || -> Result<()> {
            let t = Instant::now();
            let rows = run_window(net, &mut ledger, &beta, &gamma, end - start, cfg.abm.seed)?;
            timings.abm += t.elapsed();
            let observations = match feed.as_mut() {
                None => to_observations(&rows),
                Some(feed) => {
                    let mut batch = Vec::new();
                    loop {
                        let next = match pending.take() {
                            Some(o) => Some(o),
                            None => feed.next().transpose()?,
                        };
                        match next {
                            Some(o) if o.day as usize <= end => batch.push(o),
                            Some(o) => {
                                pending = Some(o);
                                break;
                            }
                            None => break,
                        }
                    }
                    batch
                }
            };
            abm_rows.extend(rows);
            for obs in &observations {
                session.assimilate(obs)?;
            }
            let summary = session.close_window(end as u32)?;
            if cfg.io.feedback {
                beta = summary.beta_distribution();
                gamma = summary.gamma_distribution();
            }
            Ok(())
        };
        window().map_err(|e| Error::Window { window: w, source: Box::new(e) })?;
    }
    finish(cfg, session, Some((net, *net_seed)), &abm_rows, i0, timings, started)
}
