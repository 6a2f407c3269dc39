use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{log_weight_gaussian, propagate};
use super::resample::{ess, resample};
use super::{init_ensemble, Ensemble, FilterConfig, Observation, Particle, WeightUpdate};
use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::stats::{weighted_quantiles, ParameterSample};

pub const FILTER_CSV_HEADER: &str = "step,day,mean_s,mean_i,mean_r,q05_i,q95_i,\
mean_beta,q05_beta,q95_beta,mean_gamma,q05_gamma,q95_gamma,ess,resampled";

/// Weighted ensemble summary after one filter step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub day: f64,
    pub mean_s: f64,
    pub mean_i: f64,
    pub mean_r: f64,
    pub q05_i: f64,
    pub q95_i: f64,
    pub mean_beta: f64,
    pub q05_beta: f64,
    pub q95_beta: f64,
    pub mean_gamma: f64,
    pub q05_gamma: f64,
    pub q95_gamma: f64,
    pub ess: f64,
    pub resampled: bool,
}

impl StepSummary {
    fn of(e: &Ensemble, day: f64, ess: f64, resampled: bool) -> Result<Self> {
        let w = &e.weights;
        let mean = |f: &dyn Fn(&Particle) -> f64| -> f64 {
            e.particles.iter().zip(w).map(|(p, wk)| wk * f(p)).sum()
        };
        let column = |f: &dyn Fn(&Particle) -> f64| -> Vec<f64> { e.particles.iter().map(f).collect() };
        let qi = weighted_quantiles(&column(&|p| p.i), w, &[0.05, 0.95])?;
        // exp is monotone, so quantiles transfer from log space.
        let qb = weighted_quantiles(&column(&|p| p.log_beta), w, &[0.05, 0.95])?;
        let qg = weighted_quantiles(&column(&|p| p.log_gamma), w, &[0.05, 0.95])?;
        Ok(StepSummary {
            step: e.step,
            day,
            mean_s: mean(&|p| p.s),
            mean_i: mean(&|p| p.i),
            mean_r: mean(&|p| p.r),
            q05_i: qi[0],
            q95_i: qi[1],
            mean_beta: mean(&|p| p.beta()),
            q05_beta: qb[0].exp(),
            q95_beta: qb[1].exp(),
            mean_gamma: mean(&|p| p.gamma()),
            q05_gamma: qg[0].exp(),
            q95_gamma: qg[1].exp(),
            ess,
            resampled,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    pub summaries: Vec<StepSummary>,
    pub final_samples: Vec<ParameterSample>,
}

/// A running filter. Observations can be fed one at a time, which is how the
/// streaming driver keeps the ensemble alive across exchange windows.
#[derive(Clone, Debug)]
pub struct Filter {
    cfg: FilterConfig,
    ensemble: Ensemble,
    anchor_day: u32,
    anchor_value: f64,
    summaries: Vec<StepSummary>,
}

impl Filter {
    /// Starts from the prior at `start_day` with infected proportion `i0`,
    /// which also anchors the first interpolation segment.
    pub fn new(cfg: FilterConfig, i0: f64, start_day: u32) -> Result<Self> {
        let ensemble = init_ensemble(&cfg, i0)?;
        let first = StepSummary::of(&ensemble, start_day as f64, cfg.n_particles as f64, false)?;
        Ok(Filter {
            cfg,
            ensemble,
            anchor_day: start_day,
            anchor_value: i0,
            summaries: vec![first],
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn summaries(&self) -> &[StepSummary] {
        &self.summaries
    }

    /// Day of the most recent observation (or the start day).
    pub fn day(&self) -> u32 {
        self.anchor_day
    }

    pub fn parameter_samples(&self) -> Vec<ParameterSample> {
        self.ensemble.parameter_samples()
    }

    pub fn assimilate(&mut self, obs: &Observation) -> Result<()> {
        self.assimilate_with(obs, |_, _| {})
    }

    /// Advances the ensemble to `obs.day`, calling `observer` after every
    /// sub-step with its summary and the updated ensemble.
    pub fn assimilate_with<F>(&mut self, obs: &Observation, mut observer: F) -> Result<()>
    where
        F: FnMut(&StepSummary, &Ensemble),
    {
        if obs.day <= self.anchor_day {
            return Err(Error::invalid(format!(
                "observation for day {} does not follow day {}",
                obs.day, self.anchor_day
            )));
        }
        let y = obs.infected_proportion;
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::invalid(format!("day {}: infected proportion {y} outside [0, 1]", obs.day)));
        }
        let per_day = self.cfg.interp_steps + 1;
        let substeps = (obs.day - self.anchor_day) as usize * per_day;
        let dt = self.cfg.dt();
        for j in 1..=substeps {
            let frac = j as f64 / substeps as f64;
            let (target, sd) = if j == substeps {
                (y, self.cfg.obs_sd)
            } else {
                (self.anchor_value + (y - self.anchor_value) * frac, self.cfg.latent_sd)
            };
            let day = self.anchor_day as f64 + j as f64 * dt;
            let summary = self.step(target, sd, dt, day)?;
            observer(&summary, &self.ensemble);
            self.summaries.push(summary);
        }
        self.anchor_day = obs.day;
        self.anchor_value = y;
        Ok(())
    }

    fn step(&mut self, target: f64, sd: f64, dt: f64, day: f64) -> Result<StepSummary> {
        let cfg = &self.cfg;
        let n = cfg.n_particles;
        let t = self.ensemble.step + 1;
        let prev = &self.ensemble;

        let resampled = ess(&prev.weights)? < cfg.ess_threshold_fraction * n as f64;
        let ancestors = if resampled {
            let u: f64 = rand::Rng::random(&mut rng::stream(cfg.seed, Domain::Resample, &[t as u64]));
            resample(&prev.weights, u, cfg.scan_backend).map_err(|e| match e {
                Error::Degenerate { .. } => Error::Degenerate { step: t },
                e => e,
            })?
        } else {
            (0..n).collect()
        };

        let (seed, ou) = (cfg.seed, cfg.ou);
        let moved: Vec<(Particle, f64)> = ancestors
            .par_iter()
            .enumerate()
            .map(|(k, &a)| {
                let mut rng = rng::stream(seed, Domain::Propagate, &[t as u64, k as u64]);
                let p = propagate(&prev.particles[a], dt, &ou, &mut rng);
                let ll = log_weight_gaussian(target, p.i, sd);
                (p, ll)
            })
            .collect();

        let uniform = -(n as f64).ln();
        let mut log_w: Vec<f64> = moved
            .iter()
            .zip(&ancestors)
            .map(|(&(_, ll), &a)| {
                let carried = if resampled { uniform } else { prev.weights[a].ln() };
                let lw = match cfg.weight_update {
                    WeightUpdate::Bootstrap => carried + ll,
                    WeightUpdate::AncestorRatio => carried + ll - prev.weights[a].ln(),
                };
                if lw.is_nan() { f64::NEG_INFINITY } else { lw }
            })
            .collect();
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Degenerate { step: t });
        }
        for lw in log_w.iter_mut() {
            *lw = (*lw - max).exp();
        }
        let total: f64 = log_w.iter().sum();
        let mut weights = log_w;
        for w in weights.iter_mut() {
            *w /= total;
        }

        self.ensemble = Ensemble {
            particles: moved.into_iter().map(|(p, _)| p).collect(),
            weights,
            ancestors,
            step: t,
        };
        let ess_now = ess(&self.ensemble.weights)?;
        StepSummary::of(&self.ensemble, day, ess_now, resampled)
    }

    pub fn into_output(self) -> FilterOutput {
        FilterOutput {
            final_samples: self.ensemble.parameter_samples(),
            summaries: self.summaries,
        }
    }
}

/// Runs the filter from day 0 over `observations`, which must have strictly
/// increasing days after 0.
pub fn smc_run(observations: &[Observation], cfg: &FilterConfig, i0: f64) -> Result<FilterOutput> {
    let mut filter = Filter::new(cfg.clone(), i0, 0)?;
    for obs in observations {
        filter.assimilate(obs)?;
    }
    Ok(filter.into_output())
}

pub fn write_filter_csv<W: Write>(rows: &[StepSummary], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{FILTER_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.day,
            r.mean_s,
            r.mean_i,
            r.mean_r,
            r.q05_i,
            r.q95_i,
            r.mean_beta,
            r.q05_beta,
            r.q95_beta,
            r.mean_gamma,
            r.q05_gamma,
            r.q95_gamma,
            r.ess,
            r.resampled as u8
        )?;
    }
    Ok(())
}

/// One JSON object per line.
pub fn write_params_ndjson<W: Write>(samples: &[ParameterSample], mut out: W) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        writeln!(out)?;
    }
    Ok(())
}
