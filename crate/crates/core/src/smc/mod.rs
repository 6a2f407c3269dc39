//! Particle filter over a stochastic SIR model with log-rate
//! Ornstein–Uhlenbeck dynamics.
//!
//! The latent state of a particle is the compartment proportions plus
//! `log beta` and `log gamma`. Observation days weight particles with a
//! Gaussian likelihood of the infected proportion; interpolated sub-steps in
//! between weight against a linear pseudo-observation.

mod filter;
mod model;
mod resample;

pub use filter::{
    smc_run, write_filter_csv, write_params_ndjson, Filter, FilterOutput, StepSummary,
    FILTER_CSV_HEADER,
};
pub use model::{
    euler_maruyama, log_weight_gaussian, propagate, weight_latent, weight_obs,
};
pub use resample::{ess, resample, systematic_resample};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::scan::ScanBackend;
use crate::stats::ParameterSample;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub s: f64,
    pub i: f64,
    pub r: f64,
    pub log_beta: f64,
    pub log_gamma: f64,
}

impl Particle {
    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    pub fn gamma(&self) -> f64 {
        self.log_gamma.exp()
    }
}

/// Weighted particle population with the ancestor vector of its last step.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub particles: Vec<Particle>,
    pub weights: Vec<f64>,
    pub ancestors: Vec<usize>,
    pub step: usize,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn parameter_samples(&self) -> Vec<ParameterSample> {
        self.particles
            .iter()
            .zip(&self.weights)
            .map(|(p, &weight)| ParameterSample {
                log_beta: p.log_beta,
                log_gamma: p.log_gamma,
                weight,
            })
            .collect()
    }
}

/// Coefficients of the log-rate SDEs:
/// `d log beta = (w1 - w2 log beta) dt + w3 dB` and likewise with `u*` for
/// `log gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OuParams {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

impl Default for OuParams {
    /// Random walk in log space with 0.05 / sqrt(day) diffusion.
    fn default() -> Self {
        OuParams { w1: 0.0, w2: 0.0, w3: 0.05, u1: 0.0, u2: 0.0, u3: 0.05 }
    }
}

impl OuParams {
    /// No drift and no diffusion: the rates stay where they start.
    pub fn frozen() -> Self {
        OuParams { w1: 0.0, w2: 0.0, w3: 0.0, u1: 0.0, u2: 0.0, u3: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub day: u32,
    pub infected_proportion: f64,
}

impl Observation {
    pub fn new(day: u32, infected_proportion: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&infected_proportion) {
            return Err(Error::invalid(format!(
                "day {day}: infected proportion {infected_proportion} outside [0, 1]"
            )));
        }
        Ok(Observation { day, infected_proportion })
    }
}

/// How the incremental weight is combined with the carried weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightUpdate {
    /// `w_t = r(y | x_t) * carried`.
    #[default]
    Bootstrap,
    /// `w_t = r(y | x_t) * carried / w_{t-1}[ancestor]`, dividing by the
    /// previous weight of the particle's ancestor.
    AncestorRatio,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub n_particles: usize,
    /// Observation noise standard deviation on the proportion scale.
    pub obs_sd: f64,
    /// Standard deviation of the pseudo-observation weighting.
    pub latent_sd: f64,
    /// Sub-steps inserted between consecutive observation days.
    pub interp_steps: usize,
    /// Resample when ESS falls below this fraction of the ensemble size.
    pub ess_threshold_fraction: f64,
    /// Uniform prior interval for both log rates.
    pub prior_log_low: f64,
    pub prior_log_high: f64,
    /// Separate `[low, high]` interval for `log gamma`, if given.
    pub gamma_prior: Option<[f64; 2]>,
    pub ou: OuParams,
    pub seed: u64,
    pub weight_update: WeightUpdate,
    pub scan_backend: ScanBackend,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let sd = 0.1f64.sqrt();
        FilterConfig {
            n_particles: 1 << 14,
            obs_sd: sd,
            latent_sd: sd,
            interp_steps: 1,
            ess_threshold_fraction: 0.5,
            prior_log_low: -20.0,
            prior_log_high: 1.0,
            gamma_prior: None,
            ou: OuParams::default(),
            seed: 0,
            weight_update: WeightUpdate::Bootstrap,
            scan_backend: ScanBackend::Parallel,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_particles < 2 {
            return bad("n_particles must be >= 2");
        }
        if !(self.obs_sd > 0.0 && self.obs_sd.is_finite()) {
            return bad("obs_sd must be positive");
        }
        if !(self.latent_sd > 0.0) {
            return bad("latent_sd must be positive");
        }
        if !(self.ess_threshold_fraction > 0.0 && self.ess_threshold_fraction <= 1.0) {
            return bad("ess_threshold_fraction must lie in (0, 1]");
        }
        if !(self.prior_log_low.is_finite()
            && self.prior_log_high.is_finite()
            && self.prior_log_low <= self.prior_log_high)
        {
            return bad("prior bounds must be finite with low <= high");
        }
        if let Some([lo, hi]) = self.gamma_prior {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad("gamma_prior must be finite with low <= high");
            }
        }
        let ou = &self.ou;
        if [ou.w1, ou.w2, ou.w3, ou.u1, ou.u2, ou.u3].iter().any(|x| !x.is_finite()) {
            return bad("OU coefficients must be finite");
        }
        if ou.w2 < 0.0 || ou.u2 < 0.0 || ou.w3 < 0.0 || ou.u3 < 0.0 {
            return bad("OU reversion and diffusion coefficients must be >= 0");
        }
        Ok(())
    }

    /// Sub-step length in days.
    pub fn gamma_bounds(&self) -> [f64; 2] {
        self.gamma_prior.unwrap_or([self.prior_log_low, self.prior_log_high])
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.interp_steps + 1) as f64
    }
}

fn prior_draw<R: Rng>(rng: &mut R, low: f64, high: f64) -> f64 {
    if low == high {
        low
    } else {
        rng.random_range(low..high)
    }
}

/// Draws the initial ensemble: every particle starts at `(1 - i0, i0, 0)`
/// with log rates uniform on the prior interval and equal weights.
pub fn init_ensemble(cfg: &FilterConfig, i0: f64) -> Result<Ensemble> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&i0) {
        return Err(Error::invalid(format!("initial infected proportion {i0} outside [0, 1]")));
    }
    let n = cfg.n_particles;
    let [g_low, g_high] = cfg.gamma_bounds();
    let particles = (0..n)
        .map(|k| {
            let mut rng = rng::stream(cfg.seed, Domain::Prior, &[k as u64]);
            Particle {
                s: 1.0 - i0,
                i: i0,
                r: 0.0,
                log_beta: prior_draw(&mut rng, cfg.prior_log_low, cfg.prior_log_high),
                log_gamma: prior_draw(&mut rng, g_low, g_high),
            }
        })
        .collect();
    Ok(Ensemble {
        particles,
        weights: vec![1.0 / n as f64; n],
        ancestors: (0..n).collect(),
        step: 0,
    })
}
