use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{OuParams, Particle};

/// One Euler–Maruyama step of the stochastic SIR system given the two
/// standard normal increments, followed by simplex repair (negative
/// compartments clamped to zero, then rescaled to sum one).
pub fn euler_maruyama(p: &Particle, dt: f64, ou: &OuParams, z_beta: f64, z_gamma: f64) -> Particle {
    let beta = p.log_beta.exp();
    let gamma = p.log_gamma.exp();
    let infection = beta * p.s * p.i;
    let recovery = gamma * p.i;
    let s = (p.s - infection * dt).max(0.0);
    let i = (p.i + (infection - recovery) * dt).max(0.0);
    let r = (p.r + recovery * dt).max(0.0);
    let total = s + i + r;
    let (s, i, r) = if total > 0.0 { (s / total, i / total, r / total) } else { (p.s, p.i, p.r) };
    let sqrt_dt = dt.sqrt();
    Particle {
        s,
        i,
        r,
        log_beta: p.log_beta + (ou.w1 - ou.w2 * p.log_beta) * dt + ou.w3 * sqrt_dt * z_beta,
        log_gamma: p.log_gamma + (ou.u1 - ou.u2 * p.log_gamma) * dt + ou.u3 * sqrt_dt * z_gamma,
    }
}

pub fn propagate<R: Rng + ?Sized>(p: &Particle, dt: f64, ou: &OuParams, rng: &mut R) -> Particle {
    let z_beta: f64 = rng.sample(StandardNormal);
    let z_gamma: f64 = rng.sample(StandardNormal);
    euler_maruyama(p, dt, ou, z_beta, z_gamma)
}

#[inline]
pub fn log_weight_gaussian(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

/// Gaussian observation density `N(y; i, obs_sd^2)`.
pub fn weight_obs(p: &Particle, y: f64, obs_sd: f64) -> f64 {
    log_weight_gaussian(y, p.i, obs_sd).exp()
}

/// Gaussian density of the interpolated pseudo-observation.
pub fn weight_latent(p: &Particle, pseudo: f64, latent_sd: f64) -> f64 {
    log_weight_gaussian(pseudo, p.i, latent_sd).exp()
}
