//! Weighted sample summaries: moments, quantiles and kernel density estimates.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::abm::RateDistribution;
use crate::error::{Error, Result};

/// One weighted posterior draw of the log rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSample {
    pub log_beta: f64,
    pub log_gamma: f64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl Quantiles {
    pub fn width(&self) -> f64 {
        self.q95 - self.q05
    }

    pub fn is_ordered(&self) -> bool {
        self.q05 <= self.q50 && self.q50 <= self.q95
    }
}

/// Posterior summary handed back to the agent simulation. Moments are in log
/// space, quantiles on the natural rate scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub beta_log_mean: f64,
    pub beta_log_sd: f64,
    pub gamma_log_mean: f64,
    pub gamma_log_sd: f64,
    pub beta: Quantiles,
    pub gamma: Quantiles,
}

impl ParameterSummary {
    /// Moment-matched lognormal for transmission draws.
    pub fn beta_distribution(&self) -> RateDistribution {
        RateDistribution::lognormal(self.beta_log_mean, self.beta_log_sd)
    }

    pub fn gamma_distribution(&self) -> RateDistribution {
        RateDistribution::lognormal(self.gamma_log_mean, self.gamma_log_sd)
    }
}

fn total_weight(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("total weight is zero"));
    }
    Ok(total)
}

/// Weighted mean and standard deviation (population form).
pub fn weighted_moments(values: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::invalid("moments need equally sized, non-empty inputs"));
    }
    let total = total_weight(weights)?;
    let mean = values.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total;
    let var = values
        .iter()
        .zip(weights)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum::<f64>()
        / total;
    Ok((mean, var.max(0.0).sqrt()))
}

/// Weighted quantiles: for each `q`, the smallest value whose cumulative
/// weight reaches `q` of the total.
pub fn weighted_quantiles(values: &[f64], weights: &[f64], qs: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::invalid("quantiles need equally sized, non-empty inputs"));
    }
    let total = total_weight(weights)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = Vec::with_capacity(qs.len());
    for &q in qs {
        let target = q.clamp(0.0, 1.0) * total;
        let mut acc = 0.0;
        let mut pick = values[*order.last().unwrap()];
        for &k in &order {
            acc += weights[k];
            if acc >= target && weights[k] > 0.0 {
                pick = values[k];
                break;
            }
        }
        out.push(pick);
    }
    Ok(out)
}

pub fn quantiles_5_50_95(values: &[f64], weights: &[f64]) -> Result<Quantiles> {
    let q = weighted_quantiles(values, weights, &[0.05, 0.5, 0.95])?;
    Ok(Quantiles { q05: q[0], q50: q[1], q95: q[2] })
}

/// Effective sample size of arbitrary non-negative weights.
pub fn effective_size(weights: &[f64]) -> Result<f64> {
    let total = total_weight(weights)?;
    Ok(1.0 / weights.iter().map(|w| (w / total) * (w / total)).sum::<f64>())
}

pub fn summarize(samples: &[ParameterSample]) -> Result<ParameterSummary> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot summarize an empty sample"));
    }
    let weights: Vec<f64> = samples.iter().map(|p| p.weight).collect();
    let lb: Vec<f64> = samples.iter().map(|p| p.log_beta).collect();
    let lg: Vec<f64> = samples.iter().map(|p| p.log_gamma).collect();
    let (beta_log_mean, beta_log_sd) = weighted_moments(&lb, &weights)?;
    let (gamma_log_mean, gamma_log_sd) = weighted_moments(&lg, &weights)?;
    let nat = |q: Quantiles| Quantiles { q05: q.q05.exp(), q50: q.q50.exp(), q95: q.q95.exp() };
    Ok(ParameterSummary {
        beta_log_mean,
        beta_log_sd,
        gamma_log_mean,
        gamma_log_sd,
        beta: nat(quantiles_5_50_95(&lb, &weights)?),
        gamma: nat(quantiles_5_50_95(&lg, &weights)?),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Grid indices of interior local maxima at least `min_relative` of the
    /// tallest one. Flat tops count once.
    pub fn local_maxima(&self, min_relative: f64) -> Vec<usize> {
        let d = &self.density;
        let peak = d.iter().cloned().fold(0.0, f64::max);
        let mut out = Vec::new();
        let mut k = 1;
        while k + 1 < d.len() {
            if d[k] > d[k - 1] {
                let mut j = k;
                while j + 1 < d.len() && d[j + 1] == d[k] {
                    j += 1;
                }
                if j + 1 < d.len() && d[j + 1] < d[k] && d[k] >= min_relative * peak {
                    out.push(k);
                }
                k = j + 1;
            } else {
                k += 1;
            }
        }
        out
    }

    /// Peaks whose basin carries at least `min_mass` of the probability.
    ///
    /// Basins are delimited by the lowest point between adjacent maxima. The
    /// lightest basin below `min_mass` is repeatedly merged into the
    /// neighbour across its higher dividing minimum, keeping the taller peak,
    /// so bumps produced by a handful of samples do not count as modes.
    pub fn modes(&self, min_mass: f64) -> Vec<usize> {
        let d = &self.density;
        let mut peaks = self.local_maxima(0.0);
        if peaks.is_empty() {
            return peaks;
        }
        // cuts[k] separates basin k from basin k + 1.
        let mut cuts: Vec<usize> = peaks
            .windows(2)
            .map(|w| (w[0]..=w[1]).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap())
            .collect();
        let mass = |lo: usize, hi: usize| trapezoid(&self.grid[lo..=hi], &d[lo..=hi]);
        let mut masses: Vec<f64> = (0..peaks.len())
            .map(|k| {
                let lo = if k == 0 { 0 } else { cuts[k - 1] };
                let hi = if k == peaks.len() - 1 { d.len() - 1 } else { cuts[k] };
                mass(lo, hi)
            })
            .collect();
        while peaks.len() > 1 {
            let (k, &m) = masses
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            if m >= min_mass {
                break;
            }
            let into_left = match (k.checked_sub(1), cuts.get(k)) {
                (Some(l), Some(&c)) => d[cuts[l]] >= d[c],
                (Some(_), None) => true,
                _ => false,
            };
            let (a, b) = if into_left { (k - 1, k) } else { (k, k + 1) };
            masses[a] += masses[b];
            masses.remove(b);
            if d[peaks[b]] > d[peaks[a]] {
                peaks[a] = peaks[b];
            }
            peaks.remove(b);
            cuts.remove(a);
        }
        peaks
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,density")?;
        for (x, d) in self.grid.iter().zip(&self.density) {
            writeln!(out, "{x},{d}")?;
        }
        Ok(())
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Weighted Gaussian kernel density estimate on `grid_size` equispaced points
/// over `[min - 3h, max + 3h]`.
///
/// Bandwidth follows Silverman's rule `1.06 * sd * n_eff^(-1/5)` with the
/// weighted standard deviation and the effective sample size. The grid
/// truncates the kernel tails, so the estimate is rescaled to unit
/// trapezoid mass.
pub fn kde(samples: &[f64], weights: &[f64], grid_size: usize) -> Result<DensityEstimate> {
    if samples.is_empty() || samples.len() != weights.len() {
        return Err(Error::invalid("kde needs equally sized, non-empty inputs"));
    }
    if grid_size < 2 {
        return Err(Error::invalid("kde grid needs at least two points"));
    }
    let total = total_weight(weights)?;
    let (mean, sd) = weighted_moments(samples, weights)?;
    let n_eff = effective_size(weights)?;
    let mut h = 1.06 * sd * n_eff.powf(-0.2);
    if !(h > 0.0 && h.is_finite()) {
        h = 1e-3 * mean.abs().max(1.0);
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|k| lo + step * k as f64).collect();
    let norm = 1.0 / (total * h * (2.0 * PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            samples
                .iter()
                .zip(weights)
                .filter(|(_, &w)| w > 0.0)
                .map(|(&s, &w)| {
                    let z = (x - s) / h;
                    w * (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    let mass = trapezoid(&grid, &density);
    if mass > 0.0 {
        density.iter_mut().for_each(|d| *d /= mass);
    }
    Ok(DensityEstimate { grid, density, bandwidth: h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn brute_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
        let total: f64 = weights.iter().sum();
        let mut candidates: Vec<f64> = values.to_vec();
        candidates.sort_by(f64::total_cmp);
        for c in candidates {
            let mass: f64 = values
                .iter()
                .zip(weights)
                .filter(|(v, _)| **v <= c)
                .map(|(_, w)| w)
                .sum();
            if mass >= q * total {
                return c;
            }
        }
        unreachable!()
    }

    #[test]
    fn identical_samples() {
        let s = vec![ParameterSample { log_beta: -0.7, log_gamma: -2.3, weight: 0.25 }; 4];
        let p = summarize(&s).unwrap();
        assert_eq!(p.beta_log_sd, 0.0);
        assert_eq!(p.gamma_log_sd, 0.0);
        let b = (-0.7f64).exp();
        assert_eq!((p.beta.q05, p.beta.q50, p.beta.q95), (b, b, b));
    }

    #[test]
    fn two_point_mean() {
        let s = [
            ParameterSample { log_beta: 0.0, log_gamma: 0.0, weight: 0.5 },
            ParameterSample { log_beta: 4f64.ln(), log_gamma: 0.0, weight: 0.5 },
        ];
        let p = summarize(&s).unwrap();
        assert!((p.beta_log_mean - 2f64.ln()).abs() < 1e-15);
        assert!(p.beta.is_ordered());
    }

    #[test]
    fn empty_rejected() {
        assert!(summarize(&[]).is_err());
        assert!(kde(&[1.0], &[0.0], 16).is_err());
    }

    #[test]
    fn quantiles_match_brute_force() {
        let mut rng = crate::rng::stream(5, crate::rng::Domain::Driver, &[]);
        let n = 1 << 14;
        let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 3.0).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let qs = [0.05, 0.5, 0.95];
        let fast = weighted_quantiles(&values, &weights, &qs).unwrap();
        for (k, &q) in qs.iter().enumerate() {
            assert_eq!(fast[k], brute_quantile(&values, &weights, q), "q={q}");
        }
    }

    #[test]
    fn kde_single_sample_bump() {
        let d = kde(&[0.3], &[1.0], 201).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-6);
        let top = d.local_maxima(0.0);
        assert_eq!(top.len(), 1);
        assert!((d.grid[top[0]] - 0.3).abs() <= d.grid[1] - d.grid[0]);
    }

    #[test]
    fn kde_two_point_symmetry() {
        let d = kde(&[1.0, 3.0], &[0.5, 0.5], 401).unwrap();
        let n = d.density.len();
        for k in 0..n {
            assert!((d.density[k] - d.density[n - 1 - k]).abs() < 1e-9);
        }
        assert!((d.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn kde_bimodal_mixture() {
        let mut rng = crate::rng::stream(8, crate::rng::Domain::Driver, &[]);
        let mut xs = Vec::new();
        for k in 0..1000 {
            let centre = if k % 2 == 0 { 0.0 } else { 10.0 };
            xs.push(centre + rng.random::<f64>() - 0.5);
        }
        let w = vec![1.0; xs.len()];
        let d = kde(&xs, &w, 512).unwrap();
        assert!(10.0 > 6.0 * d.bandwidth);
        assert_eq!(d.local_maxima(0.01).len(), 2);
        assert_eq!(d.modes(0.05).len(), 2);
        assert!((d.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lone_outlier_is_not_a_mode() {
        let mut rng = crate::rng::stream(9, crate::rng::Domain::Driver, &[]);
        let mut xs: Vec<f64> = (0..99).map(|_| rng.random::<f64>() + rng.random::<f64>()).collect();
        xs.push(-3.0);
        let d = kde(&xs, &vec![1.0; 100], 512).unwrap();
        assert_eq!(d.local_maxima(0.001).len(), 2);
        assert_eq!(d.modes(0.05).len(), 1);

        // An 80/20 split is two genuine modes.
        let ys: Vec<f64> = (0..100).map(|k| if k < 80 { 0.0 } else { 10.0 } + rng.random::<f64>()).collect();
        let d = kde(&ys, &vec![1.0; 100], 512).unwrap();
        let m = d.modes(0.05);
        assert_eq!(m.len(), 2);
        assert!(d.grid[m[0]] < 1.5 && d.grid[m[1]] > 9.5);
    }
}
