//! Deterministic SIR baseline with constant rates, integrated by classical RK4.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_DT: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OdeCurve {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

impl OdeCurve {
    /// Largest sampled infected proportion and its time.
    pub fn peak_infected(&self) -> (f64, f64) {
        let (k, &i) = self
            .i
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        (self.times[k], i)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "day,s,i,r")?;
        for k in 0..self.times.len() {
            writeln!(out, "{},{},{},{}", self.times[k], self.s[k], self.i[k], self.r[k])?;
        }
        Ok(())
    }
}

#[inline]
fn rhs(beta: f64, gamma: f64, [s, i, _]: [f64; 3]) -> [f64; 3] {
    let infection = beta * s * i;
    let recovery = gamma * i;
    [-infection, infection - recovery, recovery]
}

/// Integrates the SIR system to `t_end` with step `dt`, sampling every
/// `sample_every` days (rounded to a whole number of steps).
pub fn solve_sir(
    beta: f64,
    gamma: f64,
    (s0, i0, r0): (f64, f64, f64),
    t_end: f64,
    dt: f64,
    sample_every: f64,
) -> Result<OdeCurve> {
    if !(dt > 0.0) || !(sample_every > 0.0) || !(t_end >= 0.0) {
        return Err(Error::invalid("solve_sir needs dt > 0, sample_every > 0, t_end >= 0"));
    }
    if !(beta >= 0.0 && gamma >= 0.0) {
        return Err(Error::invalid("solve_sir needs non-negative rates"));
    }
    if [s0, i0, r0].iter().any(|x| !(0.0..=1.0).contains(x)) || (s0 + i0 + r0 - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("initial proportions must lie in [0, 1] and sum to 1"));
    }
    let stride = ((sample_every / dt).round() as usize).max(1);
    let steps = (t_end / dt).round() as usize;

    let mut curve = OdeCurve { times: vec![0.0], s: vec![s0], i: vec![i0], r: vec![r0] };
    let mut y = [s0, i0, r0];
    let h = dt;
    for n in 1..=steps {
        let k1 = rhs(beta, gamma, y);
        let k2 = rhs(beta, gamma, std::array::from_fn(|j| y[j] + 0.5 * h * k1[j]));
        let k3 = rhs(beta, gamma, std::array::from_fn(|j| y[j] + 0.5 * h * k2[j]));
        let k4 = rhs(beta, gamma, std::array::from_fn(|j| y[j] + h * k3[j]));
        for j in 0..3 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if n % stride == 0 {
            curve.times.push(n as f64 * dt);
            curve.s.push(y[0]);
            curve.i.push(y[1]);
            curve.r.push(y[2]);
        }
    }
    Ok(curve)
}

/// Basic reproduction number `beta / gamma`.
pub fn r_naught(beta: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("r_naught needs gamma > 0"));
    }
    Ok(beta / gamma)
}
