use rand::Rng;

use crate::error::{Error, Result};
use crate::scan::{inclusive_scan_with, ScanBackend};

const NORMALIZATION_TOL: f64 = 1e-8;

/// Effective sample size `1 / sum(w^2)` of normalized weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::invalid("empty weight vector"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
    }
    Ok(1.0 / weights.iter().map(|w| w * w).sum::<f64>())
}

/// Systematic resampling with a single uniform offset `u` in `[0, 1)`.
///
/// Position `k` sits at `(k + u) / N` of the cumulative weight; its ancestor
/// is the first index whose cumulative sum exceeds it, so a particle of zero
/// weight is never chosen. Weights need not be normalized.
pub fn resample(weights: &[f64], u: f64, backend: ScanBackend) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::invalid(format!("offset {u} outside [0, 1)")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let cumsum = inclusive_scan_with(weights, backend)?;
    let total = *cumsum.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::Degenerate { step: 0 });
    }
    let n = weights.len();
    let mut ancestors = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let pos = total * ((k as f64 + u) / n as f64);
        while j + 1 < n && cumsum[j] <= pos {
            j += 1;
        }
        // Rounding can leave the final positions at or past the total; fall
        // back to the last particle carrying weight.
        while weights[j] == 0.0 && j > 0 {
            j -= 1;
        }
        ancestors.push(j);
    }
    Ok(ancestors)
}

pub fn systematic_resample<R: Rng + ?Sized>(
    weights: &[f64],
    rng: &mut R,
    backend: ScanBackend,
) -> Result<Vec<usize>> {
    let u: f64 = rng.random();
    resample(weights, u, backend)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use proptest::prelude::*;

    fn offspring(ancestors: &[usize], n: usize) -> Vec<usize> {
        let mut counts = vec![0; n];
        for &a in ancestors {
            counts[a] += 1;
        }
        counts
    }

    #[test]
    fn ess_examples() {
        assert_eq!(ess(&vec![1.0 / 1024.0; 1024]).unwrap(), 1024.0);
        assert_eq!(ess(&[0.0, 1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!((ess(&[0.5, 0.25, 0.25]).unwrap() - 1.0 / 0.375).abs() < 1e-12);
        assert!(ess(&[0.5, 0.6]).is_err());
        assert!(ess(&[]).is_err());
    }

    #[test]
    fn half_half_split() {
        for i in 0..100 {
            let u = i as f64 / 100.0;
            let a = resample(&[0.5, 0.5, 0.0, 0.0], u, ScanBackend::Sequential).unwrap();
            assert_eq!(offspring(&a, 4), vec![2, 2, 0, 0], "u = {u}");
        }
    }

    #[test]
    fn zero_total_is_degenerate() {
        assert!(matches!(
            resample(&[0.0, 0.0], 0.5, ScanBackend::Parallel),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn unbiased_offspring_counts() {
        let w = [0.1, 0.35, 0.05, 0.3, 0.2];
        let n = w.len();
        let trials = 10_000;
        let mut sums = vec![0.0; n];
        let mut rng = rng::stream(11, Domain::Resample, &[]);
        for _ in 0..trials {
            let a = systematic_resample(&w, &mut rng, ScanBackend::Sequential).unwrap();
            for (s, c) in sums.iter_mut().zip(offspring(&a, n)) {
                *s += c as f64;
            }
        }
        for (j, &wj) in w.iter().enumerate() {
            let expected = n as f64 * wj;
            // Systematic offspring counts differ from N w by less than one.
            let sd = (expected - expected.floor()) * (expected.ceil() - expected);
            let se = sd.sqrt() / (trials as f64).sqrt();
            let mean = sums[j] / trials as f64;
            assert!((mean - expected).abs() <= 3.0 * se + 1e-12, "j={j} mean={mean} expected={expected}");
        }
    }

    proptest! {
        #[test]
        fn offspring_are_near_expected(
            w in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0], 1..200),
            u in 0.0f64..1.0,
        ) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let total: f64 = w.iter().sum();
            let n = w.len();
            for backend in [ScanBackend::Sequential, ScanBackend::Parallel] {
                let a = resample(&w, u, backend).unwrap();
                prop_assert_eq!(a.len(), n);
                prop_assert!(a.windows(2).all(|p| p[0] <= p[1]));
                for (j, c) in offspring(&a, n).into_iter().enumerate() {
                    if w[j] == 0.0 {
                        prop_assert_eq!(c, 0);
                    }
                    let expected = n as f64 * w[j] / total;
                    prop_assert!((c as f64 - expected).abs() < 1.0 + 1e-9);
                }
            }
        }
    }
}
