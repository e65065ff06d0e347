//! Kolmogorov-Smirnov tests: one-sample against a fitted Gaussian with a
//! parametric-bootstrap null, and two-sample with the asymptotic null.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::density::{gaussian_fit, GaussianFit};
use crate::error::{Error, Result};
use crate::seed::sub_rng;

/// Default bootstrap size for [`durbin_ks_test`].
pub const DURBIN_REPLICATES: usize = 999;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Sup distance between the empirical CDF of `sample` and `fit`.
pub fn ks_statistic(sample: &[f64], fit: &GaussianFit) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = fit.cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn estimated_ks(sample: &[f64]) -> Result<f64> {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ks_statistic(&sorted, &gaussian_fit(&sorted)?))
}

/// KS distance to the Gaussian fitted to `sample` itself. The null
/// distribution is simulated with parameters re-estimated in every
/// replicate; the statistic is location-scale invariant, so replicates are
/// drawn from the standard normal.
pub fn durbin_ks_test(sample: &[f64], replicates: usize, seed: u64) -> Result<KsTest> {
    if sample.len() < 5 {
        return Err(Error::InsufficientSample {
            needed: 5,
            given: sample.len(),
        });
    }
    if replicates == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one replicate".into()));
    }
    let statistic = estimated_ks(sample)?;
    let n = sample.len();
    let exceed = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = sub_rng(seed, "durbin-ks", b as u64);
            let draw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            estimated_ks(&draw).map(|d| d >= statistic)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&e| e)
        .count();
    Ok(KsTest {
        statistic,
        p_value: (1 + exceed) as f64 / (replicates + 1) as f64,
    })
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^(k-1) exp(-2 k² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS test; p-value from `Q((√nₑ + 0.12 + 0.11/√nₑ) D)` with
/// `nₑ = nm / (n + m)`.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<KsTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientSample { needed: 1, given: 0 });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let root = ne.sqrt();
    Ok(KsTest {
        statistic: d,
        p_value: if d == 0.0 {
            1.0
        } else {
            kolmogorov_q((root + 0.12 + 0.11 / root) * d)
        },
    })
}

/// Per-time two-sample KS between ensembles from disjoint view sets.
pub fn replication_test(first: &[Vec<f64>], second: &[Vec<f64>]) -> Result<Vec<KsTest>> {
    if first.len() != second.len() {
        return Err(Error::InvalidArgument(format!(
            "{} and {} prediction times",
            first.len(),
            second.len()
        )));
    }
    first
        .iter()
        .zip(second)
        .map(|(a, b)| {
            let given = a.len().min(b.len());
            if given < 10 {
                return Err(Error::InsufficientSample { needed: 10, given });
            }
            two_sample_ks(a, b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn bootstrap_p_is_bounded_and_seeded() {
        let s = [0.1, 0.5, 0.2, 0.9, 0.35, 0.6, 0.7];
        let a = durbin_ks_test(&s, 99, 3).unwrap();
        let b = durbin_ks_test(&s, 99, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.p_value >= 0.01 && a.p_value <= 1.0);
    }

    #[test]
    fn uniform_sample_is_rejected() {
        let mut rng = crate::seed::rng(11);
        let s: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let t = durbin_ks_test(&s, DURBIN_REPLICATES, 1).unwrap();
        assert!(t.p_value < 0.01, "p = {}", t.p_value);
    }

    #[test]
    fn statistic_matches_hand_value() {
        // Fit of {-1, 1} is N(0, 1); Φ(-1) = 0.158655…, D = max(0.5 - 0.158655, 0.158655).
        let g = gaussian_fit(&[-1.0, 1.0]).unwrap();
        let d = ks_statistic(&[-1.0, 1.0], &g);
        assert!((d - (0.5 - 0.158_655_253_931_457)).abs() < 1e-10, "d = {d}");
    }

    #[test]
    fn kolmogorov_q_reference_points() {
        // Reference values from an independent evaluation of the series.
        assert!((kolmogorov_q(1.0) - 0.269_999_671_677_355_5).abs() < 1e-12);
        assert!((kolmogorov_q(1.358) - 0.050_026_797_334_447).abs() < 1e-12);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn two_sample_extremes() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let same = two_sample_ks(&a, &a).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
        let b: Vec<f64> = a.iter().map(|v| v + 100.0).collect();
        let far = two_sample_ks(&a, &b).unwrap();
        assert_eq!(far.statistic, 1.0);
        assert!(far.p_value < 1e-6);
    }

    #[test]
    fn two_sample_handles_ties_and_unequal_sizes() {
        let t = two_sample_ks(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0, 3.0]).unwrap();
        // after 1: 2/3 vs 1/4; after 2: 1 vs 3/4
        assert!((t.statistic - (2.0 / 3.0 - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn replication_requires_ten_values() {
        let a = vec![vec![0.0; 9]];
        assert!(replication_test(&a, &a).is_err());
        let ok = vec![(0..10).map(|i| i as f64).collect::<Vec<_>>()];
        assert_eq!(replication_test(&ok, &ok).unwrap()[0].p_value, 1.0);
    }
}
