//! Gaussian mixtures by EM and the bootstrap likelihood-ratio test of a
//! single Gaussian against a few components.

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::density::gaussian_fit;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, sub_rng};

pub const EM_RESTARTS: usize = 10;
pub const EM_MAX_ITERATIONS: usize = 500;
/// A run has converged once the log-likelihood of the standardized sample
/// changes by less than this fraction of its magnitude.
pub const EM_TOLERANCE: f64 = 1e-8;
/// Component variances never fall below this fraction of the sample variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Default bootstrap size for [`mixture_lrt_test`].
pub const MIXTURE_REPLICATES: usize = 199;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Mixture {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn density(&self, x: f64) -> f64 {
        (0..self.components())
            .map(|k| {
                let z = (x - self.means[k]) / self.sds[k];
                self.weights[k] * (-0.5 * z * z - LN_SQRT_2PI).exp() / self.sds[k]
            })
            .sum()
    }

    pub fn log_likelihood(&self, sample: &[f64]) -> f64 {
        sample.iter().map(|&x| self.density(x).ln()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFit {
    pub mixture: Mixture,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood never decreased between iterations.
    pub monotone: bool,
}

/// One EM update of `m`; also returns the log-likelihood at `m`.
fn em_step(sample: &[f64], m: &Mixture, var_floor: f64, stats: &mut [[f64; 3]]) -> (Mixture, f64) {
    let k = m.components();
    let offsets: Vec<f64> = (0..k)
        .map(|j| m.weights[j].ln() - m.sds[j].ln() - LN_SQRT_2PI)
        .collect();
    let half_prec: Vec<f64> = m.sds.iter().map(|s| 0.5 / (s * s)).collect();
    let mut terms = [0.0f64; 3];
    stats.iter_mut().for_each(|s| *s = [0.0; 3]);
    let mut loglik = 0.0;
    for &x in sample {
        let mut top = f64::NEG_INFINITY;
        for j in 0..k {
            let d = x - m.means[j];
            terms[j] = offsets[j] - d * d * half_prec[j];
            top = top.max(terms[j]);
        }
        let mut total = 0.0;
        for t in terms[..k].iter_mut() {
            *t = if *t == top { 1.0 } else { (*t - top).exp() };
            total += *t;
        }
        loglik += top + total.ln();
        for j in 0..k {
            let r = terms[j] / total;
            stats[j][0] += r;
            stats[j][1] += r * x;
            stats[j][2] += r * x * x;
        }
    }
    let mut next = m.clone();
    for j in 0..k {
        let [nk, sx, sxx] = stats[j];
        next.weights[j] = nk / sample.len() as f64;
        if nk > 0.0 {
            let mean = sx / nk;
            next.means[j] = mean;
            next.sds[j] = (sxx / nk - mean * mean).max(var_floor).sqrt();
        }
    }
    (next, loglik)
}

fn flatten(m: &Mixture) -> Vec<f64> {
    m.weights.iter().chain(&m.means).chain(&m.sds).copied().collect()
}

fn unflatten(v: &[f64], k: usize) -> Mixture {
    Mixture {
        weights: v[..k].to_vec(),
        means: v[k..2 * k].to_vec(),
        sds: v[2 * k..].to_vec(),
    }
}

/// EM with squared extrapolation: two EM updates define a secant step
/// that is kept only when it is a valid mixture whose likelihood is at
/// least that reached by plain EM. The likelihood of successive iterates
/// therefore never decreases. Every EM update counts as one iteration; a
/// run converges when one EM update changes the log-likelihood by less
/// than [`EM_TOLERANCE`] relative.
///
/// Expects a sample with zero mean and unit variance.
fn em(sample: &[f64], init: Mixture, var_floor: f64) -> MixtureFit {
    let k = init.components();
    let mut stats = vec![[0.0f64; 3]; k];
    let mut m = init;
    let mut iterations = 0;
    let mut monotone = true;
    let mut last = f64::NEG_INFINITY;
    let tol = |a: f64, b: f64| (a - b).abs() < EM_TOLERANCE * a.abs().max(1.0);
    let mut check = |l: f64, last: &mut f64| {
        if l < *last - 1e-9 * (1.0 + last.abs()) {
            monotone = false;
        }
        *last = l;
    };
    loop {
        let (m1, l0) = em_step(sample, &m, var_floor, &mut stats);
        check(l0, &mut last);
        let (m2, l1) = em_step(sample, &m1, var_floor, &mut stats);
        iterations += 2;
        check(l1, &mut last);
        if tol(l1, l0) {
            return MixtureFit { mixture: m1, loglik: l1, iterations, converged: true, monotone };
        }
        if iterations >= EM_MAX_ITERATIONS {
            return MixtureFit { mixture: m1, loglik: l1, iterations, converged: false, monotone };
        }
        let (p0, p1, p2) = (flatten(&m), flatten(&m1), flatten(&m2));
        let r: Vec<f64> = p1.iter().zip(&p0).map(|(a, b)| a - b).collect();
        let v: Vec<f64> = p2.iter().zip(&p1).zip(&r).map(|((a, b), c)| a - b - c).collect();
        let norm = |x: &[f64]| x.iter().map(|y| y * y).sum::<f64>().sqrt();
        let (nr, nv) = (norm(&r), norm(&v));
        let mut next = m2;
        if nv > 0.0 {
            let alpha = (-nr / nv).min(-1.0);
            let jump: Vec<f64> = (0..p0.len())
                .map(|i| p0[i] - 2.0 * alpha * r[i] + alpha * alpha * v[i])
                .collect();
            let mut cand = unflatten(&jump, k);
            let valid = cand.weights.iter().all(|&w| w > 0.0)
                && cand.sds.iter().all(|&s| s * s >= var_floor)
                && jump.iter().all(|x| x.is_finite());
            if valid {
                let total: f64 = cand.weights.iter().sum();
                cand.weights.iter_mut().for_each(|w| *w /= total);
                let (stabilized, lc) = em_step(sample, &cand, var_floor, &mut stats);
                iterations += 1;
                if lc >= l1 {
                    check(lc, &mut last);
                    next = stabilized;
                }
            }
        }
        m = next;
    }
}

/// Highest-likelihood of [`EM_RESTARTS`] EM runs, each started from
/// distinct random sample points as means, the sample spread and equal
/// weights. Fails if no run converges. A single component is fitted in
/// closed form.
pub fn fit_mixture(sample: &[f64], components: usize, seed: u64) -> Result<MixtureFit> {
    let (fit, any_converged) = best_of_restarts(sample, components, seed)?;
    if !any_converged {
        return Err(Error::EmNonConvergence {
            iterations: EM_MAX_ITERATIONS,
        });
    }
    Ok(fit)
}

/// As [`fit_mixture`], but keeps the best run even if none converged;
/// also reports whether any did.
fn best_of_restarts(sample: &[f64], components: usize, seed: u64) -> Result<(MixtureFit, bool)> {
    if components == 0 || components > sample.len() {
        return Err(Error::InvalidArgument(format!(
            "{components} components for {} points",
            sample.len()
        )));
    }
    // Sorted so that the fit does not depend on input order.
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sample = sorted.as_slice();
    let g = gaussian_fit(sample)?;
    if components == 1 {
        let mixture = Mixture {
            weights: vec![1.0],
            means: vec![g.mu],
            sds: vec![g.sigma],
        };
        let fit = MixtureFit {
            loglik: mixture.log_likelihood(sample),
            mixture,
            iterations: 0,
            converged: true,
            monotone: true,
        };
        return Ok((fit, true));
    }
    let z: Vec<f64> = sample.iter().map(|x| (x - g.mu) / g.sigma).collect();
    let mut best: Option<MixtureFit> = None;
    let mut any_converged = false;
    let mut monotone = true;
    for r in 0..EM_RESTARTS {
        let mut rng = sub_rng(seed, "em-restart", (components * EM_RESTARTS + r) as u64);
        let means = index::sample(&mut rng, z.len(), components)
            .into_iter()
            .map(|i| z[i])
            .collect();
        let init = Mixture {
            weights: vec![1.0 / components as f64; components],
            means,
            sds: vec![1.0; components],
        };
        let fit = em(&z, init, VARIANCE_FLOOR);
        monotone &= fit.monotone;
        any_converged |= fit.converged;
        if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
            best = Some(fit);
        }
    }
    // Back to the original scale; the log-likelihood shifts by the Jacobian.
    let mut best = best.expect("at least one restart");
    best.mixture.means.iter_mut().for_each(|mu| *mu = g.mu + g.sigma * *mu);
    best.mixture.sds.iter_mut().for_each(|s| *s *= g.sigma);
    best.loglik -= sample.len() as f64 * g.sigma.ln();
    best.monotone = monotone;
    Ok((best, any_converged))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTest {
    /// `2 (max_k loglik_k - loglik_1)` over `k = 2..=max_components`.
    pub statistic: f64,
    pub p_value: f64,
    /// Fits for `1..=max_components` components.
    pub fits: Vec<MixtureFit>,
}

/// Uses the best likelihood reached whether or not EM converged: on
/// Gaussian data the mixture optimum often sits on a degenerate boundary
/// that EM approaches sublinearly. The bootstrap null applies the same
/// rule, so calibration is unaffected.
fn lrt_statistic(sample: &[f64], max_components: usize, seed: u64) -> Result<(f64, Vec<MixtureFit>)> {
    let fits = (1..=max_components)
        .map(|k| best_of_restarts(sample, k, seed).map(|f| f.0))
        .collect::<Result<Vec<_>>>()?;
    let best = fits[1..].iter().map(|f| f.loglik).fold(f64::NEG_INFINITY, f64::max);
    Ok(((2.0 * (best - fits[0].loglik)).max(0.0), fits))
}

/// Likelihood-ratio test of one Gaussian against mixtures of up to
/// `max_components`, with the null simulated from the single-Gaussian fit.
pub fn mixture_lrt_test(
    sample: &[f64],
    max_components: usize,
    replicates: usize,
    seed: u64,
) -> Result<MixtureTest> {
    if sample.len() < 10 {
        return Err(Error::InsufficientSample {
            needed: 10,
            given: sample.len(),
        });
    }
    if !(2..=3).contains(&max_components) {
        return Err(Error::InvalidArgument(format!(
            "max_components must be 2 or 3, got {max_components}"
        )));
    }
    if replicates == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one replicate".into()));
    }
    let (statistic, fits) = lrt_statistic(sample, max_components, seed)?;
    let null = &fits[0].mixture;
    let normal = Normal::new(null.means[0], null.sds[0])
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let n = sample.len();
    let exceed = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = sub_rng(seed, "mixture-boot", b as u64);
            let draw: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            let inner = derive_seed(seed, "mixture-boot-em", b as u64);
            lrt_statistic(&draw, max_components, inner).map(|(t, _)| t >= statistic)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&e| e)
        .count();
    Ok(MixtureTest {
        statistic,
        p_value: (1 + exceed) as f64 / (replicates + 1) as f64,
        fits,
    })
}
