//! Predictive distributions: quantile bounds, kernel density estimates and
//! Gaussian fits of single-NN ensembles.

use crate::error::{Error, Result};

/// Number of grid points in a [`Density`].
pub const KDE_GRID_POINTS: usize = 512;
/// Half-width of the KDE grid beyond the sample range, in bandwidths.
pub const KDE_GRID_PAD: f64 = 4.0;

/// Linear-interpolation quantile of an ascending sample (type 7):
/// position `(n - 1) p`, interpolated between neighbouring order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Affine recalibration `obs ≈ intercept + slope · pred`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub intercept: f64,
    pub slope: f64,
}

impl Calibration {
    /// Least-squares fit from `(prediction, observation)` pairs.
    pub fn fit(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InsufficientSample {
                needed: 2,
                given: pairs.len(),
            });
        }
        let n = pairs.len() as f64;
        let mp = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let mo = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pairs.iter().map(|p| (p.0 - mp).powi(2)).sum();
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mp) * (p.1 - mo)).sum();
        if !(sxx > 0.0) {
            return Err(Error::Numerical("calibration predictions are constant".into()));
        }
        let slope = sxy / sxx;
        Ok(Calibration {
            intercept: mo - slope * mp,
            slope,
        })
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Smallest ensemble that supports bounds at level `alpha`.
pub fn min_ensemble_size(alpha: f64) -> usize {
    (2.0 / alpha - 1e-9).ceil() as usize
}

/// Central `1 - alpha` bounds from each time's ensemble, optionally after
/// an affine recalibration fitted on `calibration`.
pub fn prediction_bounds(
    ensembles: &[Vec<f64>],
    alpha: f64,
    calibration: Option<&[(f64, f64)]>,
) -> Result<Vec<(f64, f64)>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    let needed = min_ensemble_size(alpha);
    let map = calibration.map(Calibration::fit).transpose()?;
    ensembles
        .iter()
        .map(|ens| {
            if ens.len() < needed {
                return Err(Error::InsufficientSample {
                    needed,
                    given: ens.len(),
                });
            }
            let mut v: Vec<f64> = match map {
                Some(c) => ens.iter().map(|&x| c.apply(x)).collect(),
                None => ens.clone(),
            };
            v.sort_by(f64::total_cmp);
            Ok((
                quantile_sorted(&v, alpha / 2.0),
                quantile_sorted(&v, 1.0 - alpha / 2.0),
            ))
        })
        .collect()
}

/// Maximum-likelihood Gaussian parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianFit {
    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - super::ranks::normal_sf((x - self.mu) / self.sigma)
    }
}

/// Sample mean and divide-by-n standard deviation.
pub fn gaussian_fit(sample: &[f64]) -> Result<GaussianFit> {
    if sample.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            given: sample.len(),
        });
    }
    let n = sample.len() as f64;
    let mu = sample.iter().sum::<f64>() / n;
    let sigma = (sample.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::Numerical("sample has zero spread".into()));
    }
    Ok(GaussianFit { mu, sigma })
}

/// A density evaluated on an evenly spaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl Density {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(g, v)| (g[1] - g[0]) * 0.5 * (v[0] + v[1]))
            .sum()
    }
}

/// Silverman's rule: `0.9 min(sd, IQR / 1.34) n^(-1/5)`, falling back to
/// the standard deviation when the interquartile range vanishes.
pub fn silverman_bandwidth(sample: &[f64]) -> Option<f64> {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let sd = (sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (spread > 0.0).then(|| 0.9 * spread * n.powf(-0.2))
}

/// Gaussian-kernel density estimate on [`KDE_GRID_POINTS`] points spanning
/// the sample range padded by [`KDE_GRID_PAD`] bandwidths.
pub fn kde(sample: &[f64], bandwidth: Option<f64>) -> Result<Density> {
    if sample.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            given: sample.len(),
        });
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive"))),
        None => silverman_bandwidth(sample)
            .ok_or_else(|| Error::Numerical("sample has zero spread".into()))?,
    };
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min) - KDE_GRID_PAD * h;
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max) + KDE_GRID_PAD * h;
    let step = (hi - lo) / (KDE_GRID_POINTS - 1) as f64;
    let norm = 1.0 / (sample.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..KDE_GRID_POINTS).map(|i| lo + i as f64 * step).collect();
    let values = grid
        .iter()
        .map(|&g| {
            norm * sample
                .iter()
                .map(|&x| {
                    let z = (g - x) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(Density {
        grid,
        values,
        bandwidth: h,
    })
}
