//! Per-time predictive bounds and manifold diagnostics of single-NN
//! ensembles, screened by false discovery rate.

use std::io::Write;

use rayon::prelude::*;

use super::density::{gaussian_fit, kde, prediction_bounds, Density, GaussianFit};
use super::fdr::bh_fdr;
use super::ks::{durbin_ks_test, replication_test};
use super::mixture::mixture_lrt_test;
use crate::error::{Error, Result};
use crate::predictor::PredictionSet;
use crate::seed::derive_seed;
use crate::timeseries::{format_month, format_value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticSettings {
    pub alpha: f64,
    pub fdr_q: f64,
    pub durbin_replicates: usize,
    pub mixture_replicates: usize,
    pub max_components: usize,
    pub seed: u64,
}

impl Default for DiagnosticSettings {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            fdr_q: 0.05,
            durbin_replicates: super::ks::DURBIN_REPLICATES,
            mixture_replicates: super::mixture::MIXTURE_REPLICATES,
            max_components: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeDiagnostics {
    pub time: i64,
    pub lower: f64,
    pub upper: f64,
    pub replication_p: f64,
    pub ks_p: f64,
    pub mixture_p: f64,
    pub density: Density,
    pub gaussian: GaussianFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticReport {
    pub rows: Vec<TimeDiagnostics>,
    pub replication_flags: Vec<bool>,
    pub ks_flags: Vec<bool>,
    pub mixture_flags: Vec<bool>,
}

/// Bounds, densities and the three tests for every time of `set`.
///
/// The replication test compares the ensembles of even- and odd-indexed
/// views, two disjoint random view sets.
pub fn diagnose(
    set: &PredictionSet,
    calibration: Option<&[(f64, f64)]>,
    settings: &DiagnosticSettings,
) -> Result<DiagnosticReport> {
    let ensembles: Vec<Vec<f64>> = (0..set.len()).map(|i| set.ensemble(i)).collect();
    let bounds = prediction_bounds(&ensembles, settings.alpha, calibration)?;
    let even: Vec<usize> = (0..set.n_views()).step_by(2).collect();
    let odd: Vec<usize> = (1..set.n_views()).step_by(2).collect();
    let halves: (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..set.len())
        .map(|i| (set.ensemble_of(i, &even), set.ensemble_of(i, &odd)))
        .unzip();
    let replication = replication_test(&halves.0, &halves.1)?;
    let rows = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let ens = &ensembles[i];
            let t = set.times[i] as u64;
            let ctx = |e: Error| e.context(format!("diagnostics at {}", format_month(set.times[i])));
            let ks = durbin_ks_test(ens, settings.durbin_replicates, derive_seed(settings.seed, "ks", t))
                .map_err(ctx)?;
            let mix = mixture_lrt_test(
                ens,
                settings.max_components,
                settings.mixture_replicates,
                derive_seed(settings.seed, "mixture", t),
            )
            .map_err(ctx)?;
            Ok(TimeDiagnostics {
                time: set.times[i],
                lower: bounds[i].0,
                upper: bounds[i].1,
                replication_p: replication[i].p_value,
                ks_p: ks.p_value,
                mixture_p: mix.p_value,
                density: kde(ens, None).map_err(ctx)?,
                gaussian: gaussian_fit(ens).map_err(ctx)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let flags = |f: fn(&TimeDiagnostics) -> f64| {
        bh_fdr(&rows.iter().map(f).collect::<Vec<_>>(), settings.fdr_q)
    };
    Ok(DiagnosticReport {
        replication_flags: flags(|r| r.replication_p)?,
        ks_flags: flags(|r| r.ks_p)?,
        mixture_flags: flags(|r| r.mixture_p)?,
        rows,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e)
}

impl DiagnosticReport {
    /// `time,rep_p,ks_p,mix_p,rep_flag,ks_flag,mix_flag`
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "rep_p", "ks_p", "mix_p", "rep_flag", "ks_flag", "mix_flag"])
            .map_err(csv_err)?;
        for (i, r) in self.rows.iter().enumerate() {
            let flag = |f: bool| if f { "1" } else { "0" }.to_string();
            w.write_record([
                format_month(r.time),
                format_value(r.replication_p),
                format_value(r.ks_p),
                format_value(r.mixture_p),
                flag(self.replication_flags[i]),
                flag(self.ks_flags[i]),
                flag(self.mixture_flags[i]),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "diagnostics.csv".into(),
            source,
        })
    }

    /// `time,lower,upper` for each prediction time.
    pub fn write_bounds_csv(&self, set: &PredictionSet, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "multiview_mean", "lower", "upper", "observed"])
            .map_err(csv_err)?;
        for (i, r) in self.rows.iter().enumerate() {
            w.write_record([
                format_month(r.time),
                format_value(set.multiview_mean[i]),
                format_value(r.lower),
                format_value(r.upper),
                set.observed[i].map(format_value).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "bounds.csv".into(),
            source,
        })
    }
}

impl TimeDiagnostics {
    /// `x,kde,gaussian` on the density grid.
    pub fn write_density_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "kde", "gaussian"]).map_err(csv_err)?;
        for (&x, &d) in self.density.grid.iter().zip(&self.density.values) {
            w.write_record([format_value(x), format_value(d), format_value(self.gaussian.pdf(x))])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "density.csv".into(),
            source,
        })
    }
}
