use std::io::Write;

use rayon::prelude::*;

use super::{knn_where, local_linear_fit};
use crate::embedding::{build_delay_matrix, query_vector, Coordinate, View};
use crate::error::{Error, Result};
use crate::timeseries::{format_month, format_value, SeriesPanel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    /// Neighbours per local linear fit.
    pub k: usize,
    /// Exclude training rows whose target lies within one lag window of the
    /// query target. Meant for training and query drawn from the same panel.
    pub theiler: bool,
}

/// One view's contribution at one target time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewPrediction {
    pub single_nn: f64,
    pub local_linear: f64,
}

/// Multiview predictions over a set of target times.
///
/// `slots[i][v]` is view `v`'s prediction for `times[i]`, or `None` when the
/// view could not be used at that time.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub target: String,
    pub times: Vec<i64>,
    pub slots: Vec<Vec<Option<ViewPrediction>>>,
    pub multiview_mean: Vec<f64>,
    pub observed: Vec<Option<f64>>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_views(&self) -> usize {
        self.slots.first().map_or(0, Vec::len)
    }

    pub fn n_views_used(&self, i: usize) -> usize {
        self.slots[i].iter().flatten().count()
    }

    /// Views skipped across all times.
    pub fn skipped(&self) -> usize {
        self.slots.iter().flatten().filter(|s| s.is_none()).count()
    }

    /// Single-nearest-neighbour values at time index `i`, one per used view.
    pub fn ensemble(&self, i: usize) -> Vec<f64> {
        self.slots[i].iter().flatten().map(|s| s.single_nn).collect()
    }

    /// Single-NN values of the views selected by `views`.
    pub fn ensemble_of(&self, i: usize, views: &[usize]) -> Vec<f64> {
        views
            .iter()
            .filter_map(|&v| self.slots[i][v].map(|s| s.single_nn))
            .collect()
    }

    pub fn local_linear(&self, i: usize) -> Vec<f64> {
        self.slots[i].iter().flatten().map(|s| s.local_linear).collect()
    }

    /// `(prediction, observation)` columns over the times with an observation.
    pub fn scored(&self) -> (Vec<f64>, Vec<f64>) {
        self.multiview_mean
            .iter()
            .zip(&self.observed)
            .filter_map(|(&p, o)| o.map(|o| (p, o)))
            .unzip()
    }

    pub fn correlation(&self) -> Result<f64> {
        let (pred, obs) = self.scored();
        super::predictive_correlation(&pred, &obs)
    }

    /// Applies `f` to every prediction and observation.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            target: self.target.clone(),
            times: self.times.clone(),
            slots: self
                .slots
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|s| {
                            s.map(|s| ViewPrediction {
                                single_nn: f(s.single_nn),
                                local_linear: f(s.local_linear),
                            })
                        })
                        .collect()
                })
                .collect(),
            multiview_mean: self.multiview_mean.iter().map(|&v| f(v)).collect(),
            observed: self.observed.iter().map(|o| o.map(&f)).collect(),
        }
    }

    /// `time,multiview_mean,observed,n_views_used`
    pub fn write_predictions_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["time", "multiview_mean", "observed", "n_views_used"])?;
        for i in 0..self.len() {
            wtr.write_record([
                format_month(self.times[i]),
                format_value(self.multiview_mean[i]),
                self.observed[i].map(format_value).unwrap_or_default(),
                self.n_views_used(i).to_string(),
            ])?;
        }
        flush(wtr)
    }

    /// `time,view_id,single_nn,local_linear`, one row per used view.
    pub fn write_ensemble_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["time", "view_id", "single_nn", "local_linear"])?;
        for (i, row) in self.slots.iter().enumerate() {
            for (v, slot) in row.iter().enumerate() {
                if let Some(s) = slot {
                    wtr.write_record([
                        format_month(self.times[i]),
                        v.to_string(),
                        format_value(s.single_nn),
                        format_value(s.local_linear),
                    ])?;
                }
            }
        }
        flush(wtr)
    }
}

fn flush<W: Write>(mut wtr: csv::Writer<W>) -> Result<()> {
    wtr.flush().map_err(|source| Error::Io {
        path: "<csv writer>".into(),
        source,
    })
}

fn predict_view(
    train: &SeriesPanel,
    query: &SeriesPanel,
    view: &View,
    origin: i64,
    times: &[i64],
    opts: &PredictOptions,
) -> Result<Vec<Option<ViewPrediction>>> {
    let matrix = match build_delay_matrix(train, view) {
        Ok(m) => m.filter(|t| t <= origin),
        Err(Error::EmptyDelayMatrix) => return Ok(vec![None; times.len()]),
        Err(e) => return Err(e),
    };
    if opts.k < view.dim() + 2 {
        return Err(Error::InvalidArgument(format!(
            "k = {} is below dim + 2 = {}",
            opts.k,
            view.dim() + 2
        )));
    }
    let window = view.depth();
    times
        .iter()
        .map(|&t| {
            let Some(q) = query_vector(query, view, t)? else {
                return Ok(None);
            };
            let neighbors = match knn_where(&matrix, &q, opts.k, |i| {
                !opts.theiler || (matrix.time(i) - t).abs() > window
            }) {
                Ok(nb) => nb,
                Err(Error::NotEnoughRows { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            Ok(Some(ViewPrediction {
                single_nn: matrix.y(neighbors.indices[0]),
                local_linear: local_linear_fit(&matrix, &neighbors, &q)?,
            }))
        })
        .collect()
}

fn predict_slots(
    train: &SeriesPanel,
    query: &SeriesPanel,
    views: &[View],
    origin: i64,
    times: &[i64],
    opts: &PredictOptions,
) -> Result<Vec<Vec<Option<ViewPrediction>>>> {
    let first = views
        .first()
        .ok_or_else(|| Error::InvalidArgument("no views".into()))?;
    if views
        .iter()
        .any(|v| v.target() != first.target() || v.lead() != first.lead())
    {
        return Err(Error::InvalidArgument("views must share target and lead".into()));
    }
    let by_view = views
        .par_iter()
        .map(|v| predict_view(train, query, v, origin, times, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..times.len())
        .map(|i| by_view.iter().map(|col| col[i]).collect())
        .collect())
}

fn mean_of(row: &[Option<ViewPrediction>], value: fn(&ViewPrediction) -> f64) -> Option<f64> {
    let (sum, n) = row
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), p| (s + value(p), n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Averages the per-view local linear predictions for each query time.
///
/// Training rows come from `train` with target time `<= origin`; query
/// coordinates come from `query`. Views that cannot be used at a time are
/// skipped; a time with no usable view is an error.
pub fn multiview_predict(
    train: &SeriesPanel,
    query: &SeriesPanel,
    views: &[View],
    origin: i64,
    query_times: &[i64],
    opts: &PredictOptions,
) -> Result<PredictionSet> {
    let slots = predict_slots(train, query, views, origin, query_times, opts)?;
    let multiview_mean = slots
        .iter()
        .zip(query_times)
        .map(|(row, &t)| mean_of(row, |p| p.local_linear).ok_or(Error::NoUsableView(t)))
        .collect::<Result<Vec<_>>>()?;
    let target = query.index_of(views[0].target())?;
    Ok(PredictionSet {
        target: views[0].target().to_string(),
        times: query_times.to_vec(),
        slots,
        multiview_mean,
        observed: query_times.iter().map(|&t| query.get(target, t)).collect(),
    })
}

/// Projects `query` onto the dynamics of `model`: for every month `s` of the
/// query panel, the target at `s + lead` of the nearest model state in each
/// view, averaged over views. Query coordinates are those available at `s`;
/// the whole model run is searched. Values always lie on the model
/// attractor.
///
/// The result is aligned with the query panel's months, so it can be added
/// as a new variable and used as a lag-0 coordinate without leaking the
/// target.
pub fn projection_series(
    model: &SeriesPanel,
    query: &SeriesPanel,
    views: &[View],
    opts: &PredictOptions,
) -> Result<Vec<Option<f64>>> {
    let lead = i64::from(
        views
            .first()
            .ok_or_else(|| Error::InvalidArgument("no views".into()))?
            .lead(),
    );
    let times: Vec<i64> = query.times().map(|s| s + lead).collect();
    let opts = PredictOptions {
        theiler: false,
        ..*opts
    };
    let slots = predict_slots(model, query, views, model.end(), &times, &opts)?;
    Ok(slots.iter().map(|row| mean_of(row, |p| p.single_nn)).collect())
}

/// Extends a coordinate pool with lags of a projection variable.
pub fn augment_pool(pool: &[Coordinate], projection: &str, lags: &[i64]) -> Result<Vec<Coordinate>> {
    let mut out = pool.to_vec();
    for &lag in lags {
        let c = Coordinate::new(projection, lag)?;
        if out.contains(&c) {
            return Err(Error::InvalidArgument(format!(
                "duplicate coordinate ({projection}, {lag})"
            )));
        }
        out.push(c);
    }
    Ok(out)
}
