//! Forecasting runs over a held-out test span, shared by the inference
//! procedures and the command line.

use crate::embedding::{sample_views, Coordinate, View};
use crate::error::{Error, Result};
use crate::inference::{paired_improvement_test, PairedComparison};
use crate::predictor::{augment_pool, multiview_predict, projection_series, PredictOptions, PredictionSet};
use crate::seed::derive_seed;
use crate::timeseries::{SeriesPanel, StandardizationStats};

/// Where training ends. Test times run from the month after the origin to
/// the end of the predicted panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSpan {
    LastN(usize),
    Origin(i64),
}

impl TestSpan {
    pub fn origin(&self, panel: &SeriesPanel) -> Result<i64> {
        let origin = match *self {
            TestSpan::LastN(n) => panel.end() - n as i64,
            TestSpan::Origin(o) => o,
        };
        if origin < panel.start() {
            return Err(Error::EmptySplit("train"));
        }
        if origin >= panel.end() {
            return Err(Error::EmptySplit("test"));
        }
        Ok(origin)
    }

    pub fn times(&self, panel: &SeriesPanel) -> Result<Vec<i64>> {
        Ok((self.origin(panel)? + 1..=panel.end()).collect())
    }
}

/// Fixed views and neighbour settings applied identically to every run.
#[derive(Debug, Clone)]
pub struct Forecaster {
    pub views: Vec<View>,
    pub k: usize,
    pub test: TestSpan,
    pub standardize: bool,
}

impl Forecaster {
    /// Training statistics of `panel` up to `origin`, if standardizing.
    pub fn stats(&self, panel: &SeriesPanel, origin: i64) -> Result<Option<StandardizationStats>> {
        self.standardize
            .then(|| StandardizationStats::fit(panel, Some(origin)))
            .transpose()
    }

    /// Predicts the test span of `panel` from its own training span, with
    /// temporally adjacent rows excluded from the neighbour search.
    pub fn own(&self, panel: &SeriesPanel) -> Result<PredictionSet> {
        let origin = self.test.origin(panel)?;
        let z = match self.stats(panel, origin)? {
            Some(s) => s.apply(panel)?,
            None => panel.clone(),
        };
        let opts = PredictOptions {
            k: self.k,
            theiler: true,
        };
        multiview_predict(&z, &z, &self.views, origin, &self.test.times(panel)?, &opts)
    }

    /// Trains on `train` up to its origin and predicts the test span of
    /// `query`. The training panel's statistics scale both panels.
    pub fn cross(&self, train: &SeriesPanel, query: &SeriesPanel) -> Result<PredictionSet> {
        let origin = self.test.origin(train)?;
        let (tz, qz) = match self.stats(train, origin)? {
            Some(s) => (s.apply(train)?, s.apply(query)?),
            None => (train.clone(), query.clone()),
        };
        let opts = PredictOptions {
            k: self.k,
            theiler: false,
        };
        multiview_predict(&tz, &qz, &self.views, origin, &self.test.times(query)?, &opts)
    }
}

/// Settings for comparing an empirical pool with one augmented by
/// projections of the real panel onto model runs.
#[derive(Debug, Clone)]
pub struct AugmentationSettings {
    pub pool: Vec<Coordinate>,
    pub target: String,
    pub lead: u32,
    pub dim: usize,
    pub n_views: usize,
    pub k: usize,
    pub test: TestSpan,
    pub standardize: bool,
    /// Lags at which each projection variable enters the augmented pool.
    pub lags: Vec<i64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct AugmentationOutcome {
    pub empirical: PredictionSet,
    pub augmented: PredictionSet,
    /// First = augmented, second = empirical.
    pub comparison: PairedComparison,
    pub projection_names: Vec<String>,
}

/// Name of the projection variable derived from model run `i`.
pub fn projection_name(i: usize) -> String {
    format!("proj_{i}")
}

/// Forecasts the real test span twice, from the empirical pool and from
/// the pool extended by one projection series per model run, and compares
/// absolute errors time by time.
///
/// Projections come from models trained on their whole run, evaluated on
/// real coordinates, so they carry no real-data information beyond the
/// issue month. All panels share the real panel's training statistics.
pub fn compare_augmentation(
    model_runs: &[SeriesPanel],
    real: &SeriesPanel,
    settings: &AugmentationSettings,
) -> Result<AugmentationOutcome> {
    if model_runs.is_empty() {
        return Err(Error::InvalidArgument("augmentation needs at least one model run".into()));
    }
    let origin = settings.test.origin(real)?;
    let stats = settings
        .standardize
        .then(|| StandardizationStats::fit(real, Some(origin)))
        .transpose()?;
    let scale = |p: &SeriesPanel| match &stats {
        Some(s) => s.apply(p),
        None => Ok(p.clone()),
    };
    let real_z = scale(real)?;
    let empirical_views = sample_views(
        &settings.pool,
        &settings.target,
        settings.lead,
        settings.dim,
        settings.n_views,
        derive_seed(settings.seed, "empirical-views", 0),
    )?;
    let opts = PredictOptions {
        k: settings.k,
        theiler: true,
    };
    let mut augmented_panel = real_z.clone();
    let mut names = Vec::with_capacity(model_runs.len());
    for (i, run) in model_runs.iter().enumerate() {
        let model_z = scale(run)?;
        let proj = projection_series(&model_z, &real_z, &empirical_views, &opts)
            .map_err(|e| e.context(format!("projection onto model run {i}")))?;
        let name = projection_name(i);
        augmented_panel = augmented_panel.with_variable(&name, proj)?;
        names.push(name);
    }
    let mut pool = settings.pool.clone();
    for name in &names {
        pool = augment_pool(&pool, name, &settings.lags)?;
    }
    let augmented_views = sample_views(
        &pool,
        &settings.target,
        settings.lead,
        settings.dim,
        settings.n_views,
        derive_seed(settings.seed, "augmented-views", 0),
    )?;
    let times = settings.test.times(real)?;
    let empirical = multiview_predict(&real_z, &real_z, &empirical_views, origin, &times, &opts)
        .map_err(|e| e.context("empirical pipeline"))?;
    let augmented = multiview_predict(
        &augmented_panel,
        &augmented_panel,
        &augmented_views,
        origin,
        &times,
        &opts,
    )
    .map_err(|e| e.context("augmented pipeline"))?;
    let obs: Vec<f64> = empirical
        .observed
        .iter()
        .zip(&times)
        .map(|(o, &t)| o.ok_or(Error::NoUsableView(t)))
        .collect::<Result<_>>()
        .map_err(|_| Error::InvalidArgument("test span has missing observations".into()))?;
    let comparison = paired_improvement_test(&augmented, &empirical, &obs)?;
    Ok(AugmentationOutcome {
        empirical,
        augmented,
        comparison,
        projection_names: names,
    })
}
