use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{RunConfig, SurrogateConfig};
use crate::embedding::sample_views;
use crate::error::{Error, Result};
use crate::inference::{
    diagnose, englobement, min_ensemble_size, Better, DiagnosticSettings, Englobement,
};
use crate::pipeline::{compare_augmentation, AugmentationSettings, Forecaster, TestSpan};
use crate::predictor::PredictionSet;
use crate::seed::derive_seed;
use crate::surrogate::{make_experiment, noise_panel, sample_theta_ball, DynamicsParams};
use crate::timeseries::{format_month, format_value, load_csv, write_csv, CsvSchema, SeriesPanel};

/// Panels a run operates on.
#[derive(Debug, Clone)]
pub struct Data {
    pub model_runs: Vec<SeriesPanel>,
    pub real: SeriesPanel,
    /// Family and real parameters when generated.
    pub surrogate: Option<SurrogateRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurrogateRecord {
    pub family: Vec<DynamicsParams>,
    pub real: DynamicsParams,
    pub obs_noise_sd: f64,
    pub uninformative_models: bool,
}

fn surrogate_params(s: &SurrogateConfig, seed: u64) -> Result<(Vec<DynamicsParams>, DynamicsParams)> {
    let model_rows = s.model_rows.unwrap_or(s.rows);
    let family = sample_theta_ball(
        &s.params(model_rows),
        s.radius,
        s.family_size,
        derive_seed(seed, "theta-ball", 0),
    )?;
    let base = s.params(s.rows);
    let real = match (&s.real_theta, s.real_member) {
        (Some(t), _) => base.with_theta(t.clone()),
        (None, Some(m)) => base.with_theta(family[m].theta.clone()),
        (None, None) => base,
    };
    Ok((family, real))
}

fn generate(s: &SurrogateConfig, seed: u64) -> Result<Data> {
    let (family, real_params) = surrogate_params(s, seed)?;
    let exp = make_experiment(&family, &real_params, s.obs_noise_sd, seed)?;
    let model_runs = if s.uninformative_models {
        exp.model_runs
            .iter()
            .enumerate()
            .map(|(i, run)| noise_panel(run, derive_seed(seed, "noise-run", i as u64)))
            .collect::<Result<_>>()?
    } else {
        exp.model_runs
    };
    Ok(Data {
        model_runs,
        real: exp.real,
        surrogate: Some(SurrogateRecord {
            family,
            real: real_params,
            obs_noise_sd: s.obs_noise_sd,
            uninformative_models: s.uninformative_models,
        }),
    })
}

/// Variables every panel of the run will expose.
fn declared_variables(cfg: &RunConfig) -> Result<Option<Vec<String>>> {
    match &cfg.data.surrogate {
        Some(s) => Ok(Some(s.params(s.rows).variable_names())),
        None => Ok(cfg.data.columns.clone()),
    }
}

fn check_variables(cfg: &RunConfig, variables: &[String], panel: &str) -> Result<()> {
    let has = |v: &str| variables.iter().any(|x| x == v);
    if !has(&cfg.embedding.target) {
        return Err(Error::config(
            "embedding.target",
            format!("`{}` is not a variable of {panel}", cfg.embedding.target),
        ));
    }
    for c in cfg.pool()? {
        if !has(&c.variable) {
            return Err(Error::config(
                "embedding.pool",
                format!("`{}` is not a variable of {panel}", c.variable),
            ));
        }
    }
    Ok(())
}

/// Reads or generates the panels named by the configuration.
pub fn load_data(cfg: &RunConfig) -> Result<Data> {
    if let Some(vars) = declared_variables(cfg)? {
        check_variables(cfg, &vars, "the data")?;
    }
    let data = match (&cfg.data.surrogate, &cfg.data.real) {
        (Some(s), _) => generate(s, cfg.seed)?,
        (None, Some(real)) => {
            let schema = CsvSchema {
                columns: cfg.data.columns.clone(),
            };
            let model_runs = cfg
                .data
                .models
                .iter()
                .map(|p| load_csv(p, &schema))
                .collect::<Result<Vec<_>>>()?;
            Data {
                model_runs,
                real: load_csv(real, &schema)?,
                surrogate: None,
            }
        }
        (None, None) => unreachable!("validated"),
    };
    check_variables(cfg, data.real.variables(), "the real panel")?;
    for (i, run) in data.model_runs.iter().enumerate() {
        check_variables(cfg, run.variables(), &format!("model run {i}"))?;
    }
    Ok(data)
}

fn forecaster(cfg: &RunConfig) -> Result<Forecaster> {
    let views = sample_views(
        &cfg.pool()?,
        &cfg.embedding.target,
        cfg.embedding.lead,
        cfg.embedding.dim,
        cfg.embedding.n_views,
        derive_seed(cfg.seed, "views", 0),
    )
    .map_err(|e| match e {
        Error::TooManyViews { .. } => Error::config("embedding.n_views", e.to_string()),
        e => e,
    })?;
    Ok(Forecaster {
        views,
        k: cfg.k(),
        test: cfg.test_span(),
        standardize: cfg.standardize,
    })
}

/// Maps standardized target values back to the units of `panel`.
fn to_raw(
    cfg: &RunConfig,
    panel: &SeriesPanel,
    span: TestSpan,
    set: &PredictionSet,
) -> Result<PredictionSet> {
    Ok(match target_affine(cfg, panel, span)? {
        Some((a, b)) => set.map_values(|z| a + b * z),
        None => set.clone(),
    })
}

/// `(a, b)` with raw target `= a + b z`, if standardizing.
fn target_affine(cfg: &RunConfig, panel: &SeriesPanel, span: TestSpan) -> Result<Option<(f64, f64)>> {
    if !cfg.standardize {
        return Ok(None);
    }
    let origin = span.origin(panel)?;
    let stats = crate::timeseries::StandardizationStats::fit(panel, Some(origin))?;
    let a = stats.invert_value(&cfg.embedding.target, 0.0)?;
    let b = stats.invert_value(&cfg.embedding.target, 1.0)? - a;
    Ok(Some((a, b)))
}

fn output_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.output).map_err(|source| Error::Io {
        path: cfg.output.clone(),
        source,
    })?;
    Ok(&cfg.output)
}

fn write_file(path: PathBuf, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let io = |source| Error::Io {
        path: path.clone(),
        source,
    };
    let mut w = BufWriter::new(File::create(&path).map_err(io)?);
    body(&mut w)?;
    w.flush().map_err(io)
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("cannot serialize output: {e}")))?;
    write_file(path.clone(), |w| {
        writeln!(w, "{text}").map_err(|source| Error::Io { path, source })
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    models: Vec<ManifestRun<'a>>,
    real: ManifestRun<'a>,
    obs_noise_sd: f64,
    uninformative_models: bool,
}

#[derive(Serialize)]
struct ManifestRun<'a> {
    file: String,
    params: &'a DynamicsParams,
}

pub fn model_file_name(i: usize) -> String {
    format!("model_{i:02}.csv")
}

/// Writes every model run, the real panel and a manifest.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<String> {
    if cfg.data.surrogate.is_none() {
        return Err(Error::config("data.surrogate", "simulate needs a surrogate specification"));
    }
    let data = load_data(cfg)?;
    let rec = data.surrogate.as_ref().expect("generated");
    let dir = output_dir(cfg)?;
    for (i, run) in data.model_runs.iter().enumerate() {
        write_csv(run, dir.join(model_file_name(i)))?;
    }
    write_csv(&data.real, dir.join("real.csv"))?;
    let manifest = Manifest {
        seed: cfg.seed,
        models: rec
            .family
            .iter()
            .enumerate()
            .map(|(i, p)| ManifestRun {
                file: model_file_name(i),
                params: p,
            })
            .collect(),
        real: ManifestRun {
            file: "real.csv".into(),
            params: &rec.real,
        },
        obs_noise_sd: rec.obs_noise_sd,
        uninformative_models: rec.uninformative_models,
    };
    write_json(dir.join("manifest.json"), &manifest)?;
    Ok(format!("wrote {} model runs, the real panel and a manifest", data.model_runs.len()))
}

fn write_predictions(dir: &Path, stem: &str, set: &PredictionSet) -> Result<()> {
    write_file(dir.join(format!("{stem}.csv")), |w| set.write_predictions_csv(w))
}

/// Forecasts the real test span from its own training span.
pub fn cmd_predict(cfg: &RunConfig) -> Result<String> {
    let data = load_data(cfg)?;
    let set = forecaster(cfg)?.own(&data.real)?;
    let raw = to_raw(cfg, &data.real, cfg.test_span(), &set)?;
    let dir = output_dir(cfg)?;
    write_predictions(dir, "predictions", &raw)?;
    write_file(dir.join("ensemble.csv"), |w| raw.write_ensemble_csv(w))?;
    Ok(format!(
        "predictive correlation {} over {} months",
        format_value(raw.correlation()?),
        raw.len()
    ))
}

fn augmentation_settings(cfg: &RunConfig) -> Result<AugmentationSettings> {
    Ok(AugmentationSettings {
        pool: cfg.pool()?,
        target: cfg.embedding.target.clone(),
        lead: cfg.embedding.lead,
        dim: cfg.embedding.dim,
        n_views: cfg.embedding.n_views,
        k: cfg.k(),
        test: cfg.test_span(),
        standardize: cfg.standardize,
        lags: cfg.inference.augmentation_lags.clone(),
        seed: cfg.seed,
    })
}

fn write_populations(path: PathBuf, e: &Englobement) -> Result<()> {
    write_file(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["population", "correlation"])?;
        let p = &e.populations;
        let rows = p
            .sim_sim
            .iter()
            .map(|&c| ("sim_sim", c))
            .chain(p.sim_real.iter().map(|&c| ("sim_real", c)))
            .chain(p.real_real.map(|c| ("real_real", c)))
            .chain(p.augmented.map(|c| ("augmented", c)));
        for (label, c) in rows {
            csv.write_record([label.to_string(), format_value(c)])?;
        }
        csv.flush().map_err(|source| Error::Io {
            path: "populations.csv".into(),
            source,
        })
    })
}

/// Correlation populations and the location test between them.
pub fn cmd_englobe(cfg: &RunConfig) -> Result<String> {
    let data = load_data(cfg)?;
    if data.model_runs.len() < 3 {
        return Err(Error::config(
            "data.models",
            format!("englobement needs >= 3 model runs, got {}", data.model_runs.len()),
        ));
    }
    let f = forecaster(cfg)?;
    let mut result = englobement(&data.model_runs, &data.real, &f, cfg.inference.location_test)?;
    if cfg.inference.augmentation {
        let out = compare_augmentation(&data.model_runs, &data.real, &augmentation_settings(cfg)?)?;
        result.populations.augmented = Some(out.augmented.correlation()?);
    }
    let dir = output_dir(cfg)?;
    write_populations(dir.join("populations.csv"), &result)?;
    write_json(dir.join("englobe.json"), &result)?;
    Ok(format!(
        "englobement p = {} (median sim-sim {}, sim-real {})",
        format_value(result.p_value),
        format_value(result.median_sim_sim),
        format_value(result.median_sim_real)
    ))
}

/// Panel restricted to times up to `end`.
fn truncate(panel: &SeriesPanel, end: i64) -> Result<SeriesPanel> {
    let times: Vec<i64> = panel.times().filter(|&t| t <= end).collect();
    let columns = (0..panel.variables().len())
        .map(|v| times.iter().map(|&t| panel.get(v, t)).collect())
        .collect();
    SeriesPanel::new(panel.variables().to_vec(), panel.start(), columns)
}

/// `(member, observation)` pairs from forecasting the months just before
/// the origin with training data ending `months` earlier.
fn calibration_pairs(
    cfg: &RunConfig,
    f: &Forecaster,
    real: &SeriesPanel,
    months: usize,
) -> Result<Vec<(f64, f64)>> {
    let origin = f.test.origin(real)?;
    let history = truncate(real, origin)?;
    let earlier = Forecaster {
        test: TestSpan::LastN(months),
        ..f.clone()
    };
    let set = earlier
        .own(&history)
        .map_err(|e| e.context("calibration forecasts"))?;
    let set = to_raw(cfg, &history, earlier.test, &set)?;
    let mut pairs = Vec::new();
    for i in 0..set.len() {
        if let Some(o) = set.observed[i] {
            pairs.extend(set.ensemble(i).into_iter().map(|m| (m, o)));
        }
    }
    Ok(pairs)
}

/// Bounds, densities and FDR-screened diagnostics for the real test span.
pub fn cmd_bounds(cfg: &RunConfig) -> Result<String> {
    let needed = min_ensemble_size(cfg.inference.alpha);
    if cfg.embedding.n_views < needed {
        return Err(Error::config(
            "embedding.n_views",
            format!(
                "bounds at alpha = {} need n_views >= {needed}",
                cfg.inference.alpha
            ),
        ));
    }
    let data = load_data(cfg)?;
    let f = forecaster(cfg)?;
    let set = to_raw(cfg, &data.real, cfg.test_span(), &f.own(&data.real)?)?;
    if let Some(i) = (0..set.len()).find(|&i| set.n_views_used(i) < needed) {
        return Err(Error::InsufficientSample {
            needed,
            given: set.n_views_used(i),
        }
        .context(format!(
            "ensemble at {}; raise embedding.n_views",
            format_month(set.times[i])
        )));
    }
    let pairs = match cfg.inference.calibration_months {
        Some(m) => Some(calibration_pairs(cfg, &f, &data.real, m)?),
        None => None,
    };
    let settings = DiagnosticSettings {
        alpha: cfg.inference.alpha,
        fdr_q: cfg.inference.fdr_q,
        durbin_replicates: cfg.inference.durbin_replicates,
        mixture_replicates: cfg.inference.mixture_replicates,
        max_components: cfg.inference.max_components,
        seed: derive_seed(cfg.seed, "diagnostics", 0),
    };
    let report = diagnose(&set, pairs.as_deref(), &settings)?;
    let dir = output_dir(cfg)?;
    write_file(dir.join("bounds.csv"), |w| report.write_bounds_csv(&set, w))?;
    write_file(dir.join("diagnostics.csv"), |w| report.write_csv(w))?;
    for row in &report.rows {
        let name = format!("density_{}.csv", format_month(row.time));
        write_file(dir.join(name), |w| row.write_density_csv(w))?;
    }
    let covered = report
        .rows
        .iter()
        .zip(&set.observed)
        .filter_map(|(r, o)| o.map(|o| r.lower <= o && o <= r.upper))
        .collect::<Vec<_>>();
    let count = |flags: &[bool]| flags.iter().filter(|&&f| f).count();
    Ok(format!(
        "coverage {}/{}; flagged: replication {}, ks {}, mixture {}",
        covered.iter().filter(|&&c| c).count(),
        covered.len(),
        count(&report.replication_flags),
        count(&report.ks_flags),
        count(&report.mixture_flags)
    ))
}

#[derive(Serialize)]
struct CompareSummary {
    better: &'static str,
    p_value: f64,
    statistic: f64,
    exact: bool,
    n_used: usize,
    median_abs_error_augmented: f64,
    median_abs_error_empirical: f64,
    correlation_augmented: f64,
    correlation_empirical: f64,
    projections: Vec<String>,
}

/// Empirical against projection-augmented forecasts of the real panel.
pub fn cmd_compare(cfg: &RunConfig) -> Result<String> {
    let data = load_data(cfg)?;
    if data.model_runs.is_empty() {
        return Err(Error::config("data.models", "augmentation needs at least one model run"));
    }
    let out = compare_augmentation(&data.model_runs, &data.real, &augmentation_settings(cfg)?)?;
    let empirical = to_raw(cfg, &data.real, cfg.test_span(), &out.empirical)?;
    let augmented = to_raw(cfg, &data.real, cfg.test_span(), &out.augmented)?;
    let c = &out.comparison;
    let scale = target_affine(cfg, &data.real, cfg.test_span())?.map_or(1.0, |(_, b)| b.abs());
    let summary = CompareSummary {
        better: match c.better {
            Better::First => "augmented",
            Better::Second => "empirical",
            Better::Neither => "neither",
        },
        p_value: c.test.p_value,
        statistic: c.test.statistic,
        exact: c.test.exact,
        n_used: c.test.n_used,
        median_abs_error_augmented: c.median_abs_error_first * scale,
        median_abs_error_empirical: c.median_abs_error_second * scale,
        correlation_augmented: augmented.correlation()?,
        correlation_empirical: empirical.correlation()?,
        projections: out.projection_names.clone(),
    };
    let dir = output_dir(cfg)?;
    write_predictions(dir, "predictions_empirical", &empirical)?;
    write_predictions(dir, "predictions_augmented", &augmented)?;
    write_json(dir.join("compare.json"), &summary)?;
    Ok(format!(
        "{} better, signed-rank p = {}",
        summary.better,
        format_value(summary.p_value)
    ))
}

/// Validates the configuration and resolves every referenced variable
/// without running a forecast.
pub fn cmd_validate(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    match declared_variables(cfg)? {
        Some(v) => check_variables(cfg, &v, "the data")?,
        None => {
            load_data(cfg)?;
        }
    }
    forecaster(cfg)?;
    Ok("ok".into())
}
