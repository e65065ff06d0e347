//! Run configuration: one JSON file per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::Coordinate;
use crate::error::{Error, Result};
use crate::inference::{min_ensemble_size, LocationTest};
use crate::pipeline::TestSpan;
use crate::surrogate::{DynamicsParams, System};
use crate::timeseries::parse_month;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub data: DataConfig,
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub test: TestConfig,
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default)]
    pub inference: InferenceConfig,
}

/// Either CSV files or a generated surrogate experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub real: Option<PathBuf>,
    #[serde(default)]
    pub models: Vec<PathBuf>,
    /// Columns to read from the CSV files; all when absent.
    pub columns: Option<Vec<String>>,
    pub surrogate: Option<SurrogateConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    #[serde(default = "lorenz63")]
    pub system: System,
    /// Centre of the parameter ball; the system's classical values when absent.
    pub theta0: Option<Vec<f64>>,
    /// Output rows of the real panel.
    pub rows: usize,
    /// Output rows of each model run; `rows` when absent.
    pub model_rows: Option<usize>,
    #[serde(default = "five")]
    pub family_size: usize,
    /// Ball radius relative to each component of `theta0`.
    #[serde(default = "one_percent")]
    pub radius: f64,
    /// Parameters of the real system; `theta0` when absent.
    pub real_theta: Option<Vec<f64>>,
    /// Use this family member's trajectory as the real system.
    pub real_member: Option<usize>,
    #[serde(default)]
    pub obs_noise_sd: f64,
    /// Replace model runs by white noise.
    #[serde(default)]
    pub uninformative_models: bool,
    pub dt: Option<f64>,
    pub burn_in: Option<usize>,
    pub aggregate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub target: String,
    pub lead: u32,
    /// Explicit coordinate pool.
    pub pool: Option<Vec<Coordinate>>,
    /// Alternative to `pool`: these variables at lags `0, -1, ..., -max_lag`.
    pub pool_variables: Option<Vec<String>>,
    pub max_lag: Option<u32>,
    pub dim: usize,
    pub n_views: usize,
    /// Neighbours per local fit; `2 (dim + 1)` when absent.
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub last_n: Option<usize>,
    /// Last training month, `YYYY-MM`.
    pub origin: Option<String>,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            last_n: Some(55),
            origin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_q")]
    pub fdr_q: f64,
    #[serde(default)]
    pub location_test: LocationTest,
    /// Adds the augmented population to englobement output.
    #[serde(default)]
    pub augmentation: bool,
    #[serde(default = "default_lags")]
    pub augmentation_lags: Vec<i64>,
    #[serde(default = "default_durbin")]
    pub durbin_replicates: usize,
    #[serde(default = "default_mixture")]
    pub mixture_replicates: usize,
    #[serde(default = "default_components")]
    pub max_components: usize,
    /// Months before the origin used to recalibrate bounds.
    pub calibration_months: Option<usize>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn yes() -> bool {
    true
}
fn lorenz63() -> System {
    System::Lorenz63
}
fn five() -> usize {
    5
}
fn one_percent() -> f64 {
    0.01
}
fn default_alpha() -> f64 {
    0.1
}
fn default_q() -> f64 {
    0.05
}
fn default_lags() -> Vec<i64> {
    vec![0]
}
fn default_durbin() -> usize {
    crate::inference::DURBIN_REPLICATES
}
fn default_mixture() -> usize {
    crate::inference::MIXTURE_REPLICATES
}
fn default_components() -> usize {
    2
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::config(key, message)
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| bad("(file)", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    /// Checks every constraint that does not need the data.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        match (&d.surrogate, &d.real) {
            (Some(_), Some(_)) => {
                return Err(bad("data", "give either `surrogate` or `real`, not both"))
            }
            (None, None) => return Err(bad("data", "one of `surrogate` or `real` is required")),
            _ => {}
        }
        if d.surrogate.is_some() && !d.models.is_empty() {
            return Err(bad("data.models", "not allowed with `surrogate`"));
        }
        if let Some(s) = &d.surrogate {
            s.validate()?;
        }
        let e = &self.embedding;
        if e.lead < 1 {
            return Err(bad("embedding.lead", "must be >= 1"));
        }
        if e.dim < 1 {
            return Err(bad("embedding.dim", "must be >= 1"));
        }
        if e.n_views < 1 {
            return Err(bad("embedding.n_views", "must be >= 1"));
        }
        match (&e.pool, &e.pool_variables) {
            (Some(_), Some(_)) => {
                return Err(bad("embedding.pool", "give either `pool` or `pool_variables`"))
            }
            (None, None) => return Err(bad("embedding.pool", "a coordinate pool is required")),
            (Some(p), None) => {
                if e.max_lag.is_some() {
                    return Err(bad("embedding.max_lag", "only used with `pool_variables`"));
                }
                if let Some(c) = p.iter().find(|c| c.lag > 0) {
                    return Err(bad("embedding.pool", format!("lag {} must be <= 0", c.lag)));
                }
            }
            (None, Some(v)) => {
                if v.is_empty() {
                    return Err(bad("embedding.pool_variables", "must not be empty"));
                }
            }
        }
        if self.pool()?.len() < e.dim {
            return Err(bad("embedding.dim", "exceeds the pool size"));
        }
        let k = self.k();
        if k < e.dim + 2 {
            return Err(bad("embedding.k", format!("must be >= dim + 2 = {}", e.dim + 2)));
        }
        match (&self.test.last_n, &self.test.origin) {
            (Some(_), Some(_)) => return Err(bad("test", "give either `last_n` or `origin`")),
            (None, None) => return Err(bad("test", "one of `last_n` or `origin` is required")),
            (Some(0), None) => return Err(bad("test.last_n", "must be >= 1")),
            (None, Some(o)) if parse_month(o).is_none() => {
                return Err(bad("test.origin", format!("`{o}` is not YYYY-MM")))
            }
            _ => {}
        }
        let inf = &self.inference;
        if !(inf.alpha > 0.0 && inf.alpha < 1.0) {
            return Err(bad("inference.alpha", "must lie in (0, 1)"));
        }
        if !(inf.fdr_q > 0.0 && inf.fdr_q < 1.0) {
            return Err(bad("inference.fdr_q", "must lie in (0, 1)"));
        }
        if !(2..=3).contains(&inf.max_components) {
            return Err(bad("inference.max_components", "must be 2 or 3"));
        }
        if inf.durbin_replicates == 0 || inf.mixture_replicates == 0 {
            return Err(bad("inference", "bootstrap replicates must be >= 1"));
        }
        if inf.augmentation_lags.is_empty() || inf.augmentation_lags.iter().any(|&l| l > 0) {
            return Err(bad("inference.augmentation_lags", "need one or more lags <= 0"));
        }
        if inf.calibration_months.is_some_and(|c| c < 2) {
            return Err(bad("inference.calibration_months", "must be >= 2"));
        }
        Ok(())
    }

    /// The coordinate pool, expanded from `pool_variables` if needed.
    pub fn pool(&self) -> Result<Vec<Coordinate>> {
        let e = &self.embedding;
        if let Some(p) = &e.pool {
            return Ok(p.clone());
        }
        let vars = e.pool_variables.as_deref().unwrap_or_default();
        let max_lag = i64::from(e.max_lag.unwrap_or(0));
        let mut pool = Vec::with_capacity(vars.len() * (max_lag as usize + 1));
        for v in vars {
            for lag in 0..=max_lag {
                pool.push(Coordinate::new(v.clone(), -lag)?);
            }
        }
        Ok(pool)
    }

    pub fn k(&self) -> usize {
        self.embedding
            .k
            .unwrap_or_else(|| crate::predictor::default_k(self.embedding.dim))
    }

    pub fn test_span(&self) -> TestSpan {
        match (&self.test.last_n, &self.test.origin) {
            (Some(n), _) => TestSpan::LastN(*n),
            (None, Some(o)) => TestSpan::Origin(parse_month(o).expect("validated")),
            (None, None) => unreachable!("validated"),
        }
    }

    /// Rebases relative data paths onto `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(r) = self.data.real.as_mut() {
            join(r);
        }
        self.data.models.iter_mut().for_each(join);
    }

    /// Bounds need at least this many usable views per time.
    pub fn required_views(&self) -> usize {
        min_ensemble_size(self.inference.alpha)
    }
}

impl SurrogateConfig {
    fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("data.surrogate.{k}");
        if !(self.radius >= 0.0) || !self.radius.is_finite() {
            return Err(bad(&key("radius"), format!("must be >= 0, got {}", self.radius)));
        }
        if !(self.obs_noise_sd >= 0.0) || !self.obs_noise_sd.is_finite() {
            return Err(bad(&key("obs_noise_sd"), "must be >= 0"));
        }
        if self.family_size < 1 {
            return Err(bad(&key("family_size"), "must be >= 1"));
        }
        if self.rows < 2 {
            return Err(bad(&key("rows"), "must be >= 2"));
        }
        if self.real_member.is_some() && self.real_theta.is_some() {
            return Err(bad(&key("real_member"), "not allowed with `real_theta`"));
        }
        if self.real_member.is_some_and(|m| m >= self.family_size) {
            return Err(bad(&key("real_member"), "must index a family member"));
        }
        if self.dt.is_some_and(|dt| !(dt > 0.0)) {
            return Err(bad(&key("dt"), "must be > 0"));
        }
        if self.aggregate == Some(0) {
            return Err(bad(&key("aggregate"), "must be >= 1"));
        }
        self.params(self.rows)
            .validate()
            .map_err(|e| bad(&key("theta0"), e.to_string()))?;
        if let Some(t) = &self.real_theta {
            self.params(self.rows)
                .with_theta(t.clone())
                .validate()
                .map_err(|e| bad(&key("real_theta"), e.to_string()))?;
        }
        Ok(())
    }

    /// Dynamics at `theta0` producing `rows` output rows.
    pub fn params(&self, rows: usize) -> DynamicsParams {
        let mut p = match self.system {
            System::Lorenz63 => DynamicsParams::lorenz63(rows),
            System::Lorenz96 { sites } => DynamicsParams::lorenz96(sites, 8.0, rows),
        };
        if let Some(t) = &self.theta0 {
            p.theta = t.clone();
        }
        p.dt = self.dt.unwrap_or(p.dt);
        p.burn_in = self.burn_in.unwrap_or(p.burn_in);
        p.aggregate = self.aggregate.unwrap_or(p.aggregate);
        p.steps = p.burn_in + rows * p.aggregate;
        p
    }
}
