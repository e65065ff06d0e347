//! Whether a model family predicts reality as well as it predicts itself.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::ranks::rank_sum_test;
use crate::error::{Error, Result};
use crate::pipeline::Forecaster;
use crate::timeseries::SeriesPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LocationTest {
    #[default]
    RankSum,
    /// Welch two-sample t-test.
    Welch,
}

/// Two-sided location test between two samples.
pub fn location_test(a: &[f64], b: &[f64], kind: LocationTest) -> Result<f64> {
    match kind {
        LocationTest::RankSum => Ok(rank_sum_test(a, b)?.p_value),
        LocationTest::Welch => welch_t_test(a, b),
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            given: a.len().min(b.len()),
        });
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if !(se2 > 0.0) {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationPopulations {
    /// Model `i` trained, model `j != i` predicted, in `(i, j)` order.
    pub sim_sim: Vec<f64>,
    /// Model `i` trained, real panel predicted.
    pub sim_real: Vec<f64>,
    pub real_real: Option<f64>,
    pub augmented: Option<f64>,
}

/// A pairing whose correlation could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairFailure {
    pub population: &'static str,
    pub trained: String,
    pub predicted: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Englobement {
    pub populations: CorrelationPopulations,
    pub p_value: f64,
    pub test: LocationTest,
    pub median_sim_sim: f64,
    pub median_sim_real: f64,
    pub failures: Vec<PairFailure>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) }
}

/// Correlation populations for every ordered model pair and every model
/// against the real panel, plus the real panel predicting itself, and a
/// location test between the sim-sim and sim-real populations.
pub fn englobement(
    model_runs: &[SeriesPanel],
    real: &SeriesPanel,
    forecaster: &Forecaster,
    test: LocationTest,
) -> Result<Englobement> {
    if model_runs.len() < 3 {
        return Err(Error::InsufficientSample {
            needed: 3,
            given: model_runs.len(),
        });
    }
    let m = model_runs.len();
    // Jobs: ordered model pairs, then model -> real.
    let mut jobs: Vec<(usize, Option<usize>)> = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in (0..m).filter(|&j| j != i) {
            jobs.push((i, Some(j)));
        }
    }
    jobs.extend((0..m).map(|i| (i, None)));
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let query = j.map_or(real, |j| &model_runs[j]);
            forecaster.cross(&model_runs[i], query)?.correlation()
        })
        .collect();
    let mut populations = CorrelationPopulations {
        sim_sim: Vec::new(),
        sim_real: Vec::new(),
        real_real: None,
        augmented: None,
    };
    let mut failures = Vec::new();
    for (&(i, j), r) in jobs.iter().zip(results) {
        match (r, j) {
            (Ok(c), Some(_)) => populations.sim_sim.push(c),
            (Ok(c), None) => populations.sim_real.push(c),
            (Err(e), _) => failures.push(PairFailure {
                population: if j.is_some() { "sim_sim" } else { "sim_real" },
                trained: format!("model {i}"),
                predicted: j.map_or("real".to_string(), |j| format!("model {j}")),
                message: e.to_string(),
            }),
        }
    }
    match forecaster.own(real).and_then(|s| s.correlation()) {
        Ok(c) => populations.real_real = Some(c),
        Err(e) => failures.push(PairFailure {
            population: "real_real",
            trained: "real".into(),
            predicted: "real".into(),
            message: e.to_string(),
        }),
    }
    for (name, pop) in [("sim_sim", &populations.sim_sim), ("sim_real", &populations.sim_real)] {
        if pop.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "only {} usable {name} correlations",
                pop.len()
            )));
        }
    }
    let p_value = location_test(&populations.sim_sim, &populations.sim_real, test)?;
    Ok(Englobement {
        median_sim_sim: median(&populations.sim_sim),
        median_sim_real: median(&populations.sim_real),
        populations,
        p_value,
        test,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_matches_reference() {
        // Reference from an independent implementation: t = -1.0954, df = 6.
        let p = welch_t_test(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 5.0]).unwrap();
        let q = welch_t_test(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(q, 1.0);
        assert!((p - P_REF).abs() < 1e-9, "p = {p}");
    }

    const P_REF: f64 = 0.315_333_596_201_229_6;

    #[test]
    fn rank_sum_is_the_default() {
        assert_eq!(LocationTest::default(), LocationTest::RankSum);
        let p = location_test(&[1.0, 2.0], &[3.0, 4.0], LocationTest::RankSum).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
    }
}
