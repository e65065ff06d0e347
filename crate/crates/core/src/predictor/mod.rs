//! Nearest-neighbour local linear prediction and multiview averaging.

mod lars;
mod multiview;

pub use lars::{cp_select, lars_path, ols_rss, CpSelection, LarsPath, LarsStep};
pub use multiview::{
    augment_pool, multiview_predict, projection_series, PredictOptions, PredictionSet,
    ViewPrediction,
};

use nalgebra::{DMatrix, DVector};

use crate::embedding::DelayMatrix;
use crate::error::{Error, Result};

/// The `k` nearest training rows, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

/// Exact Euclidean k-nearest-neighbour search. Equal distances rank the
/// earlier target time first.
pub fn knn(train: &DelayMatrix, query: &[f64], k: usize) -> Result<NeighborSet> {
    knn_where(train, query, k, |_| true)
}

/// As [`knn`], restricted to rows for which `eligible(row)` holds.
pub fn knn_where(
    train: &DelayMatrix,
    query: &[f64],
    k: usize,
    eligible: impl Fn(usize) -> bool,
) -> Result<NeighborSet> {
    if query.len() != train.dim() {
        return Err(Error::InvalidArgument(format!(
            "query of dimension {} for a view of dimension {}",
            query.len(),
            train.dim()
        )));
    }
    let mut scored: Vec<(f64, usize)> = (0..train.len())
        .filter(|&i| eligible(i))
        .map(|i| {
            let d2 = train
                .x(i)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            (d2, i)
        })
        .collect();
    if k == 0 || k > scored.len() {
        return Err(Error::NotEnoughRows {
            needed: k.max(1),
            available: scored.len(),
        });
    }
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);
    Ok(NeighborSet {
        indices: scored.iter().map(|s| s.1).collect(),
        distances: scored.iter().map(|s| s.0.sqrt()).collect(),
    })
}

/// Default neighbourhood size for a view of dimension `dim`.
pub fn default_k(dim: usize) -> usize {
    2 * (dim + 1)
}

/// Fits LARS + Cp on the given neighbours and evaluates at `query`.
pub fn local_linear_fit(train: &DelayMatrix, neighbors: &NeighborSet, query: &[f64]) -> Result<f64> {
    let k = neighbors.indices.len();
    let dim = train.dim();
    if k < dim + 2 {
        return Err(Error::InvalidArgument(format!(
            "local linear fit needs k >= dim + 2 = {}, got {k}",
            dim + 2
        )));
    }
    let x = DMatrix::from_fn(k, dim, |r, c| train.x(neighbors.indices[r])[c]);
    let y = DVector::from_fn(k, |r, _| train.y(neighbors.indices[r]));
    let path = lars_path(&x, &y)?;
    Ok(cp_select(&path, &x, &y)?.predict(query))
}

/// Local linear prediction from the `k` nearest neighbours of `query`.
pub fn local_linear_predict(train: &DelayMatrix, query: &[f64], k: usize) -> Result<f64> {
    if k < train.dim() + 2 {
        return Err(Error::InvalidArgument(format!(
            "local linear fit needs k >= dim + 2 = {}, got {k}",
            train.dim() + 2
        )));
    }
    let neighbors = knn(train, query, k)?;
    local_linear_fit(train, &neighbors, query)
}

/// Target value of the single nearest neighbour.
pub fn single_nn_predict(train: &DelayMatrix, query: &[f64]) -> Result<f64> {
    let nn = knn(train, query, 1)?;
    Ok(train.y(nn.indices[0]))
}

/// Pearson correlation between predictions and observations.
pub fn predictive_correlation(pred: &[f64], obs: &[f64]) -> Result<f64> {
    if pred.len() != obs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} observations",
            pred.len(),
            obs.len()
        )));
    }
    if pred.len() < 3 {
        return Err(Error::InsufficientSample {
            needed: 3,
            given: pred.len(),
        });
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mo = obs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, o) in pred.iter().zip(obs) {
        sxy += (p - mp) * (o - mo);
        sxx += (p - mp) * (p - mp);
        syy += (o - mo) * (o - mo);
    }
    if !(sxx > 0.0) || !(syy > 0.0) {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Coordinate, View};

    fn matrix(rows: Vec<(i64, Vec<f64>, f64)>) -> DelayMatrix {
        let dim = rows[0].1.len();
        let coords = (0..dim)
            .map(|i| Coordinate::new("x", -(i as i64)).unwrap())
            .collect();
        DelayMatrix::from_rows(View::new(coords, "y", 1).unwrap(), rows).unwrap()
    }

    #[test]
    fn self_query_is_first_at_distance_zero() {
        let m = matrix(vec![(0, vec![0.0, 1.0], 1.0), (1, vec![2.0, 2.0], 2.0)]);
        let nn = knn(&m, &[2.0, 2.0], 2).unwrap();
        assert_eq!(nn.indices, vec![1, 0]);
        assert_eq!(nn.distances[0], 0.0);
    }

    #[test]
    fn one_dimensional_neighbours() {
        let m = matrix(vec![(0, vec![0.0], 0.0), (1, vec![1.0], 0.0), (2, vec![3.0], 0.0)]);
        let nn = knn(&m, &[0.9], 2).unwrap();
        assert_eq!(nn.indices, vec![1, 0]);
        assert!((nn.distances[0] - 0.1).abs() < 1e-12);
        assert!((nn.distances[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ties_prefer_earlier_rows() {
        let m = matrix(vec![(0, vec![-1.0], 0.0), (5, vec![1.0], 0.0), (9, vec![-1.0], 0.0)]);
        assert_eq!(knn(&m, &[0.0], 3).unwrap().indices, vec![0, 1, 2]);
    }

    #[test]
    fn too_many_neighbours_is_rejected() {
        let m = matrix(vec![(0, vec![0.0], 0.0)]);
        assert!(matches!(knn(&m, &[0.0], 2), Err(Error::NotEnoughRows { .. })));
    }

    #[test]
    fn constant_response_predicts_the_constant() {
        let rows = (0..10).map(|i| (i, vec![i as f64, (i * i) as f64 * 0.1], 4.5)).collect();
        let m = matrix(rows);
        let v = local_linear_predict(&m, &[3.3, 1.0], 8).unwrap();
        assert!((v - 4.5).abs() < 1e-12);
    }

    #[test]
    fn affine_response_is_reproduced() {
        let rows = (0..20)
            .map(|i| {
                let a = (i as f64 * 0.37).sin();
                let b = (i as f64 * 0.91).cos();
                (i, vec![a, b], 1.5 - 2.0 * a + 0.25 * b)
            })
            .collect();
        let m = matrix(rows);
        let q = [0.1, -0.4];
        let v = local_linear_predict(&m, &q, 10).unwrap();
        assert!((v - (1.5 - 0.2 - 0.1)).abs() < 1e-8);
    }

    #[test]
    fn local_linear_requires_spare_neighbours() {
        let m = matrix((0..10).map(|i| (i, vec![i as f64], 0.0)).collect());
        assert!(local_linear_predict(&m, &[0.0], 2).is_err());
    }

    #[test]
    fn single_nn_returns_a_training_value() {
        let m = matrix(vec![(0, vec![0.0], 10.0), (1, vec![1.0], 20.0)]);
        assert_eq!(single_nn_predict(&m, &[0.4]).unwrap(), 10.0);
        assert_eq!(single_nn_predict(&m, &[1.0]).unwrap(), 20.0);
    }

    #[test]
    fn correlation_cases() {
        let obs = [1.0, 2.0, 4.0];
        assert!((predictive_correlation(&obs, &obs).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = obs.iter().map(|v| -v).collect();
        assert!((predictive_correlation(&neg, &obs).unwrap() + 1.0).abs() < 1e-15);
        // sxy = 3, sxx = 2, syy = 14/3
        let r = predictive_correlation(&[1.0, 2.0, 3.0], &obs).unwrap();
        assert!((r - 3.0 / (2.0f64 * 14.0 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r - 0.981_980_506).abs() < 1e-8);
        assert!(matches!(
            predictive_correlation(&[1.0, 1.0, 1.0], &obs),
            Err(Error::UndefinedCorrelation)
        ));
    }
}
