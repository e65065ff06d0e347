//! Views and delay matrices.
//!
//! A [`View`] is one embedding recipe: a list of lagged coordinates plus a
//! target variable `lead` months ahead. Coordinate lags are counted back from
//! the forecast origin `t - lead`, so for target time `t` the coordinate
//! `(v, lag)` reads `v` at `t - lead + lag`. [`Coordinate::from_target_offset`]
//! accepts the equivalent target-relative form (`-18`, `-24`, ...), where the
//! target sits at offset 0.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::timeseries::SeriesPanel;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coordinate {
    pub variable: String,
    /// Months before the forecast origin; always `<= 0`.
    pub lag: i64,
}

impl Coordinate {
    pub fn new(variable: impl Into<String>, lag: i64) -> Result<Self> {
        if lag > 0 {
            return Err(Error::InvalidArgument(format!("lag must be <= 0, got {lag}")));
        }
        Ok(Self {
            variable: variable.into(),
            lag,
        })
    }

    /// Coordinate given as an offset from the target time, which must be at
    /// least `lead` months in the past.
    pub fn from_target_offset(variable: impl Into<String>, offset: i64, lead: u32) -> Result<Self> {
        let lead = i64::from(lead);
        if offset > -lead {
            return Err(Error::InvalidArgument(format!(
                "target offset {offset} is less than {lead} months before the target"
            )));
        }
        Self::new(variable, offset + lead)
    }

    /// Offset of this coordinate relative to the target time.
    pub fn target_offset(&self, lead: u32) -> i64 {
        self.lag - i64::from(lead)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct View {
    coords: Vec<Coordinate>,
    target: String,
    lead: u32,
}

impl View {
    pub fn new(coords: Vec<Coordinate>, target: impl Into<String>, lead: u32) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("a view needs at least one coordinate".into()));
        }
        if lead < 1 {
            return Err(Error::InvalidArgument("lead must be >= 1".into()));
        }
        let mut seen = HashSet::new();
        for c in &coords {
            if c.lag > 0 {
                return Err(Error::InvalidArgument(format!("lag must be <= 0, got {}", c.lag)));
            }
            if !seen.insert(c) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate coordinate ({}, {})",
                    c.variable, c.lag
                )));
            }
        }
        Ok(Self {
            coords,
            target: target.into(),
            lead,
        })
    }

    pub fn coords(&self) -> &[Coordinate] {
        &self.coords
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn lead(&self) -> u32 {
        self.lead
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Deepest total offset, `lead + max(-lag)`: the span from the oldest
    /// coordinate to the target.
    pub fn depth(&self) -> i64 {
        i64::from(self.lead) + self.coords.iter().map(|c| -c.lag).max().unwrap_or(0)
    }

    fn resolve(&self, panel: &SeriesPanel) -> Result<(usize, Vec<(usize, i64)>)> {
        let target = panel.index_of(&self.target)?;
        let coords = self
            .coords
            .iter()
            .map(|c| Ok((panel.index_of(&c.variable)?, c.target_offset(self.lead))))
            .collect::<Result<_>>()?;
        Ok((target, coords))
    }
}

/// Coordinate vector of `view` for target time `t`, whether or not the
/// target itself is observed. `None` if any coordinate is absent.
pub fn query_vector(panel: &SeriesPanel, view: &View, t: i64) -> Result<Option<Vec<f64>>> {
    let (_, coords) = view.resolve(panel)?;
    Ok(coords.iter().map(|&(v, off)| panel.get(v, t + off)).collect())
}

/// One row per complete target time: `(time, X, Y)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix {
    view: View,
    times: Vec<i64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl DelayMatrix {
    /// Builds a matrix directly from rows; intended for tests and examples.
    pub fn from_rows(view: View, rows: Vec<(i64, Vec<f64>, f64)>) -> Result<Self> {
        let dim = view.dim();
        let mut m = Self {
            view,
            times: Vec::with_capacity(rows.len()),
            x: Vec::with_capacity(rows.len() * dim),
            y: Vec::with_capacity(rows.len()),
        };
        for (t, x, y) in rows {
            if x.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "row of dimension {} for a view of dimension {dim}",
                    x.len()
                )));
            }
            if m.times.last().is_some_and(|&last| t <= last) {
                return Err(Error::InvalidArgument("row times must increase".into()));
            }
            m.times.push(t);
            m.x.extend(x);
            m.y.push(y);
        }
        Ok(m)
    }

    pub fn view(&self) -> &View {
        &self.view
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.view.dim()
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn time(&self, row: usize) -> i64 {
        self.times[row]
    }

    pub fn x(&self, row: usize) -> &[f64] {
        let d = self.dim();
        &self.x[row * d..(row + 1) * d]
    }

    pub fn y(&self, row: usize) -> f64 {
        self.y[row]
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    /// Rows whose target time satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(i64) -> bool) -> Self {
        let d = self.dim();
        let mut out = Self {
            view: self.view.clone(),
            times: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
        };
        for (i, &t) in self.times.iter().enumerate() {
            if keep(t) {
                out.times.push(t);
                out.x.extend_from_slice(&self.x[i * d..(i + 1) * d]);
                out.y.push(self.y[i]);
            }
        }
        out
    }

    /// Debug export: `target_time,x1..xE,y`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["target_time".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        header.push("y".into());
        wtr.write_record(&header)?;
        for row in 0..self.len() {
            let mut rec = vec![self.times[row].to_string()];
            rec.extend(self.x(row).iter().map(|v| crate::timeseries::format_value(*v)));
            rec.push(crate::timeseries::format_value(self.y[row]));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|source| Error::Io {
            path: "<csv writer>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Shifts the `(X, Y)` vector of `view` through the panel, keeping only
/// complete rows.
pub fn build_delay_matrix(panel: &SeriesPanel, view: &View) -> Result<DelayMatrix> {
    let (target, coords) = view.resolve(panel)?;
    let mut m = DelayMatrix {
        view: view.clone(),
        times: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
    };
    let mut row = Vec::with_capacity(coords.len());
    for t in panel.times() {
        let Some(y) = panel.get(target, t) else {
            continue;
        };
        row.clear();
        row.extend(coords.iter().map_while(|&(v, off)| panel.get(v, t + off)));
        if row.len() == coords.len() {
            m.times.push(t);
            m.x.extend_from_slice(&row);
            m.y.push(y);
        }
    }
    if m.is_empty() {
        return Err(Error::EmptyDelayMatrix);
    }
    Ok(m)
}

/// Number of `k`-subsets of an `n`-set.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Draws `n_views` pairwise distinct uniformly random `dim`-subsets of `pool`.
///
/// Coordinates within a view keep their pool order.
pub fn sample_views(
    pool: &[Coordinate],
    target: &str,
    lead: u32,
    dim: usize,
    n_views: usize,
    seed: u64,
) -> Result<Vec<View>> {
    if dim < 1 || dim > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "view dimension {dim} must be in 1..={}",
            pool.len()
        )));
    }
    if n_views < 1 {
        return Err(Error::InvalidArgument("n_views must be >= 1".into()));
    }
    let available = binomial(pool.len(), dim);
    if n_views as u128 > available {
        return Err(Error::TooManyViews {
            requested: n_views,
            available,
        });
    }
    let mut rng = seed::sub_rng(seed, "views", 0);
    let subsets: Vec<Vec<usize>> = if available <= 4 * n_views as u128 {
        let mut all = combinations(pool.len(), dim);
        all.shuffle(&mut rng);
        all.truncate(n_views);
        all
    } else {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(n_views);
        while out.len() < n_views {
            let mut s = index::sample(&mut rng, pool.len(), dim).into_vec();
            s.sort_unstable();
            if seen.insert(s.clone()) {
                out.push(s);
            }
        }
        out
    };
    subsets
        .into_iter()
        .map(|s| View::new(s.into_iter().map(|i| pool[i].clone()).collect(), target, lead))
        .collect()
}

/// Splits at a forecast origin: training rows have every component at or
/// before `origin`, test rows have their target after it.
pub fn split_by_origin(matrix: &DelayMatrix, origin: i64) -> Result<(DelayMatrix, DelayMatrix)> {
    // The target is the newest component of a row.
    let train = matrix.filter(|t| t <= origin);
    let test = matrix.filter(|t| t > origin);
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coord(v: &str, lag: i64) -> Coordinate {
        Coordinate::new(v, lag).unwrap()
    }

    fn ramp_panel(n: usize) -> SeriesPanel {
        SeriesPanel::from_columns(
            vec!["a".into(), "b".into()],
            100,
            vec![
                (0..n).map(|i| i as f64).collect(),
                (0..n).map(|i| 10.0 * i as f64).collect(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn one_lag_zero_coordinate_lead_one() {
        let view = View::new(vec![coord("a", 0)], "a", 1).unwrap();
        let m = build_delay_matrix(&ramp_panel(5), &view).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.x(0), &[0.0]);
        assert_eq!(m.y(0), 1.0);
        assert_eq!(m.time(0), 101);
    }

    #[test]
    fn worked_lag_example_row_count() {
        let n = 200;
        let panel = SeriesPanel::from_columns(
            vec!["temp".into(), "mei".into(), "ocean".into(), "precip".into()],
            0,
            vec![vec![1.0; n], vec![2.0; n], vec![3.0; n], vec![4.0; n]],
        )
        .unwrap();
        let offsets = [
            ("temp", -18),
            ("temp", -24),
            ("mei", -20),
            ("mei", -22),
            ("mei", -26),
            ("ocean", -18),
            ("ocean", -19),
            ("ocean", -25),
        ];
        let coords = offsets
            .iter()
            .map(|&(v, o)| Coordinate::from_target_offset(v, o, 18).unwrap())
            .collect();
        let view = View::new(coords, "precip", 18).unwrap();
        assert_eq!(view.depth(), 26);
        let m = build_delay_matrix(&panel, &view).unwrap();
        assert_eq!(m.len(), n - 26);
    }

    #[test]
    fn missing_cell_drops_exactly_one_row() {
        let mut col: Vec<Option<f64>> = (0..10).map(|i| Some(i as f64)).collect();
        col[4] = None;
        let target: Vec<Option<f64>> = (0..10).map(|i| Some(i as f64)).collect();
        let panel = SeriesPanel::new(vec!["x".into(), "y".into()], 0, vec![col, target]).unwrap();
        let view = View::new(vec![coord("x", 0)], "y", 2).unwrap();
        let m = build_delay_matrix(&panel, &view).unwrap();
        assert_eq!(m.len(), 7);
        assert!(!m.times().contains(&6));
    }

    #[test]
    fn unknown_variable_and_empty_matrix() {
        let view = View::new(vec![coord("zz", 0)], "a", 1).unwrap();
        assert!(matches!(
            build_delay_matrix(&ramp_panel(5), &view),
            Err(Error::UnknownVariable(_))
        ));
        let deep = View::new(vec![coord("a", -10)], "a", 1).unwrap();
        assert!(matches!(
            build_delay_matrix(&ramp_panel(5), &deep),
            Err(Error::EmptyDelayMatrix)
        ));
    }

    #[test]
    fn view_validation() {
        assert!(View::new(vec![], "a", 1).is_err());
        assert!(View::new(vec![coord("a", 0)], "a", 0).is_err());
        assert!(View::new(vec![coord("a", 0), coord("a", 0)], "a", 1).is_err());
        assert!(Coordinate::new("a", 1).is_err());
        assert!(Coordinate::from_target_offset("a", -17, 18).is_err());
    }

    #[test]
    fn full_pool_is_the_only_view() {
        let pool = vec![coord("a", 0), coord("a", -1), coord("b", 0)];
        let views = sample_views(&pool, "a", 1, 3, 1, 5).unwrap();
        assert_eq!(views.len(), 1);
        assert_eq!(views[0].coords(), &pool[..]);
    }

    #[test]
    fn view_sampling_is_deterministic() {
        let pool: Vec<_> = (0..10).map(|i| coord("a", -i)).collect();
        let a = sample_views(&pool, "a", 1, 3, 50, 11).unwrap();
        let b = sample_views(&pool, "a", 1, 3, 50, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_views(&pool, "a", 1, 3, 50, 12).unwrap());
    }

    #[test]
    fn exhausting_the_pool_enumerates_every_subset() {
        let pool: Vec<_> = (0..6).map(|i| coord("a", -i)).collect();
        let views = sample_views(&pool, "a", 1, 3, 20, 3).unwrap();
        let distinct: HashSet<_> = views.iter().map(|v| v.coords().to_vec()).collect();
        assert_eq!(distinct.len(), 20);
        assert_eq!(binomial(6, 3), 20);
        match sample_views(&pool, "a", 1, 3, 21, 3).unwrap_err() {
            Error::TooManyViews {
                requested,
                available,
            } => assert_eq!((requested, available), (21, 20)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_has_no_leakage() {
        let view = View::new(vec![coord("a", 0), coord("b", -3)], "a", 18).unwrap();
        let m = build_delay_matrix(&ramp_panel(150), &view).unwrap();
        let origin = m.time(60);
        let (train, test) = split_by_origin(&m, origin).unwrap();
        assert_eq!(train.len(), 61);
        assert_eq!(train.len() + test.len(), m.len());
        assert!(train.times().iter().all(|&t| t <= origin));
        for row in 0..test.len() {
            let t = test.time(row);
            assert!(t > origin);
            for c in view.coords() {
                assert!(t + c.target_offset(18) <= t - 18);
            }
        }
        // A test row targeting origin + 1 reads nothing newer than origin - 17.
        assert!(origin + 1 + view.coords()[0].target_offset(18) <= origin - 17);
        assert!(matches!(
            split_by_origin(&m, m.time(m.len() - 1)),
            Err(Error::EmptySplit("test"))
        ));
    }
}
