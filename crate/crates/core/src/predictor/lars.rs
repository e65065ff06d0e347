//! Least angle regression and Mallows' Cp step selection.
//!
//! The path is the plain LARS path (no lasso drop step). Columns are centred
//! and scaled to unit norm internally, the response is centred, and every
//! step is reported back on the original scale with its intercept restored.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Coefficients after one LARS step.
#[derive(Debug, Clone, PartialEq)]
pub struct LarsStep {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Variables in the model at this step, in order of entry.
    pub active: Vec<usize>,
}

impl LarsStep {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LarsPath {
    /// Step 0 is the intercept-only model.
    pub steps: Vec<LarsStep>,
    /// Set when a rank-deficient active set stopped the path early.
    pub truncated: bool,
}

struct Centered {
    xs: DMatrix<f64>,
    x_mean: Vec<f64>,
    norms: Vec<f64>,
    alive: Vec<bool>,
    yc: DVector<f64>,
    y_mean: f64,
}

fn center(x: &DMatrix<f64>, y: &DVector<f64>) -> Centered {
    let (n, p) = x.shape();
    let mut xs = x.clone();
    let mut x_mean = vec![0.0; p];
    let mut norms = vec![0.0; p];
    for j in 0..p {
        let mut col = xs.column_mut(j);
        let m = col.sum() / n as f64;
        col.add_scalar_mut(-m);
        x_mean[j] = m;
        norms[j] = col.norm();
    }
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let alive: Vec<bool> = norms.iter().map(|&s| s > 1e-12 * max_norm && s > 0.0).collect();
    for j in 0..p {
        if alive[j] {
            let mut col = xs.column_mut(j);
            col /= norms[j];
        } else {
            xs.column_mut(j).fill(0.0);
        }
    }
    let y_mean = y.sum() / n as f64;
    let yc = y.add_scalar(-y_mean);
    Centered {
        xs,
        x_mean,
        norms,
        alive,
        yc,
        y_mean,
    }
}

impl Centered {
    fn step(&self, beta: &[f64], active: &[usize]) -> LarsStep {
        let coef: Vec<f64> = beta
            .iter()
            .zip(&self.norms)
            .zip(&self.alive)
            .map(|((&b, &s), &a)| if a { b / s } else { 0.0 })
            .collect();
        let intercept =
            self.y_mean - coef.iter().zip(&self.x_mean).map(|(b, m)| b * m).sum::<f64>();
        LarsStep {
            coef,
            intercept,
            active: active.to_vec(),
        }
    }
}

/// Computes the LARS path of `y` on the columns of `x`, truncated at
/// `min(p, n - 2)` steps.
pub fn lars_path(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LarsPath> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, given: n });
    }
    if y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    let cx = center(x, y);
    let max_steps = p.min(n - 2).min(cx.alive.iter().filter(|&&a| a).count());

    let mut beta = vec![0.0; p];
    let mut mu = DVector::<f64>::zeros(n);
    let mut steps = vec![cx.step(&beta, &[])];
    let mut corr = cx.xs.tr_mul(&cx.yc);
    let c0 = (0..p)
        .filter(|&j| cx.alive[j])
        .map(|j| corr[j].abs())
        .fold(0.0, f64::max);
    if max_steps == 0 || !(c0 > 0.0) {
        return Ok(LarsPath {
            steps,
            truncated: false,
        });
    }

    let first = (0..p)
        .filter(|&j| cx.alive[j])
        .fold(None, |best: Option<usize>, j| match best {
            Some(b) if corr[b].abs() >= corr[j].abs() => Some(b),
            _ => Some(j),
        })
        .expect("at least one live column");
    let mut active = vec![first];
    let mut in_active = vec![false; p];
    in_active[first] = true;
    let mut truncated = false;

    loop {
        let big_c = active.iter().map(|&j| corr[j].abs()).fold(0.0, f64::max);
        if big_c <= 1e-12 * c0 {
            break;
        }
        let signs: Vec<f64> = active.iter().map(|&j| corr[j].signum()).collect();
        let mut xa = DMatrix::<f64>::zeros(n, active.len());
        for (col, (&j, &s)) in active.iter().zip(&signs).enumerate() {
            xa.set_column(col, &(cx.xs.column(j) * s));
        }
        let gram = xa.tr_mul(&xa);
        let Some(chol) = gram.clone().cholesky() else {
            truncated = true;
            break;
        };
        let l = chol.l();
        if (0..active.len()).any(|i| l[(i, i)] < 1e-7) {
            truncated = true;
            break;
        }
        let ones = DVector::<f64>::from_element(active.len(), 1.0);
        let g_inv_1 = chol.solve(&ones);
        let a_a = 1.0 / ones.dot(&g_inv_1).sqrt();
        let w = g_inv_1 * a_a;
        let u = &xa * &w;
        let a = cx.xs.tr_mul(&u);

        let full = big_c / a_a;
        let mut gamma = full;
        let mut entering = None;
        if active.len() < max_steps {
            for j in (0..p).filter(|&j| cx.alive[j] && !in_active[j]) {
                for cand in [
                    (big_c - corr[j]) / (a_a - a[j]),
                    (big_c + corr[j]) / (a_a + a[j]),
                ] {
                    if cand > 1e-12 * full && cand < gamma {
                        gamma = cand;
                        entering = Some(j);
                    }
                }
            }
        }

        mu += &u * gamma;
        for (k, &j) in active.iter().enumerate() {
            beta[j] += gamma * signs[k] * w[k];
        }
        corr = cx.xs.tr_mul(&(&cx.yc - &mu));
        steps.push(cx.step(&beta, &active));

        match entering {
            Some(j) => {
                active.push(j);
                in_active[j] = true;
            }
            None => break,
        }
    }
    Ok(LarsPath { steps, truncated })
}

fn rss(step: &LarsStep, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (0..x.nrows())
        .map(|i| {
            let fit = step.intercept
                + (0..x.ncols()).map(|j| step.coef[j] * x[(i, j)]).sum::<f64>();
            (y[i] - fit).powi(2)
        })
        .sum()
}

/// Residual sum of squares of the full least-squares fit with intercept.
pub fn ols_rss(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let n = x.nrows();
    let mut xc = x.clone();
    for j in 0..x.ncols() {
        let mut col = xc.column_mut(j);
        let m = col.sum() / n as f64;
        col.add_scalar_mut(-m);
    }
    let yc = y.add_scalar(-(y.sum() / n as f64));
    let svd = xc.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1.0);
    let b = svd
        .solve(&yc, tol)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((yc - xc * b).norm_squared())
}

/// Mallows' Cp model choice along a LARS path.
#[derive(Debug, Clone, PartialEq)]
pub struct CpSelection {
    pub step: usize,
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Cp per path step; empty when degenerate.
    pub cp: Vec<f64>,
    pub sigma2: f64,
    /// Full model fits perfectly, so Cp is undefined; the last path step is returned.
    pub degenerate: bool,
}

impl CpSelection {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Picks the path step minimising `Cp = RSS/sigma2 - n + 2(d + 1)` with
/// `sigma2 = RSS_full / (n - p - 1)`. Ties go to the earlier (smaller) model.
pub fn cp_select(path: &LarsPath, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<CpSelection> {
    let (n, p) = x.shape();
    if n <= p + 1 {
        return Err(Error::InsufficientSample {
            needed: p + 2,
            given: n,
        });
    }
    let last = path.steps.len() - 1;
    let y_mean = y.sum() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let rss_full = ols_rss(x, y)?;
    let pick = |step: usize, cp: Vec<f64>, sigma2: f64, degenerate: bool| CpSelection {
        step,
        coef: path.steps[step].coef.clone(),
        intercept: path.steps[step].intercept,
        cp,
        sigma2,
        degenerate,
    };
    if !(tss > 0.0) || rss_full <= 1e-20 * tss {
        return Ok(pick(last, Vec::new(), 0.0, true));
    }
    let sigma2 = rss_full / (n - p - 1) as f64;
    let cp: Vec<f64> = path
        .steps
        .iter()
        .map(|s| rss(s, x, y) / sigma2 - n as f64 + 2.0 * (s.active.len() as f64 + 1.0))
        .collect();
    let best = (0..cp.len()).fold(0, |b, j| if cp[j] < cp[b] { j } else { b });
    Ok(pick(best, cp, sigma2, false))
}
