//! Wilcoxon rank-sum and signed-rank tests.
//!
//! Exact null distributions are counted by dynamic programming over doubled
//! mid-ranks, which are integers even with ties, so the tail comparison is
//! exact. Large samples use the normal approximation with tie and continuity
//! corrections.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::predictor::PredictionSet;

/// Largest pooled size for which the rank-sum test enumerates by default.
pub const RANK_SUM_EXACT_MAX: usize = 12;
/// Largest number of nonzero differences for the exact signed-rank test.
pub const SIGNED_RANK_EXACT_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Exact below the size threshold, normal approximation above.
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTest {
    /// Rank sum of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedRankTest {
    /// Sum of ranks of the positive differences.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
    pub n_used: usize,
    pub n_zero: usize,
    /// Every difference was zero; `p_value` is 1.
    pub all_zero: bool,
}

pub(crate) fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Mid-ranks (1-based) doubled, plus the tie-group sizes.
fn doubled_midranks(values: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, doubled: (i+1 + j+1)
        let r2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = r2;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

fn tie_term(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) test.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankTest> {
    rank_sum_test_with(a, b, Method::Auto)
}

pub fn rank_sum_test_with(a: &[f64], b: &[f64], method: Method) -> Result<RankTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            given: a.len().min(b.len()),
        });
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let na = a.len();
    let (ranks, ties) = doubled_midranks(&pooled);
    let w2: u64 = ranks[..na].iter().sum();
    let statistic = w2 as f64 / 2.0;
    let exact = match method {
        Method::Auto => n <= RANK_SUM_EXACT_MAX,
        Method::Exact => true,
        Method::Normal => false,
    };
    if exact {
        // counts[j][s]: subsets of size j with doubled rank sum s.
        let max_sum: usize = ranks.iter().map(|&r| r as usize).sum();
        let mut counts = vec![vec![0f64; max_sum + 1]; na + 1];
        counts[0][0] = 1.0;
        for &r in &ranks {
            let r = r as usize;
            for j in (1..=na).rev() {
                for s in (r..=max_sum).rev() {
                    counts[j][s] += counts[j - 1][s - r];
                }
            }
        }
        let mean2 = (na * (n + 1)) as i64;
        let obs = (w2 as i64 - mean2).abs();
        let total: f64 = counts[na].iter().sum();
        let tail: f64 = counts[na]
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s as i64 - mean2).abs() >= obs)
            .map(|(_, c)| c)
            .sum();
        return Ok(RankTest {
            statistic,
            p_value: (tail / total).min(1.0),
            exact: true,
        });
    }
    let (na_f, nb_f, n_f) = (na as f64, b.len() as f64, n as f64);
    let mean = na_f * (n_f + 1.0) / 2.0;
    let var = na_f * nb_f / 12.0 * ((n_f + 1.0) - tie_term(&ties) / (n_f * (n_f - 1.0)));
    let p_value = if var > 0.0 {
        let z = ((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * normal_sf(z)).min(1.0)
    } else {
        1.0
    };
    Ok(RankTest {
        statistic,
        p_value,
        exact: false,
    })
}

/// Two-sided Wilcoxon signed-rank test. Zero differences are dropped.
pub fn signed_rank_test(diffs: &[f64]) -> Result<SignedRankTest> {
    signed_rank_test_with(diffs, Method::Auto)
}

pub fn signed_rank_test_with(diffs: &[f64], method: Method) -> Result<SignedRankTest> {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n_zero = diffs.len() - nonzero.len();
    let n = nonzero.len();
    if n == 0 && !diffs.is_empty() {
        return Ok(SignedRankTest {
            statistic: 0.0,
            p_value: 1.0,
            exact: true,
            n_used: 0,
            n_zero,
            all_zero: true,
        });
    }
    if n < 3 {
        return Err(Error::InsufficientSample { needed: 3, given: n });
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = doubled_midranks(&abs);
    let t2: u64 = ranks
        .iter()
        .zip(&nonzero)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&r, _)| r)
        .sum();
    let statistic = t2 as f64 / 2.0;
    let exact = match method {
        Method::Auto => n <= SIGNED_RANK_EXACT_MAX,
        Method::Exact => true,
        Method::Normal => false,
    };
    let p_value = if exact {
        let max_sum: usize = ranks.iter().map(|&r| r as usize).sum();
        let mut counts = vec![0f64; max_sum + 1];
        counts[0] = 1.0;
        for &r in &ranks {
            let r = r as usize;
            for s in (r..=max_sum).rev() {
                counts[s] += counts[s - r];
            }
        }
        // Doubled mean of T+ is half the doubled total.
        let total2 = max_sum as i64;
        let obs = (2 * t2 as i64 - total2).abs();
        let tail: f64 = counts
            .iter()
            .enumerate()
            .filter(|(s, _)| (2 * *s as i64 - total2).abs() >= obs)
            .map(|(_, c)| c)
            .sum();
        (tail / 2f64.powi(n as i32)).min(1.0)
    } else {
        let n_f = n as f64;
        let mean = n_f * (n_f + 1.0) / 4.0;
        let var = n_f * (n_f + 1.0) * (2.0 * n_f + 1.0) / 24.0 - tie_term(&ties) / 48.0;
        if var > 0.0 {
            let z = ((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
            (2.0 * normal_sf(z)).min(1.0)
        } else {
            1.0
        }
    };
    Ok(SignedRankTest {
        statistic,
        p_value,
        exact,
        n_used: n,
        n_zero,
        all_zero: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Better {
    First,
    Second,
    Neither,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub test: SignedRankTest,
    /// Which prediction set had the smaller median absolute error.
    pub better: Better,
    pub median_abs_error_first: f64,
    pub median_abs_error_second: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Signed-rank test on `|obs - a_t| - |obs - b_t|` over matched times.
pub fn paired_improvement_test(
    first: &PredictionSet,
    second: &PredictionSet,
    obs: &[f64],
) -> Result<PairedComparison> {
    if first.times != second.times {
        return Err(Error::InvalidArgument("prediction times differ".into()));
    }
    if obs.len() != first.len() {
        return Err(Error::InvalidArgument(format!(
            "{} observations for {} prediction times",
            obs.len(),
            first.len()
        )));
    }
    let err_a: Vec<f64> = first.multiview_mean.iter().zip(obs).map(|(p, o)| (o - p).abs()).collect();
    let err_b: Vec<f64> = second.multiview_mean.iter().zip(obs).map(|(p, o)| (o - p).abs()).collect();
    let diffs: Vec<f64> = err_a.iter().zip(&err_b).map(|(a, b)| a - b).collect();
    let test = signed_rank_test(&diffs)?;
    let (ma, mb) = (median(&err_a), median(&err_b));
    let better = if test.all_zero || ma == mb {
        Better::Neither
    } else if ma < mb {
        Better::First
    } else {
        Better::Second
    };
    Ok(PairedComparison {
        test,
        better,
        median_abs_error_first: ma,
        median_abs_error_second: mb,
    })
}
