//! Benjamini-Hochberg step-up screening.

use crate::error::{Error, Result};

/// Rejection flags at false discovery rate `q`, in input order.
pub fn bh_fdr(pvals: &[f64], q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("FDR level {q} outside (0, 1)")));
    }
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvals.len();
    let mut sorted = pvals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cutoff = (1..=m)
        .rev()
        .find(|&i| sorted[i - 1] <= i as f64 * q / m as f64)
        .map(|i| sorted[i - 1]);
    Ok(match cutoff {
        Some(c) => pvals.iter().map(|&p| p <= c).collect(),
        None => vec![false; m],
    })
}
