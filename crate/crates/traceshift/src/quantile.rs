//! Quantile featurization of delta-time distributions.
//!
//! Delta distributions are multimodal and carry heavy-tailed outliers, so
//! batches are summarized by `q` equidistant sample quantiles instead of
//! moments. The levels are `k/(q+1)` for `k = 1..=q`, with the endpoints 0
//! and 1 excluded: `q = 1` gives the median, `q = 4` gives the 0.2-, 0.4-,
//! 0.6-, and 0.8-quantiles.

use serde::{Deserialize, Serialize};

use crate::delta::ProbePair;
use crate::error::{Error, Result};

/// The `q` equidistant quantile levels `k/(q+1)`, endpoints excluded.
pub fn quantile_levels(q: usize) -> Vec<f64> {
    (1..=q).map(|k| k as f64 / (q + 1) as f64).collect()
}

/// Computes the `q` equidistant sample quantiles of `deltas`.
///
/// Values are linearly interpolated between order statistics of the sorted
/// sample. Requires at least `q` samples, the smallest count for which `q`
/// distinct order statistics exist; fewer yield `NotEnoughData` and the
/// caller skips the pair.
pub fn sample_quantiles(deltas: &[i64], q: usize) -> Result<Vec<f64>> {
    if q == 0 {
        return Err(Error::InvalidArgument("q must be at least 1".into()));
    }
    if deltas.len() < q {
        return Err(Error::NotEnoughData(format!(
            "{} delta samples for q={q} quantiles",
            deltas.len()
        )));
    }
    let mut sorted: Vec<f64> = deltas.iter().map(|&d| d as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let values = quantile_levels(q)
        .into_iter()
        .map(|p| {
            let h = (m - 1) as f64 * p;
            let lo = h.floor() as usize;
            let frac = h - lo as f64;
            if lo + 1 < m {
                sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
            } else {
                sorted[lo]
            }
        })
        .collect();
    Ok(values)
}

/// One batch's quantile summary for one probe pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileVector {
    pub pair: ProbePair,
    pub batch_id: String,
    pub q: usize,
    /// Non-decreasing by construction (monotone quantiles of one sample).
    pub values: Vec<f64>,
}

impl QuantileVector {
    pub fn from_deltas(
        deltas: &[i64],
        q: usize,
        pair: ProbePair,
        batch_id: impl Into<String>,
    ) -> Result<Self> {
        Ok(QuantileVector {
            pair,
            batch_id: batch_id.into(),
            q,
            values: sample_quantiles(deltas, q)?,
        })
    }
}
