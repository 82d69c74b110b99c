//! Normal-behavior model for one probe pair: the mean and covariance of its
//! training quantile vectors, with a regularized precision matrix for
//! Mahalanobis scoring.
//!
//! Training stacks the quantile vectors of `n` normal batches into an `n x q`
//! matrix, takes the per-quantile mean and the unbiased covariance, and
//! inverts `cov + ridge*I`. The ridge keeps the precision positive definite
//! when the covariance estimate is singular or ill-conditioned (small `n`,
//! nearly constant quantiles); the magnitude actually applied is recorded in
//! `ridge_used` so runs remain auditable.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chi2::chi2_sf;
use crate::delta::ProbePair;
use crate::error::{Error, Result};
use crate::quantile::{sample_quantiles, QuantileVector};

/// Absolute ridge floor in ns².
pub const RIDGE_ABS: f64 = 1e-12;
/// Ridge relative to the mean diagonal of the covariance.
pub const RIDGE_REL: f64 = 1e-9;

/// Trained quantile-mean vector and covariance for one probe pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PairModelWire", into = "PairModelWire")]
pub struct PairModel {
    pair: ProbePair,
    /// Number of training batches that contributed a quantile vector.
    n: usize,
    q: usize,
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    ridge_used: f64,
}

impl PairModel {
    /// Fits a model from the quantile vectors of at least two training
    /// batches, applying the default ridge rule.
    pub fn fit(vectors: &[QuantileVector]) -> Result<PairModel> {
        PairModel::fit_with_ridge(vectors, None)
    }

    /// Fits with an explicit ridge magnitude; `None` selects the default rule
    /// `max(RIDGE_ABS, RIDGE_REL * trace / q)`, escalating tenfold while the
    /// regularized covariance is not positive definite. `Some(0.0)` disables
    /// regularization entirely and fails on singular covariance.
    pub fn fit_with_ridge(vectors: &[QuantileVector], ridge: Option<f64>) -> Result<PairModel> {
        let n = vectors.len();
        if n < 2 {
            return Err(Error::NotEnoughData(format!(
                "fitting a pair model needs at least 2 quantile vectors, got {n}"
            )));
        }
        let pair = vectors[0].pair.clone();
        let q = vectors[0].q;
        for v in vectors {
            if v.pair != pair {
                return Err(Error::InvalidArgument(format!(
                    "mixed pairs in training vectors: {} vs {}",
                    pair, v.pair
                )));
            }
            if v.q != q || v.values.len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "expected q={q}, got a vector with q={} ({} values)",
                    v.q,
                    v.values.len()
                )));
            }
        }

        let mut mean = vec![0.0; q];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(&v.values) {
                *m += x / n as f64;
            }
        }

        let mut covariance = DMatrix::zeros(q, q);
        for v in vectors {
            let centered: Vec<f64> = v.values.iter().zip(&mean).map(|(x, m)| x - m).collect();
            for i in 0..q {
                for j in 0..q {
                    covariance[(i, j)] += centered[i] * centered[j];
                }
            }
        }
        covariance /= (n - 1) as f64;

        let (precision, ridge_used) = invert_regularized(&covariance, ridge)?;
        Ok(PairModel {
            pair,
            n,
            q,
            mean,
            covariance,
            precision,
            ridge_used,
        })
    }

    /// Rebuilds a model from stored moments; the covariance is the source of
    /// truth and the precision is recomputed as `inv(cov + ridge*I)`.
    pub fn from_moments(
        pair: ProbePair,
        n: usize,
        mean: Vec<f64>,
        covariance_row_major: &[f64],
        ridge: f64,
    ) -> Result<PairModel> {
        let q = mean.len();
        if covariance_row_major.len() != q * q {
            return Err(Error::DimensionMismatch(format!(
                "covariance has {} entries, expected {q}x{q}",
                covariance_row_major.len()
            )));
        }
        if ridge.is_nan() || ridge < 0.0 {
            return Err(Error::InvalidArgument(format!("invalid ridge {ridge}")));
        }
        let covariance = DMatrix::from_row_slice(q, q, covariance_row_major);
        let regularized = &covariance + DMatrix::identity(q, q) * ridge;
        let precision = Cholesky::new(regularized)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "covariance for {pair} is not positive definite at ridge {ridge}"
                ))
            })?
            .inverse();
        Ok(PairModel {
            pair,
            n,
            q,
            mean,
            covariance,
            precision,
            ridge_used: ridge,
        })
    }

    pub fn pair(&self) -> &ProbePair {
        &self.pair
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn ridge_used(&self) -> f64 {
        self.ridge_used
    }

    /// Squared Mahalanobis distance of a quantile vector from the training
    /// mean: `(x - mean)' * precision * (x - mean)`.
    pub fn mahalanobis_sq(&self, x: &QuantileVector) -> Result<f64> {
        self.mahalanobis_sq_values(&x.values)
    }

    pub(crate) fn mahalanobis_sq_values(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.q {
            return Err(Error::DimensionMismatch(format!(
                "vector has {} values, model {} expects q={}",
                values.len(),
                self.pair,
                self.q
            )));
        }
        let d = DVector::from_iterator(self.q, values.iter().zip(&self.mean).map(|(x, m)| x - m));
        let d2 = (&d.transpose() * &self.precision * &d)[(0, 0)];
        // the quadratic form with a PD matrix is non-negative up to rounding
        Ok(d2.max(0.0))
    }

    /// Chi-squared p-value of a quantile vector with `q` degrees of freedom.
    pub fn pvalue(&self, x: &QuantileVector) -> Result<f64> {
        chi2_sf(self.mahalanobis_sq(x)?, self.q)
    }

    pub(crate) fn pvalue_values(&self, values: &[f64]) -> Result<f64> {
        chi2_sf(self.mahalanobis_sq_values(values)?, self.q)
    }
}

/// Full scoring pipeline for one test batch's deltas against a fitted model:
/// quantile featurization, Mahalanobis distance, chi-squared tail.
pub fn pair_pvalue(deltas: &[i64], model: &PairModel) -> Result<f64> {
    let values = sample_quantiles(deltas, model.q)?;
    model.pvalue_values(&values)
}

fn invert_regularized(
    covariance: &DMatrix<f64>,
    ridge: Option<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let q = covariance.nrows();
    if let Some(fixed) = ridge {
        if fixed.is_nan() || fixed < 0.0 {
            return Err(Error::InvalidArgument(format!("invalid ridge {fixed}")));
        }
        let reg = covariance + DMatrix::identity(q, q) * fixed;
        let chol = Cholesky::new(reg).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "covariance not positive definite with fixed ridge {fixed}"
            ))
        })?;
        return Ok((chol.inverse(), fixed));
    }

    let mut lambda = RIDGE_ABS.max(RIDGE_REL * covariance.trace() / q as f64);
    for _ in 0..64 {
        let reg = covariance + DMatrix::identity(q, q) * lambda;
        if let Some(chol) = Cholesky::new(reg) {
            return Ok((chol.inverse(), lambda));
        }
        lambda *= 10.0;
    }
    Err(Error::InvalidArgument(
        "covariance could not be regularized to positive definite".into(),
    ))
}

/// Serialized form: pair key, sample count, dimensions, mean, row-major
/// covariance, and the ridge that was applied.
#[derive(Serialize, Deserialize)]
struct PairModelWire {
    pair: ProbePair,
    n: usize,
    q: usize,
    mean: Vec<f64>,
    covariance: Vec<f64>,
    ridge_used: f64,
}

impl From<PairModel> for PairModelWire {
    fn from(model: PairModel) -> Self {
        PairModelWire {
            pair: model.pair,
            n: model.n,
            q: model.q,
            mean: model.mean,
            covariance: model.covariance.transpose().as_slice().to_vec(),
            ridge_used: model.ridge_used,
        }
    }
}

impl TryFrom<PairModelWire> for PairModel {
    type Error = Error;

    fn try_from(wire: PairModelWire) -> Result<PairModel> {
        if wire.mean.len() != wire.q {
            return Err(Error::DimensionMismatch(format!(
                "mean has {} values, expected q={}",
                wire.mean.len(),
                wire.q
            )));
        }
        PairModel::from_moments(
            wire.pair,
            wire.n,
            wire.mean,
            &wire.covariance,
            wire.ridge_used,
        )
    }
}
