//! Outlier scores.
//!
//! The main scorer is the weighted Mahalanobis score: a row is assigned to
//! its nearest cluster center under the model's metric, and its score is the
//! Mahalanobis distance to that center divided by the row's weight. Dividing
//! by the weight is what makes the detector pattern-aware — a rare pattern
//! (small weight) amplifies the distance, a common pattern dampens it.
//!
//! Two model-free scorers round out the module: a DBSCAN-style density flag
//! (too few neighbors within `eps`) and an angle-based score where a small
//! variance of the angles to all other point pairs marks a point that sees
//! the rest of the data from outside.

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterModel, MetricMode};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::weighting::Weights;

/// Finite, non-negative per-row outlier scores. Higher means more outlying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector {
    values: Vec<f64>,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("scoring", "score vector is empty"));
        }
        for (i, &s) in values.iter().enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::numeric(
                    "scoring",
                    format!("score for row {} must be finite and non-negative, got {s}", i + 1),
                ));
            }
        }
        Ok(ScoreVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Mahalanobis distance of `x` from `center` under covariance `cov`
/// (rows of a d x d matrix), computed through a Cholesky solve.
pub fn mahalanobis_distance(x: &[f64], center: &[f64], cov: &[Vec<f64>]) -> Result<f64> {
    if x.len() != center.len() || cov.len() != x.len() {
        return Err(Error::data(
            "scoring",
            format!(
                "dimension mismatch: point has {}, center {}, covariance {}",
                x.len(),
                center.len(),
                cov.len()
            ),
        ));
    }
    let factor = SpdFactor::new(cov)?;
    let diff: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    Ok(factor.squared_mahalanobis(&diff).sqrt())
}

/// Weighted Mahalanobis scores for every row of `data` under `model`.
pub fn score(data: &Dataset, weights: &Weights, model: &ClusterModel) -> Result<ScoreVector> {
    model.validate_against(data)?;
    data.require_finite("scoring")?;
    if weights.len() != data.n() {
        return Err(Error::data("scoring", format!("{} weights for {} rows", weights.len(), data.n())));
    }
    let factors: Vec<SpdFactor> = model
        .covariances
        .iter()
        .map(|cov| SpdFactor::new(cov))
        .collect::<Result<_>>()?;

    let d = data.dims();
    let mut diff = vec![0.0f64; d];
    let mut values = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let row = data.row(i);
        let mut best_sq = f64::INFINITY;
        let mut best_j = 0;
        for (j, center) in model.centers.iter().enumerate() {
            let dist_sq = match model.metric {
                MetricMode::Euclidean => row.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum(),
                MetricMode::Mahalanobis => {
                    for ((out, x), c) in diff.iter_mut().zip(row).zip(center) {
                        *out = x - c;
                    }
                    factors[j].squared_mahalanobis(&diff)
                }
            };
            if dist_sq < best_sq {
                best_sq = dist_sq;
                best_j = j;
            }
        }
        for ((out, x), c) in diff.iter_mut().zip(row).zip(&model.centers[best_j]) {
            *out = x - c;
        }
        let dist = factors[best_j].squared_mahalanobis(&diff).sqrt();
        values.push(dist / weights.get(i));
    }
    ScoreVector::new(values)
}

/// True for rows with fewer than `min_pts` other rows within euclidean
/// distance `eps` (boundary inclusive). `min_pts = 0` flags nothing.
pub fn density_flags(data: &Dataset, eps: f64, min_pts: usize) -> Result<Vec<bool>> {
    Ok(density_neighbor_counts(data, eps)?.into_iter().map(|c| c < min_pts).collect())
}

/// How far below `min_pts` each row's neighbor count falls; zero for rows
/// that meet the density requirement. Useful as a score to report alongside
/// the hard density flags.
pub fn density_deficit_scores(data: &Dataset, eps: f64, min_pts: usize) -> Result<ScoreVector> {
    let counts = density_neighbor_counts(data, eps)?;
    ScoreVector::new(counts.into_iter().map(|c| min_pts.saturating_sub(c) as f64).collect())
}

fn density_neighbor_counts(data: &Dataset, eps: f64) -> Result<Vec<usize>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::config("scoring", format!("eps must be positive and finite, got {eps}")));
    }
    data.require_finite("scoring")?;
    let eps_sq = eps * eps;
    let n = data.n();
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist_sq: f64 = data.row(i).iter().zip(data.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist_sq <= eps_sq {
                counts[i] += 1;
                counts[j] += 1;
            }
        }
    }
    Ok(counts)
}

/// Angle-based outlier scores. For each row the raw statistic is the
/// variance, over all pairs of other rows, of the angle term
/// `<x_j - x_i, x_l - x_i> / (|x_j - x_i|^2 |x_l - x_i|^2)`; pairs involving
/// an exact duplicate of the row are skipped. Scores are flipped to
/// `max(raw) - raw` so that, like every other scorer here, larger means more
/// outlying.
pub fn abod_scores(data: &Dataset) -> Result<ScoreVector> {
    if data.n() < 3 {
        return Err(Error::data("scoring", format!("abod needs at least 3 rows, got {}", data.n())));
    }
    data.require_finite("scoring")?;
    let n = data.n();
    let d = data.dims();
    let mut raw = Vec::with_capacity(n);
    let mut diffs: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        diffs.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            let mut v = vec![0.0f64; d];
            let mut norm_sq = 0.0;
            for (out, (a, b)) in v.iter_mut().zip(data.row(j).iter().zip(data.row(i))) {
                *out = a - b;
                norm_sq += *out * *out;
            }
            if norm_sq > 0.0 {
                diffs.push((v, norm_sq));
            }
        }
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut pairs = 0usize;
        for a in 0..diffs.len() {
            for b in (a + 1)..diffs.len() {
                let dot: f64 = diffs[a].0.iter().zip(&diffs[b].0).map(|(x, y)| x * y).sum();
                let value = dot / (diffs[a].1 * diffs[b].1);
                sum += value;
                sum_sq += value * value;
                pairs += 1;
            }
        }
        let variance = if pairs == 0 {
            0.0
        } else {
            let mean = sum / pairs as f64;
            (sum_sq / pairs as f64 - mean * mean).max(0.0)
        };
        raw.push(variance);
    }
    let max_raw = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ScoreVector::new(raw.into_iter().map(|v| (max_raw - v).max(0.0)).collect())
}
