//! Instance weighting: how much each row counts during clustering and how
//! strongly its distance is discounted during scoring.
//!
//! Weights are always strictly positive, finite, and normalized to mean 1,
//! so a weight above 1 marks a row whose pattern is more common than
//! average. The two computed schemes are:
//!
//! * `pattern_frequency` — discretize each feature into `bins` equal-width
//!   bins over its observed range; a row's raw weight is the relative
//!   frequency of its bin tuple. Rows in crowded cells of the grid weigh
//!   more, rows with rare patterns weigh less.
//! * `knn_distance` — raw weight `1 / (1 + mean distance to the k nearest
//!   other rows)`. Isolated rows weigh less.
//!
//! A [`WeightingModel`] freezes everything needed to weight unseen rows: bin
//! edges and pattern counts, or the training points themselves, plus the
//! normalization scale fit on the training data. Applying a model to its own
//! training data reproduces the direct computation exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Strictly positive, finite per-row weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights {
    values: Vec<f64>,
}

impl Weights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("weighting", "weight vector is empty"));
        }
        for (i, &w) in values.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::data(
                    "weighting",
                    format!("weight for row {} must be positive and finite, got {w}", i + 1),
                ));
            }
        }
        Ok(Weights { values })
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

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Rescale raw weights to mean 1: `w_i * n / sum(w)`.
pub fn normalize_weights(raw: &[f64]) -> Result<Weights> {
    let candidate = Weights::new(raw.to_vec())?;
    let scale = normalization_scale(&candidate.values);
    Weights::new(candidate.values.iter().map(|w| w * scale).collect())
}

fn normalization_scale(raw: &[f64]) -> f64 {
    raw.len() as f64 / raw.iter().sum::<f64>()
}

pub fn uniform_weights(n: usize) -> Result<Weights> {
    Weights::new(vec![1.0; n])
}

/// Pattern-frequency weights for `data` itself; equivalent to fitting a
/// model on `data` and applying it back.
pub fn pattern_frequency_weights(data: &Dataset, bins: usize) -> Result<Weights> {
    let model = WeightingModel::fit_pattern_frequency(data, bins)?;
    model.apply(data, None)
}

/// kNN-distance weights for `data` itself; equivalent to fitting a model on
/// `data` and applying it back.
pub fn knn_distance_weights(data: &Dataset, k: usize) -> Result<Weights> {
    let model = WeightingModel::fit_knn(data, k)?;
    model.apply(data, None)
}

/// Equal-width bin layout for one feature. A degenerate (constant) feature
/// has `width == 0` and maps everything to bin 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub min: f64,
    pub width: f64,
    pub bins: u32,
}

impl BinEdges {
    fn index(&self, x: f64) -> u32 {
        if self.width <= 0.0 {
            return 0;
        }
        let raw = ((x - self.min) / self.width).floor();
        if raw < 0.0 {
            0
        } else if raw >= self.bins as f64 {
            self.bins - 1
        } else {
            raw as u32
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightingModel {
    Uniform,
    PatternFrequency {
        edges: Vec<BinEdges>,
        /// Pattern tuple (bin indices joined with commas) -> training count.
        counts: BTreeMap<String, u64>,
        fit_rows: u64,
        scale: f64,
    },
    KnnDistance {
        points: Vec<Vec<f64>>,
        k: usize,
        scale: f64,
    },
    /// Caller-supplied weights (for example a domain-knowledge CSV column);
    /// only the normalization scale is learned.
    External { scale: f64 },
}

impl WeightingModel {
    pub fn fit_uniform() -> Self {
        WeightingModel::Uniform
    }

    pub fn fit_pattern_frequency(data: &Dataset, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::config("weighting", format!("pattern_frequency needs bins >= 2, got {bins}")));
        }
        if bins > u32::MAX as usize {
            return Err(Error::config("weighting", format!("bins = {bins} is out of range")));
        }
        data.require_finite("weighting")?;
        let d = data.dims();
        let mut edges = Vec::with_capacity(d);
        for j in 0..d {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for i in 0..data.n() {
                min = min.min(data.value(i, j));
                max = max.max(data.value(i, j));
            }
            let width = if max > min { (max - min) / bins as f64 } else { 0.0 };
            edges.push(BinEdges { min, width, bins: bins as u32 });
        }
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for i in 0..data.n() {
            *counts.entry(pattern_key(data.row(i), &edges)).or_insert(0) += 1;
        }
        let fit_rows = data.n() as u64;
        let raw: Vec<f64> = (0..data.n())
            .map(|i| counts[&pattern_key(data.row(i), &edges)] as f64 / fit_rows as f64)
            .collect();
        let scale = normalization_scale(&raw);
        Ok(WeightingModel::PatternFrequency { edges, counts, fit_rows, scale })
    }

    pub fn fit_knn(data: &Dataset, k: usize) -> Result<Self> {
        if k == 0 || k >= data.n() {
            return Err(Error::config(
                "weighting",
                format!("knn_distance needs 1 <= k <= n-1, got k={k} with n={}", data.n()),
            ));
        }
        data.require_finite("weighting")?;
        let points: Vec<Vec<f64>> = data.rows().map(|r| r.to_vec()).collect();
        let raw: Vec<f64> = (0..data.n())
            .map(|i| {
                let dists = neighbor_distances(data.row(i), &points, Some(i));
                knn_raw_weight(&dists, k)
            })
            .collect();
        let scale = normalization_scale(&raw);
        Ok(WeightingModel::KnnDistance { points, k, scale })
    }

    pub fn fit_external(raw: &[f64]) -> Result<Self> {
        Weights::new(raw.to_vec())?;
        Ok(WeightingModel::External { scale: normalization_scale(raw) })
    }

    /// Weights for `data` under this model. `external` must be provided for
    /// (and only for) the `External` variant.
    pub fn apply(&self, data: &Dataset, external: Option<&[f64]>) -> Result<Weights> {
        if external.is_some() && !matches!(self, WeightingModel::External { .. }) {
            return Err(Error::config("weighting", "external weights supplied but the model computes its own"));
        }
        match self {
            WeightingModel::Uniform => uniform_weights(data.n()),
            WeightingModel::PatternFrequency { edges, counts, fit_rows, scale } => {
                if edges.len() != data.dims() {
                    return Err(Error::data(
                        "weighting",
                        format!("weighting model was fit on {} features, data has {}", edges.len(), data.dims()),
                    ));
                }
                data.require_finite("weighting")?;
                let values = (0..data.n())
                    .map(|i| {
                        // A pattern never seen in training keeps the minimum
                        // observable frequency instead of a zero weight.
                        let count = counts.get(&pattern_key(data.row(i), edges)).copied().unwrap_or(1);
                        (count as f64 / *fit_rows as f64) * scale
                    })
                    .collect();
                Weights::new(values)
            }
            WeightingModel::KnnDistance { points, k, scale } => {
                if points.first().map(|p| p.len()) != Some(data.dims()) {
                    return Err(Error::data(
                        "weighting",
                        format!(
                            "weighting model was fit on {} features, data has {}",
                            points.first().map_or(0, |p| p.len()),
                            data.dims()
                        ),
                    ));
                }
                data.require_finite("weighting")?;
                let values = (0..data.n())
                    .map(|i| {
                        let dists = neighbor_distances(data.row(i), points, None);
                        knn_raw_weight(&dists, *k) * scale
                    })
                    .collect();
                Weights::new(values)
            }
            WeightingModel::External { scale } => {
                let raw = external.ok_or_else(|| {
                    Error::config("weighting", "model uses external weights; supply a weights column")
                })?;
                if raw.len() != data.n() {
                    return Err(Error::data(
                        "weighting",
                        format!("{} external weights for {} rows", raw.len(), data.n()),
                    ));
                }
                Weights::new(raw.iter().map(|w| w * scale).collect())
            }
        }
    }

    pub fn scheme_name(&self) -> &'static str {
        match self {
            WeightingModel::Uniform => "uniform",
            WeightingModel::PatternFrequency { .. } => "pattern_frequency",
            WeightingModel::KnnDistance { .. } => "knn_distance",
            WeightingModel::External { .. } => "external",
        }
    }
}

fn pattern_key(row: &[f64], edges: &[BinEdges]) -> String {
    let mut key = String::with_capacity(edges.len() * 3);
    for (j, edge) in edges.iter().enumerate() {
        if j > 0 {
            key.push(',');
        }
        key.push_str(&edge.index(row[j]).to_string());
    }
    key
}

/// Distances from `query` to every stored point, in storage order. When
/// `exclude` is set, that index is skipped; otherwise the first exact
/// duplicate (distance zero) is dropped, so a training row queried against
/// its own model never counts itself as a neighbor.
fn neighbor_distances(query: &[f64], points: &[Vec<f64>], exclude: Option<usize>) -> Vec<f64> {
    let mut dists = Vec::with_capacity(points.len());
    let mut dropped_self = exclude.is_some();
    for (j, p) in points.iter().enumerate() {
        if exclude == Some(j) {
            continue;
        }
        let dist = euclidean(query, p);
        if !dropped_self && dist == 0.0 {
            dropped_self = true;
            continue;
        }
        dists.push(dist);
    }
    dists
}

fn knn_raw_weight(dists: &[f64], k: usize) -> f64 {
    debug_assert!(dists.len() >= k);
    let mut sorted = dists.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mean = sorted[..k].iter().sum::<f64>() / k as f64;
    1.0 / (1.0 + mean)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
