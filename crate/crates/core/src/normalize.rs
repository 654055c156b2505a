//! Per-feature normalization, fit on one dataset and applicable to another.
//!
//! Both methods reduce to the affine map `(x - offset) / scale` per feature,
//! which is what gets stored: z-score uses (mean, population std), min-max
//! uses (min, max - min). A constant feature gets scale 1, so it maps to 0
//! on the data it was fit on.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMethod {
    #[default]
    Zscore,
    Minmax,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub method: NormalizeMethod,
    pub offsets: Vec<f64>,
    pub scales: Vec<f64>,
}

pub fn fit_normalizer(data: &Dataset, method: NormalizeMethod) -> Result<NormalizationParams> {
    data.require_finite("normalize")?;
    let d = data.dims();
    let n = data.n() as f64;
    let mut offsets = vec![0.0; d];
    let mut scales = vec![1.0; d];
    match method {
        NormalizeMethod::None => {}
        NormalizeMethod::Zscore => {
            for j in 0..d {
                let mean = (0..data.n()).map(|i| data.value(i, j)).sum::<f64>() / n;
                let var = (0..data.n()).map(|i| (data.value(i, j) - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                offsets[j] = mean;
                scales[j] = if std > 0.0 { std } else { 1.0 };
            }
        }
        NormalizeMethod::Minmax => {
            for j in 0..d {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for i in 0..data.n() {
                    min = min.min(data.value(i, j));
                    max = max.max(data.value(i, j));
                }
                offsets[j] = min;
                scales[j] = if max > min { max - min } else { 1.0 };
            }
        }
    }
    Ok(NormalizationParams { method, offsets, scales })
}

pub fn apply_normalizer(data: &Dataset, params: &NormalizationParams) -> Result<Dataset> {
    if params.method == NormalizeMethod::None {
        return Ok(data.clone());
    }
    if params.offsets.len() != data.dims() || params.scales.len() != data.dims() {
        return Err(Error::data(
            "normalize",
            format!("normalizer was fit on {} features, data has {}", params.offsets.len(), data.dims()),
        ));
    }
    if params.scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::numeric("normalize", "normalizer scales must be positive and finite"));
    }
    let rows: Vec<Vec<f64>> = (0..data.n())
        .map(|i| {
            (0..data.dims())
                .map(|j| (data.value(i, j) - params.offsets[j]) / params.scales[j])
                .collect()
        })
        .collect();
    Dataset::from_rows(
        rows,
        data.feature_names().to_vec(),
        data.row_ids().to_vec(),
        data.labels().map(|l| l.to_vec()),
    )
}
