//! The end-to-end detection pipeline: normalize, weight, cluster, score,
//! threshold — split into a fit half and an apply half so the same code path
//! serves one-shot detection, fit-then-score-later, cross-validation folds,
//! and streaming windows.
//!
//! `run_pipeline` is literally `FittedPipeline::fit` followed by
//! `FittedPipeline::detect` on the same rows, which is what makes "detect"
//! and "fit then score on the training file" produce identical output.

use serde::{Deserialize, Serialize};

use crate::clustering::{weighted_kmeans, ClusterModel};
use crate::config::{PipelineConfig, PreprocessConfig, ScoreMethod, ThresholdPolicy, WeightScheme};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::normalize::{apply_normalizer, fit_normalizer, NormalizationParams};
use crate::scoring::{abod_scores, density_deficit_scores, density_flags, score, ScoreVector};
use crate::threshold::{chisq_threshold, fixed_threshold, quantile_threshold, DetectionMeta, DetectionResult};
use crate::weighting::{Weights, WeightingModel};

/// Current on-disk model format.
pub const MODEL_FORMAT: u32 = 1;

/// Everything learned by `fit`: normalization statistics, the weighting
/// model, and the cluster model, plus the schema they expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub feature_names: Vec<String>,
    pub dims: usize,
    pub normalizer: NormalizationParams,
    pub weighting: WeightingModel,
    pub cluster: ClusterModel,
}

/// Serialized model file: the fitted state plus the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineModel {
    pub format: u32,
    pub config: PipelineConfig,
    pub pipeline: FittedPipeline,
}

impl PipelineModel {
    pub fn new(config: PipelineConfig, pipeline: FittedPipeline) -> Self {
        PipelineModel { format: MODEL_FORMAT, config, pipeline }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: PipelineModel = serde_json::from_str(text)
            .map_err(|e| Error::data("model", format!("cannot parse model JSON: {e}")))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::config(
                "model",
                format!("unsupported model format {} (this build reads format {MODEL_FORMAT})", model.format),
            ));
        }
        Ok(model)
    }
}

/// Scores plus flags plus the weights that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub weights: Weights,
    pub result: DetectionResult,
}

/// Outcome of fitting and scoring one dataset in a single pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub fitted: FittedPipeline,
    pub weights: Weights,
    pub result: DetectionResult,
}

/// Apply imputation and (optionally) deduplication.
pub fn preprocess(data: &Dataset, cfg: &PreprocessConfig) -> Result<Dataset> {
    let imputed = data.impute(cfg.impute)?;
    if cfg.dedupe {
        imputed.dedupe()
    } else {
        Ok(imputed)
    }
}

impl FittedPipeline {
    /// Fit normalizer, weighting, and clustering on `data`. `cluster_seed`
    /// seeds the k-means++ init (callers derive it from the config; see
    /// [`PipelineConfig::cluster_base_seed`]). `external` carries raw
    /// weight-column values when the scheme is `external`.
    pub fn fit(data: &Dataset, cfg: &PipelineConfig, cluster_seed: u64, external: Option<&[f64]>) -> Result<Self> {
        let normalizer = fit_normalizer(data, cfg.normalize.method)?;
        let normalized = apply_normalizer(data, &normalizer)?;
        let weighting = match cfg.weighting.scheme {
            WeightScheme::Uniform => WeightingModel::fit_uniform(),
            WeightScheme::PatternFrequency => {
                WeightingModel::fit_pattern_frequency(&normalized, cfg.weighting.bins)?
            }
            WeightScheme::KnnDistance => WeightingModel::fit_knn(&normalized, cfg.weighting.k)?,
            WeightScheme::External => {
                let raw = external.ok_or_else(|| {
                    Error::config("weighting", "weighting.scheme = external requires a weights column")
                })?;
                WeightingModel::fit_external(raw)?
            }
        };
        let weights = weighting.apply(&normalized, external)?;
        let cluster = weighted_kmeans(&normalized, &weights, &cfg.cluster.resolve(cluster_seed))?;
        Ok(FittedPipeline {
            feature_names: data.feature_names().to_vec(),
            dims: data.dims(),
            normalizer,
            weighting,
            cluster,
        })
    }

    /// Score `data` and apply the configured threshold policy.
    pub fn detect(&self, data: &Dataset, cfg: &PipelineConfig, external: Option<&[f64]>) -> Result<Detection> {
        if data.dims() != self.dims {
            return Err(Error::data(
                "scoring",
                format!("model was fit on {} features, data has {}", self.dims, data.dims()),
            ));
        }
        let normalized = apply_normalizer(data, &self.normalizer)?;
        let weights = self.weighting.apply(&normalized, external)?;

        let result = match cfg.score.method {
            ScoreMethod::WeightedMahalanobis => {
                let scores = score(&normalized, &weights, &self.cluster)?;
                apply_threshold(&scores, cfg, self.dims)?
            }
            ScoreMethod::Abod => {
                let scores = abod_scores(&normalized)?;
                apply_threshold(&scores, cfg, self.dims)?
            }
            ScoreMethod::Density => {
                let scores = density_deficit_scores(&normalized, cfg.score.eps, cfg.score.min_pts)?;
                let flags = density_flags(&normalized, cfg.score.eps, cfg.score.min_pts)?;
                let mut meta = DetectionMeta {
                    score_method: None,
                    threshold_policy: "density".to_string(),
                    threshold_params: Default::default(),
                    model_ref: None,
                };
                meta.threshold_params.insert("eps".to_string(), cfg.score.eps);
                meta.threshold_params.insert("min_pts".to_string(), cfg.score.min_pts as f64);
                DetectionResult::from_flags(scores, flags, meta)?
            }
        };
        let mut result = result;
        result.meta.score_method = Some(cfg.score.method.name().to_string());
        Ok(Detection { weights, result })
    }
}

fn apply_threshold(scores: &ScoreVector, cfg: &PipelineConfig, dims: usize) -> Result<DetectionResult> {
    match cfg.threshold.policy {
        ThresholdPolicy::Fixed => fixed_threshold(scores, cfg.threshold.value),
        ThresholdPolicy::Quantile => quantile_threshold(scores, cfg.threshold.q),
        ThresholdPolicy::Chisq => chisq_threshold(scores, cfg.threshold.alpha, dims),
    }
}

/// Fit on `data` and immediately detect on the same rows.
pub fn run_pipeline(data: &Dataset, cfg: &PipelineConfig, cluster_seed: u64, external: Option<&[f64]>) -> Result<PipelineRun> {
    let fitted = FittedPipeline::fit(data, cfg, cluster_seed, external)?;
    let detection = fitted.detect(data, cfg, external)?;
    Ok(PipelineRun { fitted, weights: detection.weights, result: detection.result })
}
