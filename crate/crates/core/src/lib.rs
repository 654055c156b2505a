//! Weighted outlier detection.
//!
//! The pipeline this crate implements treats "how common is this row's
//! pattern" as a first-class signal: rows get instance weights from pattern
//! frequency (or kNN distance), a weighted k-means model summarizes the
//! data, and each row is scored by its Mahalanobis distance to the nearest
//! center divided by its weight — so rare-pattern rows far from any center
//! float to the top. Thresholding, evaluation with cross-validation and grid
//! search, and a bounded-buffer streaming mode sit on top.
//!
//! Modules follow the stages: [`dataset`] and [`normalize`] for loading and
//! preprocessing, [`weighting`], [`clustering`], [`scoring`], [`threshold`],
//! [`evaluation`], [`streaming`], with [`pipeline`] tying the stages
//! together behind one configuration type ([`config`]).

pub mod clustering;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
mod linalg;
pub mod normalize;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod scoring;
pub mod stats;
pub mod streaming;
pub mod synth;
pub mod threshold;
pub mod weighting;

pub use clustering::{weighted_kmeans, ClusterConfig, ClusterModel, MetricMode};
pub use config::{load_config, PipelineConfig};
pub use dataset::{load_csv, Dataset, ImputeStrategy};
pub use error::{Error, Result};
pub use evaluation::{confusion, cross_validate, grid_search, roc_auc, CvReport, GridReport, Metrics};
pub use pipeline::{preprocess, run_pipeline, FittedPipeline, PipelineModel, PipelineRun};
pub use scoring::{abod_scores, density_flags, mahalanobis_distance, score, ScoreVector};
pub use streaming::{StreamConfig, StreamDetector, WindowMode, WindowVerdict};
pub use threshold::{chisq_threshold, fixed_threshold, quantile_threshold, DetectionResult};
pub use weighting::{knn_distance_weights, normalize_weights, pattern_frequency_weights, uniform_weights, Weights};
