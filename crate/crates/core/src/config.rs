//! Pipeline configuration: TOML file, `--set key=value` overrides, defaults,
//! and cross-field validation.
//!
//! The TOML layout mirrors the stages:
//!
//! ```toml
//! seed = 7
//!
//! [preprocess]
//! impute = "feature_mean"   # or "drop_rows"
//! dedupe = false
//!
//! [normalize]
//! method = "zscore"         # or "minmax", "none"
//!
//! [weighting]
//! scheme = "pattern_frequency"  # or "uniform", "knn_distance", "external"
//! bins = 8
//! k = 10
//!
//! [cluster]
//! k = 2
//! # seed defaults to the top-level seed
//! max_iters = 100
//! tol = 1e-6
//! ridge = 1e-6
//! metric = "euclidean"      # or "mahalanobis"
//!
//! [score]
//! method = "weighted_mahalanobis"  # or "density", "abod"
//! eps = 0.5
//! min_pts = 5
//!
//! [threshold]
//! policy = "quantile"       # or "fixed", "chisq"
//! q = 0.95
//! value = 0.0
//! alpha = 0.05
//!
//! [tune]
//! metric = "f1"
//! folds = 5
//! seed = 0
//! [tune.grid]
//! "cluster.k" = [2, 3, 4]
//! "weighting.bins" = [4, 8]
//! ```
//!
//! Unknown keys anywhere are rejected, and the same rejection applies to
//! `--set` overrides because overrides are merged into the TOML table before
//! deserialization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterConfig, MetricMode};
use crate::dataset::ImputeStrategy;
use crate::error::{Error, Result};
use crate::normalize::NormalizeMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Uniform,
    #[default]
    PatternFrequency,
    KnnDistance,
    /// Weights come from a CSV column chosen on the command line.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    #[default]
    WeightedMahalanobis,
    Density,
    Abod,
}

impl ScoreMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ScoreMethod::WeightedMahalanobis => "weighted_mahalanobis",
            ScoreMethod::Density => "density",
            ScoreMethod::Abod => "abod",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Fixed,
    #[default]
    Quantile,
    Chisq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub impute: ImputeStrategy,
    pub dedupe: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { impute: ImputeStrategy::FeatureMean, dedupe: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizeConfig {
    pub method: NormalizeMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightingConfig {
    pub scheme: WeightScheme,
    /// Bins per feature for `pattern_frequency`.
    pub bins: usize,
    /// Neighbor count for `knn_distance`.
    pub k: usize,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        WeightingConfig { scheme: WeightScheme::PatternFrequency, bins: 8, k: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub k: usize,
    /// Defaults to the top-level seed when absent.
    pub seed: Option<u64>,
    pub max_iters: usize,
    pub tol: f64,
    pub ridge: f64,
    pub metric: MetricMode,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let base = ClusterConfig::default();
        ClusterSection {
            k: base.k,
            seed: None,
            max_iters: base.max_iters,
            tol: base.tol,
            ridge: base.ridge,
            metric: base.metric,
        }
    }
}

impl ClusterSection {
    /// Concrete clustering parameters for a run seeded with `seed` (used
    /// when the section does not pin its own seed).
    pub fn resolve(&self, seed: u64) -> ClusterConfig {
        ClusterConfig {
            k: self.k,
            seed: self.seed.unwrap_or(seed),
            max_iters: self.max_iters,
            tol: self.tol,
            ridge: self.ridge,
            metric: self.metric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreConfig {
    pub method: ScoreMethod,
    /// Neighborhood radius for `density`.
    pub eps: f64,
    /// Minimum neighbor count for `density`.
    pub min_pts: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { method: ScoreMethod::WeightedMahalanobis, eps: 0.5, min_pts: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdConfig {
    pub policy: ThresholdPolicy,
    /// Cutoff for `fixed`.
    pub value: f64,
    /// Quantile for `quantile`.
    pub q: f64,
    /// Significance level for `chisq`.
    pub alpha: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig { policy: ThresholdPolicy::Quantile, value: 0.0, q: 0.95, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    /// Metric the grid search maximizes: precision, recall, f1, accuracy,
    /// detection_rate, or auc.
    pub metric: String,
    pub folds: usize,
    /// Seed for the fold partition (and for grid sampling, when used).
    pub seed: u64,
    /// Dotted config path -> list of candidate values.
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig { metric: "f1".to_string(), folds: 5, seed: 0, grid: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Base seed for every randomized stage.
    pub seed: u64,
    pub preprocess: PreprocessConfig,
    pub normalize: NormalizeConfig,
    pub weighting: WeightingConfig,
    pub cluster: ClusterSection,
    pub score: ScoreConfig,
    pub threshold: ThresholdConfig,
    pub tune: Option<TuneConfig>,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config("config", e.to_string().trim().to_string()))?;
        from_table(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Effective seed for batch clustering runs.
    pub fn cluster_base_seed(&self) -> u64 {
        self.cluster.seed.unwrap_or(self.seed)
    }

    /// Cross-field validation. `force` waives the chi-square/weighted-scores
    /// refusal.
    pub fn validate(&self, force: bool) -> Result<()> {
        match self.weighting.scheme {
            WeightScheme::PatternFrequency if self.weighting.bins < 2 => {
                return Err(Error::config(
                    "config",
                    format!("weighting.bins must be at least 2, got {}", self.weighting.bins),
                ));
            }
            WeightScheme::KnnDistance if self.weighting.k == 0 => {
                return Err(Error::config("config", "weighting.k must be at least 1"));
            }
            _ => {}
        }
        self.cluster.resolve(self.seed).validate()?;
        if self.score.method == ScoreMethod::Density && !(self.score.eps > 0.0 && self.score.eps.is_finite()) {
            return Err(Error::config("config", format!("score.eps must be positive and finite, got {}", self.score.eps)));
        }
        match self.threshold.policy {
            ThresholdPolicy::Fixed if !self.threshold.value.is_finite() => {
                return Err(Error::config("config", "threshold.value must be finite"));
            }
            ThresholdPolicy::Quantile if !(self.threshold.q > 0.0 && self.threshold.q < 1.0) => {
                return Err(Error::config(
                    "config",
                    format!("threshold.q must lie in (0, 1), got {}", self.threshold.q),
                ));
            }
            ThresholdPolicy::Chisq => {
                if !(self.threshold.alpha > 0.0 && self.threshold.alpha < 1.0) {
                    return Err(Error::config(
                        "config",
                        format!("threshold.alpha must lie in (0, 1), got {}", self.threshold.alpha),
                    ));
                }
                let calibrated = self.score.method == ScoreMethod::WeightedMahalanobis
                    && self.weighting.scheme == WeightScheme::Uniform;
                if !calibrated && !force {
                    return Err(Error::config(
                        "config",
                        "the chisq policy is calibrated for unweighted mahalanobis scores \
                         (score.method = weighted_mahalanobis with weighting.scheme = uniform); \
                         pass --force to use it anyway",
                    ));
                }
            }
            _ => {}
        }
        if let Some(tune) = &self.tune {
            validate_tune(tune)?;
        }
        Ok(())
    }
}

fn validate_tune(tune: &TuneConfig) -> Result<()> {
    metric_is_known(&tune.metric)?;
    if tune.folds < 2 {
        return Err(Error::config("config", format!("tune.folds must be at least 2, got {}", tune.folds)));
    }
    for (key, values) in &tune.grid {
        if values.is_empty() {
            return Err(Error::config("config", format!("tune.grid.\"{key}\" has no candidate values")));
        }
        for v in values {
            if !matches!(v, toml::Value::Integer(_) | toml::Value::Float(_) | toml::Value::Boolean(_) | toml::Value::String(_)) {
                return Err(Error::config(
                    "config",
                    format!("tune.grid.\"{key}\" values must be scalars (integer, float, boolean, or string)"),
                ));
            }
        }
    }
    Ok(())
}

pub fn metric_is_known(name: &str) -> Result<()> {
    const KNOWN: [&str; 6] = ["precision", "recall", "f1", "accuracy", "detection_rate", "auc"];
    if KNOWN.contains(&name) {
        Ok(())
    } else {
        Err(Error::config(
            "config",
            format!("unknown metric '{name}'; expected one of {}", KNOWN.join(", ")),
        ))
    }
}

/// Build a config from an optional TOML file plus `--set path=value`
/// overrides, applied in order on top of the file contents.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<PipelineConfig> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config("config", format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::config("config", e.to_string().trim().to_string()))?
        }
        None => toml::Table::new(),
    };
    for (key, value) in overrides {
        set_dotted(&mut table, key, parse_override_value(value))?;
    }
    from_table(table)
}

/// Rebuild a config with some dotted paths replaced. The result goes through
/// the same deserialization as a loaded file, so unknown paths are rejected
/// by name.
pub fn with_overrides(base: &PipelineConfig, overrides: &[(String, toml::Value)]) -> Result<PipelineConfig> {
    let text = toml::to_string(base)
        .map_err(|e| Error::config("config", format!("cannot serialize config: {e}")))?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| Error::config("config", e.to_string().trim().to_string()))?;
    for (key, value) in overrides {
        set_dotted(&mut table, key, value.clone())?;
    }
    from_table(table)
}

fn from_table(table: toml::Table) -> Result<PipelineConfig> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::config("config", e.to_string().trim().to_string()))
}

/// Parse an override value with TOML scalar syntax (so `3`, `0.5`, `true`,
/// `[2, 3]`, and `"text"` all work); anything unparseable is a bare string.
fn parse_override_value(value: &str) -> toml::Value {
    let wrapped = format!("v = {value}");
    if let Ok(table) = toml::from_str::<toml::Table>(&wrapped) {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(value.to_string())
}

/// Insert `value` at a dotted path, creating intermediate tables. Keys under
/// `tune.grid` keep their own dots (grid keys are themselves dotted paths).
fn set_dotted(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let segments: Vec<&str> = if let Some(rest) = path.strip_prefix("tune.grid.") {
        vec!["tune", "grid", rest]
    } else {
        path.split('.').collect()
    };
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::config("config", format!("invalid override path '{path}'")));
    }
    let mut current = table;
    for segment in &segments[..segments.len() - 1] {
        let entry = current
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry.as_table_mut().ok_or_else(|| {
            Error::config("config", format!("override path '{path}' crosses the non-table key '{segment}'"))
        })?;
    }
    current.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}
