//! Python bindings for the weighted outlier detection pipeline.
//!
//! The module mirrors the CLI's vocabulary: `fit` / `detect` / `evaluate` /
//! `tune` / `synth` plus a `Stream` class for windowed detection. Data moves
//! as plain lists of floats; configuration is a TOML string (the same format
//! the CLI reads), and structured results come back as ordinary dicts built
//! from the same canonical serialization the CLI writes to disk.
//!
//! The Rust error taxonomy is preserved: `ConfigError` and `DataError` are
//! `ValueError` subclasses, `NumericError` subclasses `ArithmeticError`.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde::Serialize;

use wod_core::config::PipelineConfig;
use wod_core::dataset::{load_csv_path, LoadOptions};
use wod_core::error::Error;
use wod_core::evaluation::{confusion, cross_validate, grid_search};
use wod_core::pipeline::{FittedPipeline, PipelineModel};
use wod_core::report::canonical_json;
use wod_core::streaming::{StreamConfig, StreamDetector, WindowMode};
use wod_core::synth::SynthSpec;
use wod_core::threshold::DetectionResult;

pyo3::create_exception!(wod_py, ConfigError, PyValueError);
pyo3::create_exception!(wod_py, DataError, PyValueError);
pyo3::create_exception!(wod_py, NumericError, PyArithmeticError);

fn to_py_err(err: Error) -> PyErr {
    let text = err.to_string();
    match err {
        Error::Config { .. } => ConfigError::new_err(text),
        Error::Data { .. } => DataError::new_err(text),
        Error::Numeric { .. } => NumericError::new_err(text),
    }
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    match value {
        serde_json::Value::Null => Ok(py.None()),
        serde_json::Value::Bool(b) => b.into_py_any(py),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py_any(py)
            } else if let Some(u) = n.as_u64() {
                u.into_py_any(py)
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py_any(py)
            }
        }
        serde_json::Value::String(s) => s.into_py_any(py),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

/// Convert any canonically serializable result into a Python dict/list tree.
fn to_py_value<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = canonical_json(value).map_err(to_py_err)?;
    let parsed: serde_json::Value =
        serde_json::from_str(&text).expect("canonical serialization is valid JSON");
    json_to_py(py, &parsed)
}

fn parse_config(text: &str, force: bool) -> PyResult<PipelineConfig> {
    let cfg = PipelineConfig::from_toml_str(text).map_err(to_py_err)?;
    cfg.validate(force).map_err(to_py_err)?;
    Ok(cfg)
}

/// An in-memory table of numeric rows, optionally labeled.
#[pyclass(frozen)]
struct Dataset {
    inner: wod_core::dataset::Dataset,
}

#[pymethods]
impl Dataset {
    /// Build a dataset from a list of equal-length float rows. Feature names
    /// default to f0..fN, row ids to the row index.
    #[new]
    #[pyo3(signature = (rows, feature_names=None, labels=None))]
    fn new(
        rows: Vec<Vec<f64>>,
        feature_names: Option<Vec<String>>,
        labels: Option<Vec<bool>>,
    ) -> PyResult<Self> {
        let dims = rows.first().map(|r| r.len()).unwrap_or(0);
        let names = feature_names.unwrap_or_else(|| (0..dims).map(|j| format!("f{j}")).collect());
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        let inner = wod_core::dataset::Dataset::from_rows(rows, names, ids, labels).map_err(to_py_err)?;
        Ok(Dataset { inner })
    }

    /// Load a CSV file. `label_column` names a 0/1 or true/false column.
    #[staticmethod]
    #[pyo3(signature = (path, has_header=true, label_column=None))]
    fn load_csv(path: &str, has_header: bool, label_column: Option<String>) -> PyResult<Self> {
        let options = LoadOptions { has_header, label_column, weight_column: None };
        let loaded = load_csv_path(std::path::Path::new(path), &options).map_err(to_py_err)?;
        Ok(Dataset { inner: loaded.dataset })
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} rows x {} features{})",
            self.inner.n(),
            self.inner.dims(),
            if self.inner.labels().is_some() { ", labeled" } else { "" }
        )
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.dims()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names().to_vec()
    }

    #[getter]
    fn row_ids(&self) -> Vec<String> {
        self.inner.row_ids().to_vec()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<bool>> {
        self.inner.labels().map(|l| l.to_vec())
    }

    /// Materialize the rows as a list of lists.
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(|r| r.to_vec()).collect()
    }
}

/// Scores and flags for one dataset, as produced by `detect` or
/// `Model.detect`.
#[pyclass(frozen)]
struct Detection {
    result: DetectionResult,
}

#[pymethods]
impl Detection {
    fn __len__(&self) -> usize {
        self.result.scores.len()
    }

    fn __repr__(&self) -> String {
        let flagged = self.result.flags.iter().filter(|&&f| f).count();
        format!("Detection({} rows, {} flagged)", self.result.scores.len(), flagged)
    }

    #[getter]
    fn scores(&self) -> Vec<f64> {
        self.result.scores.as_slice().to_vec()
    }

    #[getter]
    fn flags(&self) -> Vec<bool> {
        self.result.flags.clone()
    }

    #[getter]
    fn threshold(&self) -> Option<f64> {
        self.result.threshold
    }

    #[getter]
    fn policy(&self) -> String {
        self.result.meta.threshold_policy.clone()
    }

    fn flagged_indices(&self) -> Vec<usize> {
        self.result.flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect()
    }

    /// Confusion metrics (plus AUC when both classes appear) against the
    /// given ground-truth labels.
    fn metrics(&self, py: Python<'_>, labels: Vec<bool>) -> PyResult<Py<PyAny>> {
        let mut metrics = confusion(&self.result.flags, &labels).map_err(to_py_err)?;
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            metrics.auc =
                Some(wod_core::evaluation::roc_auc(self.result.scores.as_slice(), &labels).map_err(to_py_err)?);
        }
        to_py_value(py, &metrics)
    }
}

/// A fitted pipeline: normalization statistics, the weighting model, and the
/// cluster model, plus the configuration that produced them.
#[pyclass(frozen)]
struct Model {
    inner: PipelineModel,
}

#[pymethods]
impl Model {
    /// Score a new dataset with the fitted state (no refitting).
    #[pyo3(signature = (data, weights=None))]
    fn detect(&self, data: &Dataset, weights: Option<Vec<f64>>) -> PyResult<Detection> {
        let detection = self
            .inner
            .pipeline
            .detect(&data.inner, &self.inner.config, weights.as_deref())
            .map_err(to_py_err)?;
        Ok(Detection { result: detection.result })
    }

    /// The exact JSON the CLI writes for `fit --model`.
    fn to_json(&self) -> PyResult<String> {
        canonical_json(&self.inner).map_err(to_py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Model { inner: PipelineModel::from_json(text).map_err(to_py_err)? })
    }

    #[getter]
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py_value(py, &self.inner.config)
    }

    #[getter]
    fn centers(&self) -> Vec<Vec<f64>> {
        self.inner.pipeline.cluster.centers.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.pipeline.cluster.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.pipeline.cluster.converged
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(k={}, {} dims, {})",
            self.inner.pipeline.cluster.centers.len(),
            self.inner.pipeline.dims,
            if self.inner.pipeline.cluster.converged { "converged" } else { "not converged" }
        )
    }
}

/// Fit the pipeline on a dataset.
#[pyfunction]
#[pyo3(signature = (data, config="", weights=None, force=false))]
fn fit(data: &Dataset, config: &str, weights: Option<Vec<f64>>, force: bool) -> PyResult<Model> {
    let cfg = parse_config(config, force)?;
    let fitted =
        FittedPipeline::fit(&data.inner, &cfg, cfg.cluster_base_seed(), weights.as_deref()).map_err(to_py_err)?;
    Ok(Model { inner: PipelineModel::new(cfg, fitted) })
}

/// Fit and score one dataset in a single pass.
#[pyfunction]
#[pyo3(signature = (data, config="", weights=None, force=false))]
fn detect(data: &Dataset, config: &str, weights: Option<Vec<f64>>, force: bool) -> PyResult<Detection> {
    let cfg = parse_config(config, force)?;
    let run = wod_core::pipeline::run_pipeline(&data.inner, &cfg, cfg.cluster_base_seed(), weights.as_deref())
        .map_err(to_py_err)?;
    Ok(Detection { result: run.result })
}

/// K-fold cross-validation on labeled data; returns the per-fold and
/// aggregate metrics as a dict.
#[pyfunction]
#[pyo3(signature = (data, config="", folds=None, seed=None, weights=None, force=false))]
fn evaluate(
    py: Python<'_>,
    data: &Dataset,
    config: &str,
    folds: Option<usize>,
    seed: Option<u64>,
    weights: Option<Vec<f64>>,
    force: bool,
) -> PyResult<Py<PyAny>> {
    let cfg = parse_config(config, force)?;
    let tune = cfg.tune.clone().unwrap_or_default();
    let report = cross_validate(
        &data.inner,
        &cfg,
        folds.unwrap_or(tune.folds),
        seed.unwrap_or(tune.seed),
        weights.as_deref(),
    )
    .map_err(to_py_err)?;
    to_py_value(py, &report)
}

/// Grid search over the `[tune]` section of the config; returns the full
/// grid report as a dict.
#[pyfunction]
#[pyo3(signature = (data, config, sample=None, weights=None, force=false))]
fn tune(
    py: Python<'_>,
    data: &Dataset,
    config: &str,
    sample: Option<usize>,
    weights: Option<Vec<f64>>,
    force: bool,
) -> PyResult<Py<PyAny>> {
    let cfg = parse_config(config, force)?;
    let tune_cfg = cfg
        .tune
        .clone()
        .ok_or_else(|| ConfigError::new_err("config error in cli: tune needs a [tune] section with a grid"))?;
    let report =
        grid_search(&data.inner, &cfg, &tune_cfg, weights.as_deref(), sample, force).map_err(to_py_err)?;
    to_py_value(py, &report)
}

/// The built-in labeled benchmark: two unit-covariance Gaussian clusters plus
/// uniform outliers, fully determined by the seed.
#[pyfunction]
#[pyo3(signature = (inliers=950, outliers=50, seed=0))]
fn synth(inliers: usize, outliers: usize, seed: u64) -> PyResult<Dataset> {
    let spec = SynthSpec { inliers, outliers, seed };
    Ok(Dataset { inner: wod_core::synth::generate(&spec).map_err(to_py_err)? })
}

/// Midrank ROC AUC of scores against boolean labels.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    wod_core::evaluation::roc_auc(&scores, &labels).map_err(to_py_err)
}

/// Pattern-frequency instance weights (mean 1; rare bin patterns weigh less).
#[pyfunction]
#[pyo3(signature = (data, bins=8))]
fn pattern_weights(data: &Dataset, bins: usize) -> PyResult<Vec<f64>> {
    Ok(wod_core::weighting::pattern_frequency_weights(&data.inner, bins)
        .map_err(to_py_err)?
        .as_slice()
        .to_vec())
}

/// kNN-distance instance weights (mean 1; isolated points weigh less).
#[pyfunction]
fn knn_weights(data: &Dataset, k: usize) -> PyResult<Vec<f64>> {
    Ok(wod_core::weighting::knn_distance_weights(&data.inner, k)
        .map_err(to_py_err)?
        .as_slice()
        .to_vec())
}

/// Windowed detection over rows pushed one at a time. `push` returns a
/// verdict dict whenever a window fills; `flush` scores any sufficient tail.
#[pyclass]
struct Stream {
    inner: StreamDetector,
}

#[pymethods]
impl Stream {
    #[new]
    #[pyo3(signature = (config="", capacity=256, mode="tumbling", stride=1, force=false))]
    fn new(config: &str, capacity: usize, mode: &str, stride: usize, force: bool) -> PyResult<Self> {
        let pipeline = PipelineConfig::from_toml_str(config).map_err(to_py_err)?;
        let mode = match mode {
            "tumbling" => WindowMode::Tumbling,
            "sliding" => WindowMode::Sliding,
            other => {
                return Err(ConfigError::new_err(format!(
                    "config error in streaming: mode must be 'tumbling' or 'sliding', got '{other}'"
                )))
            }
        };
        let cfg = StreamConfig { capacity, mode, stride, pipeline };
        Ok(Stream { inner: StreamDetector::new(cfg, force).map_err(to_py_err)? })
    }

    fn push(&mut self, py: Python<'_>, row: Vec<f64>) -> PyResult<Option<Py<PyAny>>> {
        match self.inner.push(&row).map_err(to_py_err)? {
            Some(verdict) => Ok(Some(to_py_value(py, &verdict)?)),
            None => Ok(None),
        }
    }

    /// Score whatever remains in the buffer if it is large enough, then clear
    /// it. Returns `(verdict_or_None, discarded_row_count)`.
    fn flush(&mut self, py: Python<'_>) -> PyResult<(Option<Py<PyAny>>, usize)> {
        let outcome = self.inner.flush().map_err(to_py_err)?;
        let verdict = match outcome.verdict {
            Some(v) => Some(to_py_value(py, &v)?),
            None => None,
        };
        Ok((verdict, outcome.discarded))
    }

    #[getter]
    fn buffered(&self) -> usize {
        self.inner.buffered()
    }

    #[getter]
    fn rows_seen(&self) -> u64 {
        self.inner.rows_seen()
    }

    #[getter]
    fn windows_emitted(&self) -> u64 {
        self.inner.windows_emitted()
    }

    #[getter]
    fn min_rows(&self) -> usize {
        self.inner.min_rows()
    }
}

#[pymodule]
fn wod_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("DataError", m.py().get_type::<DataError>())?;
    m.add("NumericError", m.py().get_type::<NumericError>())?;
    m.add_class::<Dataset>()?;
    m.add_class::<Detection>()?;
    m.add_class::<Model>()?;
    m.add_class::<Stream>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(pattern_weights, m)?)?;
    m.add_function(wrap_pyfunction!(knn_weights, m)?)?;
    Ok(())
}
