//! Labeled evaluation: confusion metrics, ROC AUC, k-fold cross-validation,
//! and grid search over config overrides.
//!
//! AUC uses the rank-sum (Mann-Whitney) formulation with midranks for tied
//! scores, which equals the pairwise concordance count with ties worth one
//! half. Cross-validation refits the entire pipeline — normalizer, weights,
//! clusters — on each training split; the threshold policy is applied to the
//! held-out scores, mirroring how the detector behaves on fresh data.
//!
//! Grid search evaluates the full Cartesian product of the `[tune.grid]`
//! lists (parameters enumerated in sorted-name order, first name slowest),
//! each cell through the same cross-validation, and picks the cell with the
//! best mean of the selection metric; ties keep the earliest cell in
//! enumeration order. `sample` evaluates a seeded uniform subsample of cells
//! instead of the whole product.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{metric_is_known, with_overrides, PipelineConfig, TuneConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::FittedPipeline;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Alias for recall, under the name the detection literature uses.
    pub detection_rate: f64,
    pub auc: Option<f64>,
}

/// Confusion-matrix metrics. `flags` are the predictions, `labels` the
/// ground truth; `true` means outlier on both sides. Ratios with an empty
/// denominator are 0.
pub fn confusion(flags: &[bool], labels: &[bool]) -> Result<Metrics> {
    if flags.len() != labels.len() {
        return Err(Error::data(
            "evaluation",
            format!("{} flags for {} labels", flags.len(), labels.len()),
        ));
    }
    if flags.is_empty() {
        return Err(Error::data("evaluation", "nothing to evaluate"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&flag, &label) in flags.iter().zip(labels) {
        match (flag, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(Metrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, flags.len()),
        detection_rate: recall,
        auc: None,
    })
}

/// Area under the ROC curve via midranks. Needs at least one positive and
/// one negative label.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::data(
            "evaluation",
            format!("{} scores for {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numeric("evaluation", "scores must be finite for AUC"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::data(
            "evaluation",
            format!("auc needs both classes; got {positives} positives and {negatives} negatives"),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Tied block occupies 1-based ranks i+1..=j+1; everyone gets the mean.
        let midrank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Per-metric mean or standard deviation across folds. `auc` is aggregated
/// over the folds where it was defined and absent when it never was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub detection_rate: f64,
    pub auc: Option<f64>,
}

impl MetricAggregate {
    pub fn value_of(&self, metric: &str) -> Option<f64> {
        match metric {
            "precision" => Some(self.precision),
            "recall" => Some(self.recall),
            "f1" => Some(self.f1),
            "accuracy" => Some(self.accuracy),
            "detection_rate" => Some(self.detection_rate),
            "auc" => self.auc,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_rows: usize,
    pub flagged: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub mean: MetricAggregate,
    pub std: MetricAggregate,
    /// Folds whose held-out slice contained a single class, where AUC is
    /// undefined.
    pub auc_undefined_folds: usize,
}

/// Seeded k-fold assignment: a shuffled permutation cut into `folds` chunks,
/// the first `n % folds` chunks one row larger. Returns each fold's row
/// indices in ascending order.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::config("evaluation", format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::data("evaluation", format!("{folds} folds for only {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut chunk: Vec<usize> = order[start..start + len].to_vec();
        chunk.sort_unstable();
        out.push(chunk);
        start += len;
    }
    Ok(out)
}

/// k-fold cross-validation of the full pipeline on labeled data.
pub fn cross_validate(
    data: &Dataset,
    cfg: &PipelineConfig,
    folds: usize,
    seed: u64,
    external: Option<&[f64]>,
) -> Result<CvReport> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::config("evaluation", "cross-validation requires a label column"))?;
    if let Some(ext) = external {
        if ext.len() != data.n() {
            return Err(Error::data(
                "evaluation",
                format!("{} external weights for {} rows", ext.len(), data.n()),
            ));
        }
    }
    let assignment = fold_indices(data.n(), folds, seed)?;
    let cluster_seed = cfg.cluster_base_seed();

    let mut reports = Vec::with_capacity(folds);
    let mut auc_undefined = 0usize;
    for (f, test_idx) in assignment.iter().enumerate() {
        let in_test = {
            let mut mask = vec![false; data.n()];
            for &i in test_idx {
                mask[i] = true;
            }
            mask
        };
        let train_idx: Vec<usize> = (0..data.n()).filter(|&i| !in_test[i]).collect();
        let train = data.subset(&train_idx)?;
        let test = data.subset(test_idx)?;
        let slice = |idx: &[usize]| external.map(|ext| idx.iter().map(|&i| ext[i]).collect::<Vec<f64>>());
        let train_ext = slice(&train_idx);
        let test_ext = slice(test_idx);

        let fitted = FittedPipeline::fit(&train, cfg, cluster_seed, train_ext.as_deref())?;
        let detection = fitted.detect(&test, cfg, test_ext.as_deref())?;

        let test_labels: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
        let mut metrics = confusion(&detection.result.flags, &test_labels)?;
        let single_class = test_labels.iter().all(|&l| l) || test_labels.iter().all(|&l| !l);
        if single_class {
            auc_undefined += 1;
        } else {
            metrics.auc = Some(roc_auc(detection.result.scores.as_slice(), &test_labels)?);
        }
        reports.push(FoldReport {
            fold: f,
            test_rows: test.n(),
            flagged: detection.result.flag_count(),
            metrics,
        });
    }

    let (mean, std) = aggregate(&reports);
    Ok(CvReport { folds: reports, mean, std, auc_undefined_folds: auc_undefined })
}

fn aggregate(folds: &[FoldReport]) -> (MetricAggregate, MetricAggregate) {
    fn mean_std(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
    let collect = |f: fn(&Metrics) -> f64| -> Vec<f64> { folds.iter().map(|r| f(&r.metrics)).collect() };
    let (p_mean, p_std) = mean_std(&collect(|m| m.precision));
    let (r_mean, r_std) = mean_std(&collect(|m| m.recall));
    let (f_mean, f_std) = mean_std(&collect(|m| m.f1));
    let (a_mean, a_std) = mean_std(&collect(|m| m.accuracy));
    let (d_mean, d_std) = mean_std(&collect(|m| m.detection_rate));
    let aucs: Vec<f64> = folds.iter().filter_map(|r| r.metrics.auc).collect();
    let (auc_mean, auc_std) = if aucs.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&aucs);
        (Some(m), Some(s))
    };
    (
        MetricAggregate {
            precision: p_mean,
            recall: r_mean,
            f1: f_mean,
            accuracy: a_mean,
            detection_rate: d_mean,
            auc: auc_mean,
        },
        MetricAggregate {
            precision: p_std,
            recall: r_std,
            f1: f_std,
            accuracy: a_std,
            detection_rate: d_std,
            auc: auc_std,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    /// Position in enumeration order over the full product.
    pub index: usize,
    pub params: BTreeMap<String, serde_json::Value>,
    pub mean: MetricAggregate,
    pub std: MetricAggregate,
    /// Mean of the selection metric; absent when undefined for this cell.
    pub selection_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub metric: String,
    pub folds: usize,
    pub seed: u64,
    pub total_cells: usize,
    pub evaluated_cells: usize,
    pub cells: Vec<GridCell>,
    pub best_index: usize,
    pub best_params: BTreeMap<String, serde_json::Value>,
    pub best_score: f64,
}

/// Exhaustive (or, with `sample = Some(n)`, seeded uniformly subsampled)
/// grid search. Every cell reruns cross-validation with the grid's overrides
/// applied on top of `base`.
pub fn grid_search(
    data: &Dataset,
    base: &PipelineConfig,
    tune: &TuneConfig,
    external: Option<&[f64]>,
    sample: Option<usize>,
    force: bool,
) -> Result<GridReport> {
    metric_is_known(&tune.metric)?;
    if tune.grid.is_empty() {
        return Err(Error::config("evaluation", "tune.grid is empty; nothing to search"));
    }
    let params: Vec<(&String, &Vec<toml::Value>)> = tune.grid.iter().collect();
    for (key, values) in &params {
        if values.is_empty() {
            return Err(Error::config("evaluation", format!("tune.grid.\"{key}\" has no candidate values")));
        }
    }
    let total: usize = params.iter().map(|(_, v)| v.len()).product();

    let selected: Vec<usize> = match sample {
        None => (0..total).collect(),
        Some(count) => {
            if count == 0 {
                return Err(Error::config("evaluation", "sample size must be at least 1"));
            }
            let count = count.min(total);
            let mut indices: Vec<usize> = (0..total).collect();
            SeededRng::new(tune.seed).shuffle(&mut indices);
            let mut chosen = indices[..count].to_vec();
            chosen.sort_unstable();
            chosen
        }
    };

    let mut cells: Vec<GridCell> = Vec::with_capacity(selected.len());
    let mut best: Option<(usize, f64)> = None;
    for &cell_index in &selected {
        // Decode the flat index with the last parameter varying fastest.
        let mut remainder = cell_index;
        let mut assignment: Vec<(&str, &toml::Value)> = Vec::with_capacity(params.len());
        for (key, values) in params.iter().rev() {
            assignment.push((key.as_str(), &values[remainder % values.len()]));
            remainder /= values.len();
        }
        assignment.reverse();

        let overrides: Vec<(String, toml::Value)> = assignment
            .iter()
            .map(|(key, value)| ((*key).to_string(), (*value).clone()))
            .collect();
        let cfg = with_overrides(base, &overrides)
            .and_then(|cfg| cfg.validate(force).map(|_| cfg))
            .map_err(|e| Error::config("evaluation", format!("grid cell {cell_index}: {e}")))?;
        let cv = cross_validate(data, &cfg, tune.folds, tune.seed, external)?;
        let selection_score = cv.mean.value_of(&tune.metric);
        if let Some(score) = selection_score {
            if best.map_or(true, |(_, b)| score > b) {
                best = Some((cells.len(), score));
            }
        }
        cells.push(GridCell {
            index: cell_index,
            params: assignment
                .iter()
                .map(|(key, value)| ((*key).to_string(), toml_to_json(value)))
                .collect(),
            mean: cv.mean,
            std: cv.std,
            selection_score,
        });
    }

    let (best_pos, best_score) = best.ok_or_else(|| {
        Error::data(
            "evaluation",
            format!("selection metric '{}' was undefined in every evaluated cell", tune.metric),
        )
    })?;
    Ok(GridReport {
        metric: tune.metric.clone(),
        folds: tune.folds,
        seed: tune.seed,
        total_cells: total,
        evaluated_cells: cells.len(),
        best_index: cells[best_pos].index,
        best_params: cells[best_pos].params.clone(),
        best_score,
        cells,
    })
}

fn toml_to_json(value: &toml::Value) -> serde_json::Value {
    match value {
        toml::Value::Integer(i) => serde_json::Value::from(*i),
        toml::Value::Float(f) => serde_json::Value::from(*f),
        toml::Value::Boolean(b) => serde_json::Value::from(*b),
        toml::Value::String(s) => serde_json::Value::from(s.as_str()),
        other => serde_json::Value::from(other.to_string()),
    }
}
