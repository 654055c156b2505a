//! Turning scores into flags.
//!
//! All policies share one rule: a row is flagged iff its score is *strictly*
//! above the threshold, so ties at the threshold stay unflagged. The
//! quantile policy uses the nearest-rank definition (the `ceil(q * n)`-th
//! smallest score); the chi-square policy takes the square root of the
//! chi-square quantile at `1 - alpha`, which calibrates flags to a target
//! false-positive rate when scores are Mahalanobis distances of roughly
//! Gaussian data under uniform weights.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::ScoreVector;
use crate::stats::chi2_quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMeta {
    /// Scoring method that produced the scores, when known to the caller.
    pub score_method: Option<String>,
    pub threshold_policy: String,
    pub threshold_params: BTreeMap<String, f64>,
    /// Path or identifier of the model used, when scoring out-of-sample.
    pub model_ref: Option<String>,
}

impl DetectionMeta {
    fn new(policy: &str, params: &[(&str, f64)]) -> Self {
        DetectionMeta {
            score_method: None,
            threshold_policy: policy.to_string(),
            threshold_params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            model_ref: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub scores: ScoreVector,
    /// Absent for the density scorer, whose flags are not threshold-based.
    pub threshold: Option<f64>,
    pub flags: Vec<bool>,
    pub meta: DetectionMeta,
}

impl DetectionResult {
    pub fn flag_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Density-style result with precomputed flags and no threshold.
    pub fn from_flags(scores: ScoreVector, flags: Vec<bool>, meta: DetectionMeta) -> Result<Self> {
        if scores.len() != flags.len() {
            return Err(Error::data(
                "threshold",
                format!("{} flags for {} scores", flags.len(), scores.len()),
            ));
        }
        Ok(DetectionResult { scores, threshold: None, flags, meta })
    }
}

fn flag_above(scores: &ScoreVector, threshold: f64, meta: DetectionMeta) -> DetectionResult {
    let flags = scores.as_slice().iter().map(|&s| s > threshold).collect();
    DetectionResult { scores: scores.clone(), threshold: Some(threshold), flags, meta }
}

/// Flag scores strictly above a caller-chosen cutoff.
pub fn fixed_threshold(scores: &ScoreVector, t: f64) -> Result<DetectionResult> {
    if !t.is_finite() {
        return Err(Error::config("threshold", format!("fixed threshold must be finite, got {t}")));
    }
    Ok(flag_above(scores, t, DetectionMeta::new("fixed", &[("t", t)])))
}

/// Flag scores strictly above the empirical `q`-quantile (nearest-rank:
/// the `ceil(q * n)`-th smallest score).
pub fn quantile_threshold(scores: &ScoreVector, q: f64) -> Result<DetectionResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::config("threshold", format!("quantile q must lie in (0, 1), got {q}")));
    }
    let n = scores.len();
    let rank = (q * n as f64).ceil() as usize;
    let rank = rank.clamp(1, n);
    let mut sorted = scores.as_slice().to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let threshold = sorted[rank - 1];
    Ok(flag_above(scores, threshold, DetectionMeta::new("quantile", &[("q", q)])))
}

/// Flag scores strictly above `sqrt(chi2_quantile(1 - alpha, dims))`.
///
/// The calibration argument assumes the scores are plain Mahalanobis
/// distances (uniform weights); the pipeline refuses this policy for
/// weighted scores unless forced.
pub fn chisq_threshold(scores: &ScoreVector, alpha: f64, dims: usize) -> Result<DetectionResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("threshold", format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if dims == 0 {
        return Err(Error::config("threshold", "chisq policy needs dims >= 1"));
    }
    let threshold = chi2_quantile(1.0 - alpha, dims)?.sqrt();
    let mut meta = DetectionMeta::new("chisq", &[("alpha", alpha)]);
    meta.threshold_params.insert("dims".to_string(), dims as f64);
    Ok(flag_above(scores, threshold, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(values: Vec<f64>) -> ScoreVector {
        ScoreVector::new(values).unwrap()
    }

    #[test]
    fn fixed_threshold_is_strict() {
        let result = fixed_threshold(&scores(vec![1.0, 2.0, 3.0]), 2.0).unwrap();
        assert_eq!(result.flags, vec![false, false, true]);
        assert_eq!(result.threshold, Some(2.0));
        assert_eq!(result.flag_count(), 1);
    }

    #[test]
    fn quantile_on_one_to_hundred_flags_the_top_five() {
        let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let result = quantile_threshold(&scores(values), 0.95).unwrap();
        assert_eq!(result.threshold, Some(95.0));
        assert_eq!(result.flag_count(), 5);
    }

    #[test]
    fn quantile_with_a_single_score_flags_nothing() {
        let result = quantile_threshold(&scores(vec![4.2]), 0.5).unwrap();
        assert_eq!(result.threshold, Some(4.2));
        assert_eq!(result.flags, vec![false]);
    }

    #[test]
    fn equal_scores_are_never_flagged_by_quantile() {
        for q in [0.1, 0.5, 0.9, 0.99] {
            let result = quantile_threshold(&scores(vec![3.0; 7]), q).unwrap();
            assert_eq!(result.flag_count(), 0, "q={q}");
        }
    }

    #[test]
    fn quantile_ignores_input_order() {
        let a = quantile_threshold(&scores(vec![5.0, 1.0, 3.0, 2.0, 4.0]), 0.6).unwrap();
        let b = quantile_threshold(&scores(vec![1.0, 2.0, 3.0, 4.0, 5.0]), 0.6).unwrap();
        assert_eq!(a.threshold, b.threshold);
    }

    #[test]
    fn quantile_rejects_degenerate_q() {
        let s = scores(vec![1.0, 2.0]);
        assert!(quantile_threshold(&s, 0.0).is_err());
        assert!(quantile_threshold(&s, 1.0).is_err());
        assert!(quantile_threshold(&s, -0.2).is_err());
    }

    #[test]
    fn chisq_two_dims_alpha_five_percent() {
        let s = scores(vec![1.0, 2.0, 2.5]);
        let result = chisq_threshold(&s, 0.05, 2).unwrap();
        let expected = (-2.0 * 0.05f64.ln()).sqrt();
        assert!((result.threshold.unwrap() - expected).abs() < 1e-9);
        assert_eq!(result.flags, vec![false, false, true]);
    }

    #[test]
    fn chisq_one_dim_at_the_sigma_point() {
        // alpha chosen so the threshold is one standard deviation.
        let s = scores(vec![0.5, 1.5]);
        let result = chisq_threshold(&s, 1.0 - 0.682_689_492_137_085_9, 1).unwrap();
        assert!((result.threshold.unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn chisq_high_alpha_flags_every_positive_score() {
        let s = scores(vec![0.01, 0.5, 3.0]);
        let result = chisq_threshold(&s, 0.999999, 2).unwrap();
        assert_eq!(result.flag_count(), 3);
    }

    #[test]
    fn raising_the_bar_only_unflags() {
        let s = scores(vec![0.3, 1.2, 2.7, 3.3, 0.9, 2.2]);
        let loose = fixed_threshold(&s, 1.0).unwrap();
        let tight = fixed_threshold(&s, 2.5).unwrap();
        for (l, t) in loose.flags.iter().zip(&tight.flags) {
            assert!(*l || !*t);
        }
        let loose = quantile_threshold(&s, 0.5).unwrap();
        let tight = quantile_threshold(&s, 0.9).unwrap();
        for (l, t) in loose.flags.iter().zip(&tight.flags) {
            assert!(*l || !*t);
        }
    }

    #[test]
    fn meta_records_policy_and_parameters() {
        let s = scores(vec![1.0]);
        let result = chisq_threshold(&s, 0.05, 3).unwrap();
        assert_eq!(result.meta.threshold_policy, "chisq");
        assert_eq!(result.meta.threshold_params["alpha"], 0.05);
        assert_eq!(result.meta.threshold_params["dims"], 3.0);
        assert!(result.meta.score_method.is_none());
    }
}
