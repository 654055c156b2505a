//! Labeled synthetic benchmark: two unit-covariance Gaussian clusters at
//! (0, 0) and (6, 6) plus uniform background outliers on [−10, 16]². The
//! generator is fully determined by its seed, so the benchmark doubles as a
//! fixture for determinism checks.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub inliers: usize,
    pub outliers: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { inliers: 950, outliers: 50, seed: 0 }
    }
}

/// Generate the benchmark as a labeled dataset: inliers first (half per
/// cluster, the extra one at the origin), then outliers, labels `true` on
/// the outliers.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    if spec.inliers + spec.outliers == 0 {
        return Err(Error::config("synth", "inliers + outliers must be at least 1"));
    }
    let mut rng = SeededRng::new(spec.seed);
    let mut rows = Vec::with_capacity(spec.inliers + spec.outliers);
    let first_cluster = spec.inliers.div_ceil(2);
    for i in 0..spec.inliers {
        let c = if i < first_cluster { 0.0 } else { 6.0 };
        rows.push(vec![c + rng.next_gaussian(), c + rng.next_gaussian()]);
    }
    for _ in 0..spec.outliers {
        rows.push(vec![-10.0 + 26.0 * rng.next_f64(), -10.0 + 26.0 * rng.next_f64()]);
    }
    let mut labels = vec![false; spec.inliers];
    labels.extend(std::iter::repeat(true).take(spec.outliers));
    let ids = (0..rows.len()).map(|i| i.to_string()).collect();
    Dataset::from_rows(rows, vec!["x".to_string(), "y".to_string()], ids, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let spec = SynthSpec { inliers: 100, outliers: 10, seed: 42 };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = generate(&SynthSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(generate(&spec).unwrap(), other);
    }

    #[test]
    fn counts_labels_and_names_are_as_specified() {
        let data = generate(&SynthSpec::default()).unwrap();
        assert_eq!(data.n(), 1000);
        assert_eq!(data.dims(), 2);
        assert_eq!(data.feature_names(), ["x", "y"]);
        let labels = data.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l).count(), 50);
        assert!(labels[..950].iter().all(|&l| !l));
        assert!(labels[950..].iter().all(|&l| l));
    }

    #[test]
    fn outliers_stay_inside_the_sampling_box() {
        let data = generate(&SynthSpec::default()).unwrap();
        for i in 950..1000 {
            let row = data.row(i);
            assert!(row.iter().all(|&v| (-10.0..=16.0).contains(&v)), "row {i}: {row:?}");
        }
    }

    #[test]
    fn clusters_sit_near_their_centers() {
        let data = generate(&SynthSpec::default()).unwrap();
        let mean_of = |range: std::ops::Range<usize>| {
            let mut sum = [0.0f64; 2];
            for i in range.clone() {
                let row = data.row(i);
                sum[0] += row[0];
                sum[1] += row[1];
            }
            [sum[0] / range.len() as f64, sum[1] / range.len() as f64]
        };
        let first = mean_of(0..475);
        let second = mean_of(475..950);
        assert!(first[0].abs() < 0.2 && first[1].abs() < 0.2, "{first:?}");
        assert!((second[0] - 6.0).abs() < 0.2 && (second[1] - 6.0).abs() < 0.2, "{second:?}");
    }

    #[test]
    fn odd_inlier_counts_put_the_extra_point_at_the_origin() {
        let data = generate(&SynthSpec { inliers: 3, outliers: 0, seed: 1 }).unwrap();
        // Rows 0 and 1 belong to the origin cluster, row 2 to (6, 6).
        assert!(data.row(0)[0].abs() < 5.0);
        assert!(data.row(1)[0].abs() < 5.0);
        assert!((data.row(2)[0] - 6.0).abs() < 5.0);
    }

    #[test]
    fn empty_specs_are_rejected() {
        assert!(generate(&SynthSpec { inliers: 0, outliers: 0, seed: 0 }).is_err());
    }
}
