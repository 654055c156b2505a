//! Weighted k-means with per-cluster covariance tracking.
//!
//! This is Lloyd's algorithm where every row carries an instance weight:
//! seeding probabilities, centroid updates, and cluster covariances all use
//! the weights, while the assignment step stays a plain nearest-center rule
//! (weights say how much a row *counts*, not where it *belongs*). With all
//! weights equal the whole procedure collapses to standard k-means.
//!
//! Iteration order is: assign, repair empty clusters, check assignment
//! stability, update centers, update covariances, record the objective.
//! The per-cluster covariances get a `ridge * I` bump so they stay positive
//! definite; in `mahalanobis` metric mode the previous iteration's
//! covariances drive the assignment step (the first assignment, with no
//! covariances yet, is euclidean).
//!
//! Everything downstream of seeding is deterministic, and seeding is fully
//! determined by `cfg.seed`, so equal inputs give bitwise-equal models.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::rng::SeededRng;
use crate::weighting::{normalize_weights, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    #[default]
    Euclidean,
    Mahalanobis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub ridge: f64,
    pub metric: MetricMode,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { k: 2, seed: 0, max_iters: 100, tol: 1e-6, ridge: 1e-6, metric: MetricMode::Euclidean }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("clustering", "k must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("clustering", "max_iters must be at least 1"));
        }
        if !self.tol.is_finite() || self.tol < 0.0 {
            return Err(Error::config("clustering", format!("tol must be finite and non-negative, got {}", self.tol)));
        }
        if !self.ridge.is_finite() || self.ridge < 0.0 {
            return Err(Error::config("clustering", format!("ridge must be finite and non-negative, got {}", self.ridge)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub dims: usize,
    pub metric: MetricMode,
    pub ridge: f64,
    pub centers: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Weighted squared-euclidean objective after each center update.
    pub objective_trace: Vec<f64>,
}

impl ClusterModel {
    /// Objective value at the final iteration.
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("at least one iteration")
    }

    pub fn validate_against(&self, data: &Dataset) -> Result<()> {
        if self.dims != data.dims() {
            return Err(Error::data(
                "scoring",
                format!("model was fit on {} features, data has {}", self.dims, data.dims()),
            ));
        }
        Ok(())
    }
}

/// k-means++ seeding with weight-biased sampling: the first center is drawn
/// proportionally to `w_i`, later centers proportionally to
/// `w_i * D(x_i)^2` with `D` the squared euclidean distance to the nearest
/// chosen center.
pub fn init_centers(data: &Dataset, weights: &Weights, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_shapes(data, weights, k)?;
    let mut rng = SeededRng::new(seed);
    let first = rng.weighted_index(weights.as_slice());
    let mut centers = vec![data.row(first).to_vec()];
    let mut nearest_sq: Vec<f64> = (0..data.n()).map(|i| squared_euclidean(data.row(i), &centers[0])).collect();
    while centers.len() < k {
        let probs: Vec<f64> = (0..data.n()).map(|i| weights.get(i) * nearest_sq[i]).collect();
        if probs.iter().sum::<f64>() <= 0.0 {
            return Err(Error::data(
                "clustering",
                format!("cannot seed {k} centers: every remaining row coincides with a chosen center"),
            ));
        }
        let next = rng.weighted_index(&probs);
        let center = data.row(next).to_vec();
        for i in 0..data.n() {
            nearest_sq[i] = nearest_sq[i].min(squared_euclidean(data.row(i), &center));
        }
        centers.push(center);
    }
    Ok(centers)
}

/// Fit a weighted k-means model with k-means++ seeding.
pub fn weighted_kmeans(data: &Dataset, weights: &Weights, cfg: &ClusterConfig) -> Result<ClusterModel> {
    cfg.validate()?;
    let distinct = data.distinct_rows();
    if cfg.k > distinct {
        return Err(Error::data(
            "clustering",
            format!("k = {} exceeds the {} distinct rows in the data", cfg.k, distinct),
        ));
    }
    let normalized = normalize_weights(weights.as_slice())?;
    let centers = init_centers(data, &normalized, cfg.k, cfg.seed)?;
    run_lloyd(data, &normalized, cfg, centers)
}

/// Fit from caller-supplied initial centers (no seeding step). Weights are
/// mean-normalized before use, exactly as in [`weighted_kmeans`].
pub fn weighted_kmeans_from(
    data: &Dataset,
    weights: &Weights,
    cfg: &ClusterConfig,
    initial_centers: Vec<Vec<f64>>,
) -> Result<ClusterModel> {
    cfg.validate()?;
    if initial_centers.len() != cfg.k {
        return Err(Error::config(
            "clustering",
            format!("{} initial centers for k = {}", initial_centers.len(), cfg.k),
        ));
    }
    if initial_centers.iter().any(|c| c.len() != data.dims()) {
        return Err(Error::config("clustering", "initial center dimensionality does not match the data"));
    }
    let normalized = normalize_weights(weights.as_slice())?;
    check_shapes(data, &normalized, cfg.k)?;
    run_lloyd(data, &normalized, cfg, initial_centers)
}

fn check_shapes(data: &Dataset, weights: &Weights, k: usize) -> Result<()> {
    data.require_finite("clustering")?;
    if weights.len() != data.n() {
        return Err(Error::data(
            "clustering",
            format!("{} weights for {} rows", weights.len(), data.n()),
        ));
    }
    if k == 0 {
        return Err(Error::config("clustering", "k must be at least 1"));
    }
    if k > data.n() {
        return Err(Error::data("clustering", format!("k = {k} exceeds the {} rows", data.n())));
    }
    Ok(())
}

fn run_lloyd(data: &Dataset, weights: &Weights, cfg: &ClusterConfig, mut centers: Vec<Vec<f64>>) -> Result<ClusterModel> {
    let n = data.n();
    let d = data.dims();
    let k = cfg.k;

    let mut covariances: Option<Vec<Vec<Vec<f64>>>> = None;
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let factors = match (cfg.metric, &covariances) {
            (MetricMode::Mahalanobis, Some(covs)) => {
                let mut list = Vec::with_capacity(k);
                for cov in covs {
                    list.push(SpdFactor::new(cov).map_err(|_| {
                        Error::numeric(
                            "clustering",
                            "cluster covariance lost positive definiteness; increase cluster.ridge",
                        )
                    })?);
                }
                Some(list)
            }
            _ => None,
        };

        let (mut new_assignments, mut best_sq) = assign_rows(data, &centers, factors.as_deref());
        repair_empty_clusters(data, weights, &mut centers, &mut new_assignments, &mut best_sq)?;

        if !assignments.is_empty() && new_assignments == assignments {
            converged = true;
            break;
        }
        assignments = new_assignments;

        // Weighted centroid update.
        let mut mass = vec![0.0f64; k];
        let mut sums = vec![vec![0.0f64; d]; k];
        for i in 0..n {
            let j = assignments[i];
            let w = weights.get(i);
            mass[j] += w;
            for (s, x) in sums[j].iter_mut().zip(data.row(i)) {
                *s += w * x;
            }
        }
        let mut max_shift: f64 = 0.0;
        for j in 0..k {
            debug_assert!(mass[j] > 0.0, "cluster {j} empty after repair");
            let new_center: Vec<f64> = sums[j].iter().map(|s| s / mass[j]).collect();
            max_shift = max_shift.max(squared_euclidean(&new_center, &centers[j]).sqrt());
            centers[j] = new_center;
        }

        covariances = Some(weighted_covariances(data, weights, &assignments, &centers, &mass, cfg.ridge));
        trace.push(objective_value(data, weights, &assignments, &centers));
        iterations += 1;

        if max_shift < cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
    }

    Ok(ClusterModel {
        k,
        dims: d,
        metric: cfg.metric,
        ridge: cfg.ridge,
        centers,
        covariances: covariances.expect("at least one update iteration"),
        assignments,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Nearest-center assignment. Ties go to the lowest cluster index. Returns
/// the per-row squared distance to the chosen center under the active
/// metric.
fn assign_rows(data: &Dataset, centers: &[Vec<f64>], factors: Option<&[SpdFactor]>) -> (Vec<usize>, Vec<f64>) {
    let n = data.n();
    let mut assignments = vec![0usize; n];
    let mut best_sq = vec![0.0f64; n];
    let mut diff = vec![0.0f64; data.dims()];
    for i in 0..n {
        let row = data.row(i);
        let mut best = f64::INFINITY;
        let mut best_j = 0;
        for (j, center) in centers.iter().enumerate() {
            let dist_sq = match factors {
                Some(list) => {
                    for ((out, x), c) in diff.iter_mut().zip(row).zip(center) {
                        *out = x - c;
                    }
                    list[j].squared_mahalanobis(&diff)
                }
                None => squared_euclidean(row, center),
            };
            if dist_sq < best {
                best = dist_sq;
                best_j = j;
            }
        }
        assignments[i] = best_j;
        best_sq[i] = best;
    }
    (assignments, best_sq)
}

/// Reseed empty clusters, in ascending cluster index, to the row with the
/// largest weighted squared distance to its current center, considering only
/// rows whose cluster would not become empty in turn. Ties go to the lowest
/// row index.
fn repair_empty_clusters(
    data: &Dataset,
    weights: &Weights,
    centers: &mut [Vec<f64>],
    assignments: &mut [usize],
    best_sq: &mut [f64],
) -> Result<()> {
    let k = centers.len();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        let mut donor_score = f64::NEG_INFINITY;
        for i in 0..data.n() {
            if sizes[assignments[i]] < 2 {
                continue;
            }
            let score = weights.get(i) * best_sq[i];
            if score > donor_score {
                donor_score = score;
                donor = Some(i);
            }
        }
        let i = donor.ok_or_else(|| {
            Error::data("clustering", format!("cluster {j} is empty and no donor row is available"))
        })?;
        sizes[assignments[i]] -= 1;
        sizes[j] += 1;
        assignments[i] = j;
        centers[j] = data.row(i).to_vec();
        best_sq[i] = 0.0;
    }
    Ok(())
}

fn weighted_covariances(
    data: &Dataset,
    weights: &Weights,
    assignments: &[usize],
    centers: &[Vec<f64>],
    mass: &[f64],
    ridge: f64,
) -> Vec<Vec<Vec<f64>>> {
    let d = data.dims();
    let k = centers.len();
    let mut covs = vec![vec![vec![0.0f64; d]; d]; k];
    let mut diff = vec![0.0f64; d];
    for i in 0..data.n() {
        let j = assignments[i];
        let w = weights.get(i);
        for ((out, x), c) in diff.iter_mut().zip(data.row(i)).zip(&centers[j]) {
            *out = x - c;
        }
        for a in 0..d {
            let wa = w * diff[a];
            for b in a..d {
                covs[j][a][b] += wa * diff[b];
            }
        }
    }
    for j in 0..k {
        for a in 0..d {
            for b in a..d {
                let v = covs[j][a][b] / mass[j];
                covs[j][a][b] = v;
                covs[j][b][a] = v;
            }
            covs[j][a][a] += ridge;
        }
    }
    covs
}

fn objective_value(data: &Dataset, weights: &Weights, assignments: &[usize], centers: &[Vec<f64>]) -> f64 {
    (0..data.n())
        .map(|i| weights.get(i) * squared_euclidean(data.row(i), &centers[assignments[i]]))
        .sum()
}

/// Weighted squared-euclidean objective of `model`'s assignment on `data`.
/// Weights are mean-normalized first, matching the fit.
pub fn weighted_objective(data: &Dataset, weights: &Weights, model: &ClusterModel) -> Result<f64> {
    model.validate_against(data)?;
    if model.assignments.len() != data.n() {
        return Err(Error::data(
            "clustering",
            format!("model has {} assignments for {} rows", model.assignments.len(), data.n()),
        ));
    }
    let normalized = normalize_weights(weights.as_slice())?;
    if normalized.len() != data.n() {
        return Err(Error::data("clustering", format!("{} weights for {} rows", normalized.len(), data.n())));
    }
    Ok(objective_value(data, &normalized, &model.assignments, &model.centers))
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: Vec<Vec<f64>>) -> Dataset {
        let d = rows[0].len();
        let names = (0..d).map(|j| format!("f{j}")).collect();
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Dataset::from_rows(rows, names, ids, None).unwrap()
    }

    fn cfg(k: usize, seed: u64) -> ClusterConfig {
        ClusterConfig { k, seed, ..Default::default() }
    }

    #[test]
    fn single_cluster_center_is_the_weighted_mean() {
        let d = dataset(vec![vec![0.0], vec![1.0]]);
        let w = Weights::new(vec![1.0, 3.0]).unwrap();
        let model = weighted_kmeans(&d, &w, &cfg(1, 0)).unwrap();
        assert!((model.centers[0][0] - 0.75).abs() < 1e-15);
        assert_eq!(model.assignments, vec![0, 0]);
        assert!(model.converged);
    }

    #[test]
    fn uniform_weights_give_the_plain_mean() {
        let d = dataset(vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 4.0]]);
        let w = Weights::new(vec![1.0; 3]).unwrap();
        let model = weighted_kmeans(&d, &w, &cfg(1, 0)).unwrap();
        assert_eq!(model.centers[0], vec![3.0, 4.0]);
    }

    #[test]
    fn k_equal_to_distinct_rows_puts_a_center_on_every_point() {
        let d = dataset(vec![vec![0.0], vec![5.0], vec![9.0]]);
        let w = Weights::new(vec![1.0; 3]).unwrap();
        let model = weighted_kmeans(&d, &w, &cfg(3, 42)).unwrap();
        let mut centers: Vec<f64> = model.centers.iter().map(|c| c[0]).collect();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(centers, vec![0.0, 5.0, 9.0]);
        assert!(model.objective() < 1e-30);
    }

    #[test]
    fn k_beyond_distinct_rows_is_rejected() {
        let d = dataset(vec![vec![1.0], vec![1.0], vec![2.0]]);
        let w = Weights::new(vec![1.0; 3]).unwrap();
        let err = weighted_kmeans(&d, &w, &cfg(3, 0)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(weighted_kmeans(&d, &w, &cfg(2, 0)).is_ok());
    }

    #[test]
    fn two_blobs_separate() {
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push(vec![i as f64 * 0.01, 0.0]);
            rows.push(vec![10.0 + i as f64 * 0.01, 5.0]);
        }
        let d = dataset(rows);
        let w = Weights::new(vec![1.0; 20]).unwrap();
        let model = weighted_kmeans(&d, &w, &cfg(2, 7)).unwrap();
        for i in 0..10 {
            assert_eq!(model.assignments[2 * i], model.assignments[0]);
            assert_eq!(model.assignments[2 * i + 1], model.assignments[1]);
        }
        assert_ne!(model.assignments[0], model.assignments[1]);
        assert!(model.converged);
    }

    #[test]
    fn objective_trace_never_increases() {
        let mut rows = Vec::new();
        let mut state = 88172645463325252u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..60 {
            rows.push(vec![next() * 10.0, next() * 10.0, next() * 10.0]);
        }
        let weights = Weights::new((0..60).map(|_| 0.1 + next()).collect()).unwrap();
        let d = dataset(rows);
        let model = weighted_kmeans(&d, &weights, &cfg(4, 3)).unwrap();
        for pair in model.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "trace increased: {:?}", model.objective_trace);
        }
    }

    #[test]
    fn trace_end_matches_recomputed_objective() {
        let d = dataset(vec![vec![0.0], vec![1.0], vec![4.0], vec![5.0]]);
        let w = Weights::new(vec![1.0, 2.0, 1.0, 2.0]).unwrap();
        let model = weighted_kmeans(&d, &w, &cfg(2, 1)).unwrap();
        let recomputed = weighted_objective(&d, &w, &model).unwrap();
        assert!((model.objective() - recomputed).abs() < 1e-12);
    }

    #[test]
    fn weight_scale_is_irrelevant_after_normalization() {
        let d = dataset(vec![vec![0.0], vec![1.0], vec![4.0], vec![5.0], vec![9.0]]);
        let w1 = Weights::new(vec![1.0, 2.0, 3.0, 2.0, 1.0]).unwrap();
        let w2 = Weights::new(vec![10.0, 20.0, 30.0, 20.0, 10.0]).unwrap();
        let m1 = weighted_kmeans(&d, &w1, &cfg(2, 5)).unwrap();
        let m2 = weighted_kmeans(&d, &w2, &cfg(2, 5)).unwrap();
        assert_eq!(m1.assignments, m2.assignments);
        for (c1, c2) in m1.centers.iter().zip(&m2.centers) {
            for (a, b) in c1.iter().zip(c2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariances_carry_the_ridge_and_stay_spd() {
        let d = dataset(vec![vec![0.0], vec![1.0]]);
        let w = Weights::new(vec![1.0, 3.0]).unwrap();
        let config = ClusterConfig { ridge: 1e-3, ..cfg(1, 0) };
        let model = weighted_kmeans(&d, &w, &config).unwrap();
        // Normalized weights (0.5, 1.5), center 0.75: weighted variance is
        // (0.5 * 0.75^2 + 1.5 * 0.25^2) / 2 = 0.1875.
        assert!((model.covariances[0][0][0] - (0.1875 + 1e-3)).abs() < 1e-12);
        assert!(SpdFactor::new(&model.covariances[0]).is_ok());
    }

    #[test]
    fn identical_seeds_give_identical_models() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 7) as f64, (i % 5) as f64]).collect();
        let d = dataset(rows);
        let w = Weights::new((0..30).map(|i| 1.0 + (i % 3) as f64).collect()).unwrap();
        let m1 = weighted_kmeans(&d, &w, &cfg(3, 11)).unwrap();
        let m2 = weighted_kmeans(&d, &w, &cfg(3, 11)).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn adversarial_initial_centers_trigger_empty_cluster_repair() {
        let d = dataset(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let w = Weights::new(vec![1.0; 4]).unwrap();
        // Both initial centers sit far to the right; every point prefers the
        // nearer one and the other starts empty.
        let model = weighted_kmeans_from(&d, &w, &cfg(2, 0), vec![vec![100.0], vec![200.0]]).unwrap();
        let mut sizes = vec![0usize; 2];
        for &a in &model.assignments {
            sizes[a] += 1;
        }
        assert!(sizes.iter().all(|&s| s > 0), "sizes {sizes:?}");
    }

    #[test]
    fn mahalanobis_metric_mode_produces_a_valid_model() {
        let mut rows = Vec::new();
        for i in 0..12 {
            rows.push(vec![i as f64 * 0.1, i as f64 * 0.05 + 1.0]);
            rows.push(vec![8.0 + i as f64 * 0.1, -3.0 + i as f64 * 0.02]);
        }
        let d = dataset(rows);
        let w = Weights::new(vec![1.0; 24]).unwrap();
        let config = ClusterConfig { metric: MetricMode::Mahalanobis, ..cfg(2, 9) };
        let model = weighted_kmeans(&d, &w, &config).unwrap();
        assert_eq!(model.centers.len(), 2);
        assert_eq!(model.covariances.len(), 2);
        assert!(model.iterations <= config.max_iters);
        for cov in &model.covariances {
            assert!(SpdFactor::new(cov).is_ok());
        }
    }

    #[test]
    fn iteration_count_respects_max_iters() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.77).sin(), (i as f64 * 0.31).cos()]).collect();
        let d = dataset(rows);
        let w = Weights::new(vec![1.0; 40]).unwrap();
        let config = ClusterConfig { max_iters: 2, tol: 0.0, ..cfg(5, 13) };
        let model = weighted_kmeans(&d, &w, &config).unwrap();
        assert!(model.iterations <= 2);
        assert_eq!(model.objective_trace.len(), model.iterations);
    }

    #[test]
    fn config_validation_catches_bad_parameters() {
        let d = dataset(vec![vec![0.0], vec![1.0]]);
        let w = Weights::new(vec![1.0, 1.0]).unwrap();
        assert!(weighted_kmeans(&d, &w, &cfg(0, 0)).is_err());
        assert!(weighted_kmeans(&d, &w, &ClusterConfig { tol: -1.0, ..cfg(1, 0) }).is_err());
        assert!(weighted_kmeans(&d, &w, &ClusterConfig { ridge: f64::NAN, ..cfg(1, 0) }).is_err());
        assert!(weighted_kmeans(&d, &w, &ClusterConfig { max_iters: 0, ..cfg(1, 0) }).is_err());
    }

    #[test]
    fn seeding_is_weight_biased() {
        // A heavy point should be picked as the first center essentially
        // always when its weight dwarfs the rest.
        let d = dataset(vec![vec![0.0], vec![100.0]]);
        let w = Weights::new(vec![1e-9, 1.0]).unwrap();
        let mut hits = 0;
        for seed in 0..50 {
            let centers = init_centers(&d, &w, 1, seed).unwrap();
            if centers[0][0] == 100.0 {
                hits += 1;
            }
        }
        assert_eq!(hits, 50);
    }
}
