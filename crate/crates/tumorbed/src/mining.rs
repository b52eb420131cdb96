//! Negative-sample mining over precomputed patch features.
//!
//! The pool of candidate negatives is clustered with seeded mini-batch
//! k-means (k-means++ init on a subsample, streaming per-center updates with
//! learning rate 1/count), and the `m` patches nearest each centroid are
//! selected. A seeded uniform sample is the baseline. Class-balance helpers
//! compute cross-entropy weights and minority-oversampling multiplicities.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity of one candidate patch: source slide and tile position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchId {
    pub slide_id: String,
    pub x: u32,
    pub y: u32,
}

/// Row-major n x d feature matrix with per-row patch identities.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    values: Vec<f32>,
    ids: Vec<PatchId>,
}

impl FeatureMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f32>, ids: Vec<PatchId>) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::invalid(format!(
                "feature buffer has {} values, expected {}",
                values.len(),
                n * d
            )));
        }
        if ids.len() != n {
            return Err(Error::invalid(format!(
                "id table has {} rows, expected {n}",
                ids.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(FeatureMatrix { n, d, values, ids })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn ids(&self) -> &[PatchId] {
        &self.ids
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Mean Euclidean norm of the rows; the scale used for the convergence
    /// tolerance.
    pub fn mean_norm(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let sum: f64 = (0..self.n)
            .map(|i| self.row(i).iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt())
            .sum();
        sum / self.n as f64
    }
}

#[inline]
fn dist2_to_centroid(row: &[f32], centroid: &[f64]) -> f64 {
    row.iter()
        .zip(centroid)
        .map(|(&x, &c)| {
            let dxy = x as f64 - c;
            dxy * dxy
        })
        .sum()
}

/// Trained clustering: k centroids over d dimensions, with per-centroid
/// streaming assignment counts.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub k: usize,
    pub d: usize,
    /// Row-major k x d.
    pub centroids: Vec<f64>,
    /// Streaming assignment counts; sums to the total samples processed.
    pub counts: Vec<u64>,
    pub seed: u64,
    pub iterations_run: usize,
}

impl ClusterModel {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.d..(c + 1) * self.d]
    }

    /// Nearest centroid and squared distance for one feature row.
    pub fn assign(&self, row: &[f32]) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for c in 0..self.k {
            let d2 = dist2_to_centroid(row, self.centroid(c));
            if d2 < best.1 {
                best = (c, d2);
            }
        }
        best
    }
}

/// Mini-batch k-means configuration. Batch size, iteration cap, and the
/// k-means++ subsample factor are artifact defaults; the reference pipeline
/// uses k = 3000 over 1.4 M feature vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub batch_size: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Convergence: stop when the max centroid displacement in one batch
    /// falls below `tol_rel * mean feature norm`.
    pub tol_rel: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 3000,
            batch_size: 256,
            max_iters: 100,
            seed: 0,
            tol_rel: 1e-4,
        }
    }
}

/// k-means++ initialization on a seeded subsample of up to `10 * k` rows.
/// Exposed so reference implementations can start from the same centers.
pub fn kmeans_plus_plus_init(features: &FeatureMatrix, k: usize, seed: u64) -> Result<Vec<f64>> {
    if k == 0 || k > features.n() {
        return Err(Error::invalid(format!(
            "k = {k} must be in 1..={}",
            features.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = features.n();
    let d = features.d();
    let sub_size = (10 * k).min(n);
    let mut indices: Vec<usize> = (0..n).collect();
    let (subsample, _) = indices.partial_shuffle(&mut rng, sub_size);
    let subsample: Vec<usize> = subsample.to_vec();

    let mut centers: Vec<f64> = Vec::with_capacity(k * d);
    let first = subsample[rng.random_range(0..subsample.len())];
    centers.extend(features.row(first).iter().map(|&v| v as f64));

    // Min squared distance from each subsample row to the chosen centers.
    let mut min_d2: Vec<f64> = subsample
        .iter()
        .map(|&i| dist2_to_centroid(features.row(i), &centers[0..d]))
        .collect();

    while centers.len() < k * d {
        let total: f64 = min_d2.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = subsample.len() - 1;
            for (j, &w) in min_d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    pick = j;
                    break;
                }
            }
            pick
        } else {
            // All remaining mass on duplicates of chosen centers; take the
            // first subsample row not yet used as a center.
            (0..subsample.len())
                .find(|&j| min_d2[j] > 0.0 || !is_center(features, &centers, d, subsample[j]))
                .unwrap_or(0)
        };
        let row = features.row(subsample[chosen]);
        let start = centers.len();
        centers.extend(row.iter().map(|&v| v as f64));
        for (j, &i) in subsample.iter().enumerate() {
            let d2 = dist2_to_centroid(features.row(i), &centers[start..start + d]);
            if d2 < min_d2[j] {
                min_d2[j] = d2;
            }
        }
    }
    Ok(centers)
}

fn is_center(features: &FeatureMatrix, centers: &[f64], d: usize, row: usize) -> bool {
    let r = features.row(row);
    centers
        .chunks(d)
        .any(|c| c.iter().zip(r).all(|(&cv, &rv)| cv == rv as f64))
}

/// Seeded mini-batch k-means.
///
/// Each iteration draws `batch_size` rows (with replacement), assigns them to
/// the nearest centroid by squared Euclidean distance, and applies streaming
/// per-center updates with learning rate 1/count. Stops at `max_iters` or
/// when centroids move less than the tolerance.
pub fn minibatch_kmeans(features: &FeatureMatrix, params: &KMeansParams) -> Result<ClusterModel> {
    if params.k == 0 || params.k > features.n() {
        return Err(Error::invalid(format!(
            "k = {} must be in 1..={}",
            params.k,
            features.n()
        )));
    }
    if params.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let d = features.d();
    let n = features.n();
    let mut centroids = kmeans_plus_plus_init(features, params.k, params.seed)?;
    let mut counts = vec![0u64; params.k];
    // Separate stream from the init so batch draws do not depend on k.
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(0x9E37_79B9));
    let tol = params.tol_rel * features.mean_norm();

    let mut iterations_run = 0;
    let mut assignments: Vec<usize> = vec![0; params.batch_size];
    for _ in 0..params.max_iters {
        iterations_run += 1;
        let batch: Vec<usize> = (0..params.batch_size)
            .map(|_| rng.random_range(0..n))
            .collect();
        for (slot, &i) in batch.iter().enumerate() {
            let mut best = (0usize, f64::INFINITY);
            for c in 0..params.k {
                let d2 = dist2_to_centroid(features.row(i), &centroids[c * d..(c + 1) * d]);
                if d2 < best.1 {
                    best = (c, d2);
                }
            }
            assignments[slot] = best.0;
        }
        let mut max_shift2: f64 = 0.0;
        for (slot, &i) in batch.iter().enumerate() {
            let c = assignments[slot];
            counts[c] += 1;
            let lr = 1.0 / counts[c] as f64;
            let row = features.row(i);
            let mut shift2 = 0.0;
            for (cv, &xv) in centroids[c * d..(c + 1) * d].iter_mut().zip(row) {
                let step = lr * (xv as f64 - *cv);
                shift2 += step * step;
                *cv += step;
            }
            max_shift2 = max_shift2.max(shift2);
        }
        if max_shift2.sqrt() < tol {
            break;
        }
    }

    Ok(ClusterModel {
        k: params.k,
        d,
        centroids,
        counts,
        seed: params.seed,
        iterations_run,
    })
}

/// Within-cluster sum of squares of a centroid set over a feature matrix.
pub fn wcss(features: &FeatureMatrix, centroids: &[f64], d: usize) -> f64 {
    let k = centroids.len() / d;
    (0..features.n())
        .map(|i| {
            let row = features.row(i);
            (0..k)
                .map(|c| dist2_to_centroid(row, &centroids[c * d..(c + 1) * d]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingStrategy {
    KMeans,
    Random,
    None,
}

impl std::fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SamplingStrategy::KMeans => write!(f, "kmeans"),
            SamplingStrategy::Random => write!(f, "random"),
            SamplingStrategy::None => write!(f, "none"),
        }
    }
}

/// Selected patches plus optional class-balance metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplePlan {
    pub strategy: SamplingStrategy,
    pub seed: u64,
    pub selected: Vec<PatchId>,
    /// (majority, minority) per-epoch pass multiplicities, when requested.
    pub multiplicities: Option<(u32, u32)>,
    /// Per-class loss weights, when requested.
    pub loss_weights: Option<Vec<f64>>,
}

/// Selects the `m` assigned patches nearest each centroid (fewer when a
/// cluster is smaller; empty clusters contribute nothing). Distance ties
/// break toward the smaller row index. The reference configuration
/// (k = 3000, m = 7) yields up to 21000 patches.
pub fn sample_per_cluster(
    model: &ClusterModel,
    features: &FeatureMatrix,
    m: usize,
) -> Result<SamplePlan> {
    if model.d != features.d() {
        return Err(Error::invalid(format!(
            "model dimension {} does not match features {}",
            model.d,
            features.d()
        )));
    }
    let mut members: Vec<Vec<(f64, usize)>> = vec![Vec::new(); model.k];
    for i in 0..features.n() {
        let (c, d2) = model.assign(features.row(i));
        members[c].push((d2, i));
    }
    let mut selected = Vec::new();
    let mut empty = 0usize;
    for cluster in &mut members {
        if cluster.is_empty() {
            empty += 1;
            continue;
        }
        cluster.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, i) in cluster.iter().take(m) {
            selected.push(features.ids()[i].clone());
        }
    }
    if empty > 0 {
        log::debug!("{empty} of {} clusters are empty", model.k);
    }
    Ok(SamplePlan {
        strategy: SamplingStrategy::KMeans,
        seed: model.seed,
        selected,
        multiplicities: None,
        loss_weights: None,
    })
}

/// Seeded uniform sample without replacement from the pool.
pub fn random_sample(pool: &[PatchId], m_total: usize, seed: u64) -> Result<SamplePlan> {
    if m_total > pool.len() {
        return Err(Error::invalid(format!(
            "cannot sample {m_total} from a pool of {}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    let (chosen, _) = indices.partial_shuffle(&mut rng, m_total);
    let selected = chosen.iter().map(|&i| pool[i].clone()).collect();
    Ok(SamplePlan {
        strategy: SamplingStrategy::Random,
        seed,
        selected,
        multiplicities: None,
        loss_weights: None,
    })
}

/// Cross-entropy class weighting schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// Directly proportional to the class distribution.
    Prop,
    /// Inversely proportional, normalized to mean 1.
    InvProp,
    /// All ones.
    Equal,
}

/// Per-class loss weights for the given class counts.
pub fn class_weights(counts: &[u64], scheme: WeightScheme) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::invalid("no classes"));
    }
    if counts.contains(&0) {
        return Err(Error::invalid("zero-count class"));
    }
    let total: u64 = counts.iter().sum();
    Ok(match scheme {
        WeightScheme::Prop => counts.iter().map(|&c| c as f64 / total as f64).collect(),
        WeightScheme::InvProp => {
            let raw: Vec<f64> = counts.iter().map(|&c| total as f64 / c as f64).collect();
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            raw.into_iter().map(|w| w / mean).collect()
        }
        WeightScheme::Equal => vec![1.0; counts.len()],
    })
}

/// Minority-oversampling multiplicities balancing per-epoch passes.
///
/// The majority (negative) class keeps `base` passes per epoch; the minority
/// gets `round(base * n_neg / n_pos)` passes, at least one. An 85:15 split
/// with base 2 gives (2, 11).
pub fn oversampling_multiplicities(n_neg: u64, n_pos: u64, base: u32) -> Result<(u32, u32)> {
    if n_pos == 0 || n_neg < n_pos {
        return Err(Error::invalid(
            "expected n_neg >= n_pos > 0 (negatives are the majority)",
        ));
    }
    if base == 0 {
        return Err(Error::invalid("base multiplicity must be at least 1"));
    }
    let minority = (base as f64 * n_neg as f64 / n_pos as f64).round().max(1.0) as u32;
    Ok((base, minority))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn blob_features(seed: u64, centers: &[[f32; 2]], per_blob: usize, spread: f32) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::new();
        let mut ids = Vec::new();
        for (b, c) in centers.iter().enumerate() {
            for i in 0..per_blob {
                values.push(c[0] + (rng.random::<f32>() - 0.5) * spread);
                values.push(c[1] + (rng.random::<f32>() - 0.5) * spread);
                ids.push(PatchId {
                    slide_id: format!("blob{b}"),
                    x: i as u32,
                    y: 0,
                });
            }
        }
        FeatureMatrix::new(centers.len() * per_blob, 2, values, ids).unwrap()
    }

    #[test]
    fn k_equals_n_gives_zero_wcss() {
        let f = blob_features(1, &[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]], 4, 2.0);
        let model = minibatch_kmeans(
            &f,
            &KMeansParams {
                k: f.n(),
                batch_size: 64,
                max_iters: 50,
                seed: 7,
                tol_rel: 0.0,
            },
        )
        .unwrap();
        assert_relative_eq!(wcss(&f, &model.centroids, f.d()), 0.0, epsilon = 1e-18);
    }

    #[test]
    fn counts_sum_to_samples_processed() {
        let f = blob_features(2, &[[0.0, 0.0], [50.0, 50.0]], 100, 1.0);
        let params = KMeansParams {
            k: 2,
            batch_size: 32,
            max_iters: 20,
            seed: 3,
            tol_rel: 0.0,
        };
        let model = minibatch_kmeans(&f, &params).unwrap();
        let total: u64 = model.counts.iter().sum();
        assert_eq!(total, (model.iterations_run * params.batch_size) as u64);
    }

    #[test]
    fn separated_blobs_map_to_distinct_centroids() {
        let centers = [[0.0f32, 0.0], [100.0, 0.0], [0.0, 100.0]];
        let f = blob_features(3, &centers, 200, 4.0);
        let model = minibatch_kmeans(
            &f,
            &KMeansParams {
                k: 3,
                batch_size: 128,
                max_iters: 100,
                seed: 11,
                tol_rel: 1e-6,
            },
        )
        .unwrap();
        let mut hit = [false; 3];
        for c in centers.iter() {
            let (idx, d2) = model.assign(&[c[0], c[1]]);
            assert!(d2 < 25.0, "centroid far from blob center: {d2}");
            hit[idx] = true;
        }
        assert_eq!(hit, [true, true, true]);
    }

    #[test]
    fn kmeans_rejects_bad_inputs() {
        let f = blob_features(4, &[[0.0, 0.0]], 5, 1.0);
        let mut params = KMeansParams {
            k: 6,
            batch_size: 8,
            max_iters: 5,
            seed: 0,
            tol_rel: 0.0,
        };
        assert!(minibatch_kmeans(&f, &params).is_err());
        params.k = 2;
        params.batch_size = 0;
        assert!(minibatch_kmeans(&f, &params).is_err());
        assert!(FeatureMatrix::new(1, 2, vec![f32::NAN, 0.0], f.ids()[..1].to_vec()).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let f = blob_features(5, &[[0.0, 0.0], [30.0, 30.0]], 50, 2.0);
        let params = KMeansParams {
            k: 2,
            batch_size: 16,
            max_iters: 30,
            seed: 99,
            tol_rel: 0.0,
        };
        let a = minibatch_kmeans(&f, &params).unwrap();
        let b = minibatch_kmeans(&f, &params).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.counts, b.counts);
    }

    #[test]
    fn sample_per_cluster_m1_with_k_equals_n_selects_everything() {
        let f = blob_features(6, &[[0.0, 0.0], [40.0, 0.0]], 3, 1.0);
        let model = minibatch_kmeans(
            &f,
            &KMeansParams {
                k: f.n(),
                batch_size: 32,
                max_iters: 30,
                seed: 13,
                tol_rel: 0.0,
            },
        )
        .unwrap();
        let plan = sample_per_cluster(&model, &f, 1).unwrap();
        assert_eq!(plan.selected.len(), f.n());
        let mut ids = plan.selected.clone();
        ids.sort_by(|a, b| (&a.slide_id, a.x).cmp(&(&b.slide_id, b.x)));
        let mut expect = f.ids().to_vec();
        expect.sort_by(|a, b| (&a.slide_id, a.x).cmp(&(&b.slide_id, b.x)));
        assert_eq!(ids, expect);
    }

    #[test]
    fn sample_per_cluster_selects_true_nearest() {
        let f = blob_features(7, &[[0.0, 0.0], [100.0, 100.0]], 40, 6.0);
        let model = minibatch_kmeans(
            &f,
            &KMeansParams {
                k: 2,
                batch_size: 64,
                max_iters: 60,
                seed: 21,
                tol_rel: 0.0,
            },
        )
        .unwrap();
        let m = 2;
        let plan = sample_per_cluster(&model, &f, m).unwrap();
        assert_eq!(plan.selected.len(), 2 * m);
        // Exhaustive check: every selected patch is among the true m-nearest
        // of its assigned centroid.
        for id in &plan.selected {
            let row_idx = f.ids().iter().position(|p| p == id).unwrap();
            let (c, d2) = model.assign(f.row(row_idx));
            let closer = (0..f.n())
                .filter(|&j| {
                    let (cj, dj) = model.assign(f.row(j));
                    cj == c && dj < d2
                })
                .count();
            assert!(closer < m, "selected patch is not within the {m}-nearest");
        }
    }

    #[test]
    fn random_sample_behaviors() {
        let pool: Vec<PatchId> = (0..20)
            .map(|i| PatchId {
                slide_id: "s".into(),
                x: i,
                y: 0,
            })
            .collect();
        let all = random_sample(&pool, 20, 5).unwrap();
        let mut got = all.selected.clone();
        got.sort_by_key(|p| p.x);
        assert_eq!(got, pool);
        assert!(random_sample(&pool, 0, 5).unwrap().selected.is_empty());
        assert_eq!(
            random_sample(&pool, 7, 5).unwrap().selected,
            random_sample(&pool, 7, 5).unwrap().selected
        );
        assert!(random_sample(&pool, 21, 5).is_err());
    }

    #[test]
    fn class_weight_schemes() {
        let counts = [85u64, 15];
        assert_eq!(class_weights(&counts, WeightScheme::Equal).unwrap(), vec![1.0, 1.0]);
        let prop = class_weights(&counts, WeightScheme::Prop).unwrap();
        assert_relative_eq!(prop[0], 0.85, max_relative = 1e-12);
        assert_relative_eq!(prop[1], 0.15, max_relative = 1e-12);
        let inv = class_weights(&counts, WeightScheme::InvProp).unwrap();
        assert_relative_eq!(inv[1] / inv[0], 85.0 / 15.0, max_relative = 1e-12);
        assert_relative_eq!(inv.iter().sum::<f64>() / 2.0, 1.0, max_relative = 1e-12);
        assert!(class_weights(&[10, 0], WeightScheme::Prop).is_err());
    }

    #[test]
    fn oversampling_reference_ratio() {
        // 85:15 with base 2 gives 2 and 11 passes per epoch.
        assert_eq!(oversampling_multiplicities(85, 15, 2).unwrap(), (2, 11));
        assert_eq!(oversampling_multiplicities(50, 50, 1).unwrap(), (1, 1));
        let (mn, mp) = oversampling_multiplicities(300, 100, 1).unwrap();
        assert_eq!((mn, mp), (1, 3));
        // Per-epoch passes balance exactly for an integral ratio.
        assert_eq!(300 * mn as u64, 100 * mp as u64);
        assert!(oversampling_multiplicities(10, 20, 1).is_err());
        assert!(oversampling_multiplicities(10, 0, 1).is_err());
    }
}
