//! Within-video clustering.
//!
//! Frames are connected by the product of a locally scaled spatial Gaussian
//! kernel on embeddings and a temporal Gaussian kernel on relative
//! timestamps. The graph is partitioned with the spectral relaxation of the
//! normalized cut: eigenvectors of the `K` smallest eigenvalues of the
//! symmetric normalized Laplacian, row-normalized, then k-means.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;

use crate::embednet::EmbeddedSequence;
use crate::error::{invalid, Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::rng;

/// Affinity construction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityConfig {
    /// Local scale of frame `i` is the distance to its `m`-th nearest neighbour.
    pub neighbor_index: usize,
    /// Temporal scale `σ'`; the kernel denominator is `2σ'²`.
    pub sigma_prime: f64,
    /// Replaces local scaling by `σ_spat²` when set.
    pub fixed_sigma_spat: Option<f64>,
    pub temporal_kernel: bool,
    /// Longer videos are clustered on a strided subsample.
    pub max_frames: usize,
    /// k-means restarts on the spectral embedding.
    pub restarts: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            neighbor_index: 9,
            sigma_prime: 1.0 / 6.0,
            fixed_sigma_spat: None,
            temporal_kernel: true,
            max_frames: 2000,
            restarts: 10,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbor_index == 0 {
            return Err(invalid!("neighbour index m must be at least 1"));
        }
        if !(self.sigma_prime > 0.0) {
            return Err(invalid!("sigma' must be positive"));
        }
        if let Some(s) = self.fixed_sigma_spat {
            if !(s > 0.0) {
                return Err(invalid!("fixed spatial sigma must be positive"));
            }
        }
        if self.max_frames < 2 || self.restarts == 0 {
            return Err(invalid!("max_frames must be at least 2 and restarts positive"));
        }
        Ok(())
    }
}

const MIN_SCALE: f64 = 1e-12;

/// Distance from each row to its `m`-th nearest other row.
pub fn local_scales(points: &Matrix, m: usize) -> Result<Vec<f64>> {
    let n = points.rows();
    if m >= n {
        return Err(invalid!("neighbour index {m} needs more than {n} frames"));
    }
    let mut scratch = Vec::with_capacity(n - 1);
    let scales = (0..n)
        .map(|i| {
            scratch.clear();
            scratch.extend((0..n).filter(|&j| j != i).map(|j| squared_distance(points.row(i), points.row(j))));
            let (_, kth, _) = scratch.select_nth_unstable_by(m - 1, f64::total_cmp);
            libm::sqrt(*kth).max(MIN_SCALE)
        })
        .collect();
    Ok(scales)
}

/// Frame-to-frame affinity `G` (`T × T`, symmetric, unit diagonal).
pub fn similarity_matrix(emb: &EmbeddedSequence, cfg: &SimilarityConfig) -> Result<Matrix> {
    cfg.validate()?;
    let n = emb.frames();
    if n < 2 {
        return Err(invalid!("similarity needs at least 2 frames, got {n}"));
    }
    if emb.timestamps.len() != n {
        return Err(invalid!("{} timestamps for {n} frames", emb.timestamps.len()));
    }
    let x = &emb.embedding;
    let scales = match cfg.fixed_sigma_spat {
        Some(_) => None,
        None => Some(local_scales(x, cfg.neighbor_index)?),
    };
    let temporal_denominator = 2.0 * cfg.sigma_prime * cfg.sigma_prime;
    let mut g = Matrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let spatial_denominator = match (&scales, cfg.fixed_sigma_spat) {
                (Some(s), _) => s[i] * s[j],
                (None, Some(sigma)) => sigma * sigma,
                (None, None) => unreachable!(),
            };
            let mut exponent = -squared_distance(x.row(i), x.row(j)) / spatial_denominator;
            if cfg.temporal_kernel {
                let ds = emb.timestamps[i] - emb.timestamps[j];
                exponent -= ds * ds / temporal_denominator;
            }
            let v = libm::exp(exponent);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// `I − D^{-1/2} G D^{-1/2}` with `D` the degree matrix of `G`.
pub fn normalized_laplacian(g: &Matrix) -> Result<Matrix> {
    let n = g.rows();
    if g.cols() != n {
        return Err(invalid!("affinity matrix must be square, got {:?}", g.shape()));
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = g.row(i).iter().sum();
            if d > 0.0 { 1.0 / libm::sqrt(d) } else { 0.0 }
        })
        .collect();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            l[(i, j)] = delta - inv_sqrt[i] * g[(i, j)] * inv_sqrt[j];
        }
    }
    Ok(l)
}

/// Eigen-decomposition of a symmetric matrix: eigenvalues in ascending order
/// (ties by original index) and the matching eigenvectors as columns.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = m.rows();
    if m.cols() != n {
        return Err(invalid!("eigen-decomposition needs a square matrix"));
    }
    let dm = DMatrix::from_row_slice(n, n, m.as_slice());
    let eig = nalgebra::SymmetricEigen::try_new(dm, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical(alloc::string::String::from("symmetric eigensolver did not converge")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (c, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, c)] = eig.eigenvectors[(r, src)];
        }
    }
    Ok((values, vectors))
}

/// Rows of the `k` leading (smallest-eigenvalue) Laplacian eigenvectors,
/// scaled to unit length; zero rows stay zero.
pub fn spectral_embedding(g: &Matrix, k: usize) -> Result<Matrix> {
    let n = g.rows();
    if k == 0 || k > n {
        return Err(invalid!("cannot embed {n} frames into {k} clusters"));
    }
    let l = normalized_laplacian(g)?;
    let (_, vectors) = symmetric_eigen(&l)?;
    let mut rows = Matrix::zeros(n, k);
    for i in 0..n {
        for c in 0..k {
            rows[(i, c)] = vectors[(i, c)];
        }
        let norm = libm::sqrt(rows.row(i).iter().map(|v| v * v).sum());
        if norm > 0.0 {
            rows.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(rows)
}

/// Normalized-cut spectral clustering of an affinity matrix into `k` labels.
pub fn spectral_cluster(g: &Matrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    spectral_cluster_with_restarts(g, k, seed, SimilarityConfig::default().restarts)
}

pub fn spectral_cluster_with_restarts(g: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<Vec<usize>> {
    if k > g.rows() {
        return Err(invalid!("{k} clusters requested for {} frames", g.rows()));
    }
    if k == 1 {
        return Ok(vec![0; g.rows()]);
    }
    let rows = spectral_embedding(g, k)?;
    Ok(kmeans_best_of(&rows, k, seed, restarts)?.labels)
}

/// Result of a k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    /// Sum of squared distances to the assigned centroids.
    pub objective: f64,
}

const KMEANS_MAX_ITER: usize = 300;

/// k-means++ seeding followed by Lloyd iterations.
///
/// Nearest-centroid ties go to the lowest index. An empty cluster takes the
/// point farthest from its centroid among clusters with more than one point.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeans> {
    let n = points.rows();
    if k == 0 {
        return Err(invalid!("k-means needs at least one cluster"));
    }
    if k > n {
        return Err(invalid!("{k} clusters requested for {n} points"));
    }
    let mut rng = rng::seeded(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut next: Vec<usize> = (0..n).map(|i| nearest(points.row(i), &centroids).0).collect();
        repair_empty(points, &centroids, &mut next, k);
        let changed = next != labels;
        labels = next;
        centroids = means(points, &labels, k);
        if !changed {
            break;
        }
    }
    let objective = (0..n).map(|i| squared_distance(points.row(i), centroids.row(labels[i]))).sum();
    Ok(KMeans { labels, centroids, objective })
}

/// Best of `restarts` seeded runs (lowest objective, earliest run on ties).
pub fn kmeans_best_of(points: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<KMeans> {
    let mut best: Option<KMeans> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans(points, k, rng::derive(seed, r as u64))?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus_init(points: &Matrix, k: usize, rng: &mut rng::Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

fn nearest(p: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = squared_distance(p, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn repair_empty(points: &Matrix, centroids: &Matrix, labels: &mut [usize], k: usize) {
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] <= 1 {
                continue;
            }
            let d = squared_distance(points.row(i), centroids.row(l));
            if donor.is_none_or(|(_, best)| d > best) {
                donor = Some((i, d));
            }
        }
        // k ≤ n guarantees a donor exists.
        if let Some((i, _)) = donor {
            sizes[labels[i]] -= 1;
            labels[i] = c;
            sizes[c] = 1;
        }
    }
}

fn means(points: &Matrix, labels: &[usize], k: usize) -> Matrix {
    let mut sums = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            sums.row_mut(c).iter_mut().for_each(|s| *s /= count as f64);
        }
    }
    sums
}

/// Per-video clustering result.
#[derive(Debug, Clone, PartialEq)]
pub struct WithinVideoClusters {
    pub video_id: alloc::string::String,
    /// Cluster of every frame, in `0..k`.
    pub labels: Vec<usize>,
    /// Mean embedding of each cluster (`k × E`).
    pub centroids: Matrix,
    /// Mean relative timestamp of each cluster.
    pub mean_timestamps: Vec<f64>,
    pub k: usize,
}

impl WithinVideoClusters {
    /// Computes centroids and mean timestamps for given frame labels.
    pub fn from_labels(emb: &EmbeddedSequence, labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.len() != emb.frames() {
            return Err(invalid!("{} labels for {} frames of {}", labels.len(), emb.frames(), emb.video_id));
        }
        let mut counts = vec![0usize; k];
        for &l in &labels {
            if l >= k {
                return Err(invalid!("label {l} out of range for {k} clusters"));
            }
            counts[l] += 1;
        }
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidState(alloc::format!("cluster {c} of {} is empty", emb.video_id)));
        }
        let centroids = means(&emb.embedding, &labels, k);
        let mut mean_timestamps = vec![0.0; k];
        for (&l, &s) in labels.iter().zip(&emb.timestamps) {
            mean_timestamps[l] += s;
        }
        for (m, &c) in mean_timestamps.iter_mut().zip(&counts) {
            *m /= c as f64;
        }
        Ok(WithinVideoClusters { video_id: emb.video_id.clone(), labels, centroids, mean_timestamps, k })
    }
}

/// Frames kept when a video exceeds `max_frames`: every `stride`-th frame.
pub fn subsample_stride(frames: usize, max_frames: usize) -> usize {
    frames.div_ceil(max_frames).max(1)
}

/// Spatio-temporal spectral clustering of one video into `k` clusters.
pub fn within_video_clustering(
    emb: &EmbeddedSequence,
    k: usize,
    cfg: &SimilarityConfig,
    seed: u64,
) -> Result<WithinVideoClusters> {
    cfg.validate()?;
    let frames = emb.frames();
    if k == 0 {
        return Err(invalid!("at least one cluster is required"));
    }
    if frames < k {
        return Err(invalid!("video {} has {frames} frames, fewer than {k} clusters", emb.video_id));
    }
    if k == 1 {
        return WithinVideoClusters::from_labels(emb, vec![0; frames], 1);
    }
    let stride = subsample_stride(frames, cfg.max_frames);
    let labels = if stride == 1 {
        let g = similarity_matrix(emb, cfg)?;
        spectral_cluster_with_restarts(&g, k, seed, cfg.restarts)?
    } else {
        let kept: Vec<usize> = (0..frames).step_by(stride).collect();
        let sub = EmbeddedSequence {
            video_id: emb.video_id.clone(),
            embedding: emb.embedding.select_rows(&kept),
            timestamps: kept.iter().map(|&t| emb.timestamps[t]).collect(),
        };
        if sub.frames() < k {
            return Err(invalid!("subsampled video {} has fewer than {k} frames", emb.video_id));
        }
        let g = similarity_matrix(&sub, cfg)?;
        let sub_labels = spectral_cluster_with_restarts(&g, k, seed, cfg.restarts)?;
        (0..frames)
            .map(|t| {
                let lo = t / stride;
                let hi = lo + 1;
                let pick = if hi < kept.len() && kept[hi] - t < t - kept[lo] { hi } else { lo };
                sub_labels[pick]
            })
            .collect()
    };
    WithinVideoClusters::from_labels(emb, labels, k)
}
