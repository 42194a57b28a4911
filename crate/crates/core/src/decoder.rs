//! Frame labeling under a per-video cluster order.
//!
//! Every global cluster gets a Gaussian fitted on its member frames. A video
//! is decoded into exactly `K` consecutive segments that follow its order
//! constraint: from one frame to the next the label either stays or advances
//! to the next cluster of the order. The best path maximizes the summed frame
//! log-likelihoods.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::embednet::EmbeddedSequence;
use crate::error::{invalid, Error, Result};
use crate::globalassign::{timestamp_ranks, GlobalAssignment};
use crate::matrix::Matrix;
use crate::videocluster::WithinVideoClusters;

pub const VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariance {
    Diagonal,
    /// Full covariance with a `VARIANCE_FLOOR · I` ridge.
    Full,
}

#[derive(Debug, Clone)]
struct FullGaussian {
    /// Lower Cholesky factor of the ridged covariance.
    chol: DMatrix<f64>,
    log_det: f64,
}

/// One Gaussian per global cluster.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    /// `K × E` means.
    pub means: Matrix,
    /// `K × E` per-dimension variances (diagonal of the covariance).
    pub variances: Matrix,
    full: Option<Vec<FullGaussian>>,
}

impl GaussianModel {
    pub fn clusters(&self) -> usize {
        self.means.rows()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn covariance(&self) -> Covariance {
        if self.full.is_some() { Covariance::Full } else { Covariance::Diagonal }
    }

    /// Log density of `x` under cluster `k`.
    pub fn log_density(&self, k: usize, x: &[f64]) -> f64 {
        let mu = self.means.row(k);
        match &self.full {
            None => {
                let var = self.variances.row(k);
                let mut acc = 0.0;
                for ((xv, m), s) in x.iter().zip(mu).zip(var) {
                    let d = xv - m;
                    acc += LN_2PI + libm::log(*s) + d * d / s;
                }
                -0.5 * acc
            }
            Some(full) => {
                let g = &full[k];
                let diff = DVector::from_iterator(x.len(), x.iter().zip(mu).map(|(a, b)| a - b));
                let z = g
                    .chol
                    .solve_lower_triangular(&diff)
                    .expect("Cholesky factor has a positive diagonal");
                -0.5 * (x.len() as f64 * LN_2PI + g.log_det + z.norm_squared())
            }
        }
    }
}

/// Maximum-likelihood Gaussians; `groups[k]` stacks the frames of global cluster `k`.
pub fn fit_gaussians(groups: &[Matrix], covariance: Covariance) -> Result<GaussianModel> {
    let k = groups.len();
    let dim = groups.first().map(Matrix::cols).ok_or_else(|| invalid!("no clusters to fit"))?;
    let mut means = Matrix::zeros(k, dim);
    let mut variances = Matrix::zeros(k, dim);
    let mut full = Vec::new();
    for (c, points) in groups.iter().enumerate() {
        if points.cols() != dim {
            return Err(invalid!("cluster {c} has dimension {}, expected {dim}", points.cols()));
        }
        let n = points.rows();
        if n == 0 {
            return Err(Error::InvalidState(format!("global cluster {c} has no frames")));
        }
        for i in 0..n {
            for (m, v) in means.row_mut(c).iter_mut().zip(points.row(i)) {
                *m += v;
            }
        }
        means.row_mut(c).iter_mut().for_each(|m| *m /= n as f64);
        let mu = means.row(c).to_vec();
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..n {
            let x = points.row(i);
            for a in 0..dim {
                let da = x[a] - mu[a];
                variances[(c, a)] += da * da;
                if covariance == Covariance::Full {
                    for b in 0..=a {
                        cov[(a, b)] += da * (x[b] - mu[b]);
                    }
                }
            }
        }
        for a in 0..dim {
            let v = variances[(c, a)] / n as f64;
            variances[(c, a)] = v.max(VARIANCE_FLOOR);
        }
        if covariance == Covariance::Full {
            for a in 0..dim {
                for b in 0..=a {
                    let v = cov[(a, b)] / n as f64;
                    cov[(a, b)] = v;
                    cov[(b, a)] = v;
                }
                cov[(a, a)] += VARIANCE_FLOOR;
            }
            let chol = nalgebra::Cholesky::new(cov)
                .ok_or_else(|| Error::Numerical(format!("covariance of global cluster {c} is not positive definite")))?;
            let l = chol.l();
            let log_det = 2.0 * (0..dim).map(|i| libm::log(l[(i, i)])).sum::<f64>();
            full.push(FullGaussian { chol: l, log_det });
        }
    }
    Ok(GaussianModel { means, variances, full: (covariance == Covariance::Full).then_some(full) })
}

/// Stacks the embeddings of each global cluster across all videos.
pub fn group_by_global(
    embeddings: &[EmbeddedSequence],
    clusters: &[WithinVideoClusters],
    assignment: &GlobalAssignment,
) -> Result<Vec<Matrix>> {
    if embeddings.len() != clusters.len() || clusters.len() != assignment.global_of.len() {
        return Err(invalid!("embeddings, clusters and assignment cover different numbers of videos"));
    }
    let k = assignment.clusters();
    let dim = embeddings.first().map_or(0, |e| e.embedding.cols());
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (n, (emb, cl)) in embeddings.iter().zip(clusters).enumerate() {
        if cl.labels.len() != emb.frames() {
            return Err(invalid!("clusters of {} do not match its frames", emb.video_id));
        }
        for (t, &within) in cl.labels.iter().enumerate() {
            rows[assignment.global_of[n][within]].extend_from_slice(emb.embedding.row(t));
        }
    }
    rows.into_iter().map(|data| Matrix::from_vec(data.len() / dim.max(1), dim, data)).collect()
}

/// Log-likelihood of every frame under every global cluster (`T × K`).
pub fn loglik_grid(model: &GaussianModel, emb: &EmbeddedSequence) -> Result<Matrix> {
    if emb.embedding.cols() != model.dim() {
        return Err(invalid!("embedding has {} dimensions, model has {}", emb.embedding.cols(), model.dim()));
    }
    let (frames, k) = (emb.frames(), model.clusters());
    let mut grid = Matrix::zeros(frames, k);
    for t in 0..frames {
        for c in 0..k {
            grid[(t, c)] = model.log_density(c, emb.embedding.row(t));
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderMode {
    /// Each video follows the timestamp order of its own clusters.
    VideoWise,
    /// All videos share the order of pooled global-cluster timestamps.
    Uniform,
}

impl OrderMode {
    pub fn name(self) -> &'static str {
        match self {
            OrderMode::VideoWise => "video_wise",
            OrderMode::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "video_wise" => Ok(OrderMode::VideoWise),
            "uniform" => Ok(OrderMode::Uniform),
            other => Err(invalid!("unknown order mode {other:?}")),
        }
    }
}

/// Admissible segment order of one video, as global cluster ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderConstraint {
    pub order: Vec<usize>,
}

impl OrderConstraint {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let k = order.len();
        let mut seen = vec![false; k];
        for &g in &order {
            if g >= k || seen[g] {
                return Err(invalid!("order {order:?} is not a permutation of {k} clusters"));
            }
            seen[g] = true;
        }
        Ok(OrderConstraint { order })
    }
}

/// Video-wise order of video `video`: its clusters sorted by mean timestamp,
/// mapped to global ids.
pub fn derive_order(
    clusters: &WithinVideoClusters,
    video: usize,
    assignment: &GlobalAssignment,
) -> Result<OrderConstraint> {
    let map = assignment
        .global_of
        .get(video)
        .ok_or_else(|| invalid!("assignment has no video {video}"))?;
    if map.len() != clusters.k {
        return Err(invalid!("assignment maps {} clusters, video has {}", map.len(), clusters.k));
    }
    // Sort by timestamp, ties by lower global id.
    let mut within: Vec<usize> = (0..clusters.k).collect();
    within.sort_by(|&a, &b| {
        clusters.mean_timestamps[a].total_cmp(&clusters.mean_timestamps[b]).then(map[a].cmp(&map[b]))
    });
    OrderConstraint::new(within.into_iter().map(|w| map[w]).collect())
}

/// Orders for every video under `mode`.
pub fn derive_orders(
    clusters: &[WithinVideoClusters],
    assignment: &GlobalAssignment,
    mode: OrderMode,
) -> Result<Vec<OrderConstraint>> {
    match mode {
        OrderMode::VideoWise => {
            clusters.iter().enumerate().map(|(n, c)| derive_order(c, n, assignment)).collect()
        }
        OrderMode::Uniform => {
            let k = assignment.clusters();
            let mut sum = vec![0.0; k];
            let mut count = vec![0usize; k];
            for (n, c) in clusters.iter().enumerate() {
                let mut sizes = vec![0usize; c.k];
                c.labels.iter().for_each(|&l| sizes[l] += 1);
                for w in 0..c.k {
                    let g = assignment.global_of[n][w];
                    sum[g] += c.mean_timestamps[w] * sizes[w] as f64;
                    count[g] += sizes[w];
                }
            }
            let pooled: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c.max(1) as f64).collect();
            let ranks = timestamp_ranks(&pooled);
            let mut order = vec![0; k];
            for (g, &r) in ranks.iter().enumerate() {
                order[r] = g;
            }
            let shared = OrderConstraint::new(order)?;
            Ok(vec![shared; clusters.len()])
        }
    }
}

/// Decoded labels of one video and the summed log-likelihood of the path.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPath {
    pub labels: Vec<usize>,
    pub score: f64,
}

/// Best stay-or-advance path through the ordered clusters, visiting every
/// cluster at least once. Ties prefer staying.
pub fn viterbi_decode(grid: &Matrix, order: &OrderConstraint) -> Result<DecodedPath> {
    let (frames, k) = (grid.rows(), order.order.len());
    if k == 0 {
        return Err(invalid!("order is empty"));
    }
    if grid.cols() < k || order.order.iter().any(|&g| g >= grid.cols()) {
        return Err(invalid!("order refers to clusters outside the {}-column grid", grid.cols()));
    }
    if frames < k {
        return Err(invalid!("{frames} frames cannot hold {k} ordered segments"));
    }
    let mut score = vec![f64::NEG_INFINITY; k];
    // advanced[t][j]: whether position j at frame t was entered from j − 1.
    let mut advanced = vec![false; frames * k];
    score[0] = grid[(0, order.order[0])];
    for t in 1..frames {
        let mut next = vec![f64::NEG_INFINITY; k];
        // Position j needs j ≤ t and K−1−j ≤ T−1−t.
        let lo = (k + t).saturating_sub(frames);
        let hi = t.min(k - 1);
        for j in lo..=hi {
            let stay = score[j];
            let advance = if j > 0 { score[j - 1] } else { f64::NEG_INFINITY };
            let (best, adv) = if stay >= advance { (stay, false) } else { (advance, true) };
            next[j] = best + grid[(t, order.order[j])];
            advanced[t * k + j] = adv;
        }
        score = next;
    }
    let final_score = score[k - 1];
    if !final_score.is_finite() {
        return Err(Error::Numerical(format!("no finite admissible path (score {final_score})")));
    }
    let mut labels = vec![0; frames];
    let mut j = k - 1;
    for t in (0..frames).rev() {
        labels[t] = order.order[j];
        if t > 0 && advanced[t * k + j] {
            j -= 1;
        }
    }
    Ok(DecodedPath { labels, score: final_score })
}

/// Decoded segmentation of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// Global cluster id of every frame, per video.
    pub labels: Vec<Vec<usize>>,
    /// Log score of each decoded path.
    pub scores: Vec<f64>,
}

pub fn decode_video(model: &GaussianModel, emb: &EmbeddedSequence, order: &OrderConstraint) -> Result<DecodedPath> {
    let grid = loglik_grid(model, emb)?;
    viterbi_decode(&grid, order)
}

pub fn decode_all(
    embeddings: &[EmbeddedSequence],
    model: &GaussianModel,
    orders: &[OrderConstraint],
) -> Result<SegmentationResult> {
    if embeddings.len() != orders.len() {
        return Err(invalid!("{} videos but {} order constraints", embeddings.len(), orders.len()));
    }
    let mut labels = Vec::with_capacity(embeddings.len());
    let mut scores = Vec::with_capacity(embeddings.len());
    for (emb, order) in embeddings.iter().zip(orders) {
        let path = decode_video(model, emb, order)?;
        labels.push(path.labels);
        scores.push(path.score);
    }
    Ok(SegmentationResult { labels, scores })
}
