//! Per-video feature sequences and a planted-ground-truth generator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::matrix::{distance, Matrix};
use crate::rng;

/// Ground-truth label for frames excluded from matching and scoring.
pub const IGNORE_LABEL: i64 = -1;

/// One video's frame features (`T × D`) with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub features: Matrix,
    pub gt_labels: Option<Vec<i64>>,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, features: Matrix, gt_labels: Option<Vec<i64>>) -> Result<Self> {
        let seq = FeatureSequence { video_id: video_id.into(), features, gt_labels };
        seq.validate()?;
        Ok(seq)
    }

    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames() == 0 {
            return Err(invalid!("video {} has no frames", self.video_id));
        }
        if self.dim() == 0 {
            return Err(invalid!("video {} has zero feature dimensions", self.video_id));
        }
        if !self.features.is_finite() {
            return Err(invalid!("video {} has non-finite features", self.video_id));
        }
        if let Some(gt) = &self.gt_labels {
            if gt.len() != self.frames() {
                return Err(invalid!(
                    "video {} has {} labels for {} frames",
                    self.video_id,
                    gt.len(),
                    self.frames()
                ));
            }
        }
        Ok(())
    }
}

/// Checks that a dataset is nonempty and shares one feature dimension.
pub fn common_dim(videos: &[FeatureSequence]) -> Result<usize> {
    let first = videos.first().ok_or_else(|| invalid!("dataset is empty"))?;
    let dim = first.dim();
    for v in videos {
        v.validate()?;
        if v.dim() != dim {
            return Err(invalid!("video {} has dimension {}, expected {dim}", v.video_id, v.dim()));
        }
    }
    Ok(dim)
}

/// Relative timestamps `t / T` for `t = 1..=T`.
pub fn relative_timestamps(frames: usize) -> Vec<f64> {
    (1..=frames).map(|t| t as f64 / frames as f64).collect()
}

/// Parameters of the synthetic activity generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub videos: usize,
    pub actions: usize,
    pub dim: usize,
    /// Minimum pairwise distance between action prototypes.
    pub separation: f64,
    pub noise: f64,
    pub min_segment: usize,
    pub max_segment: usize,
    /// Chance that a video's action order is perturbed by adjacent swaps.
    pub order_permutation_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            videos: 10,
            actions: 4,
            dim: 16,
            separation: 4.0,
            noise: 0.4,
            min_segment: 20,
            max_segment: 40,
            order_permutation_prob: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.videos == 0 || self.actions == 0 || self.dim == 0 {
            return Err(invalid!("videos, actions and dim must be positive"));
        }
        if !(self.separation > 0.0) {
            return Err(invalid!("separation must be positive"));
        }
        if !(self.noise >= 0.0) {
            return Err(invalid!("noise must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.order_permutation_prob) {
            return Err(invalid!("order permutation probability must lie in [0, 1]"));
        }
        if self.min_segment == 0 || self.min_segment > self.max_segment {
            return Err(invalid!("segment length range [{}, {}] is empty", self.min_segment, self.max_segment));
        }
        Ok(())
    }
}

/// A generated dataset with its planted structure.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub videos: Vec<FeatureSequence>,
    pub prototypes: Matrix,
    /// Action order of each video.
    pub orders: Vec<Vec<usize>>,
    /// Segment start frames of each video (first entry is always 0).
    pub boundaries: Vec<Vec<usize>>,
}

const PROTOTYPE_ATTEMPTS: usize = 100;

/// Draws prototypes, per-video orders and segment lengths, then emits
/// `prototype + noise` features smoothed by a 3-frame moving average.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    let prototypes = draw_prototypes(cfg, &mut rng)?;

    let mut videos = Vec::with_capacity(cfg.videos);
    let mut orders = Vec::with_capacity(cfg.videos);
    let mut boundaries = Vec::with_capacity(cfg.videos);
    for n in 0..cfg.videos {
        let mut order: Vec<usize> = (0..cfg.actions).collect();
        if cfg.actions > 1 && rng.random_bool(cfg.order_permutation_prob) {
            let swaps = rng.random_range(1..cfg.actions);
            for _ in 0..swaps {
                let i = rng.random_range(0..cfg.actions - 1);
                order.swap(i, i + 1);
            }
        }
        let lengths: Vec<usize> =
            (0..cfg.actions).map(|_| rng.random_range(cfg.min_segment..=cfg.max_segment)).collect();
        let frames: usize = lengths.iter().sum();

        let mut raw = Matrix::zeros(frames, cfg.dim);
        let mut labels = Vec::with_capacity(frames);
        let mut starts = Vec::with_capacity(cfg.actions);
        let mut t = 0;
        for (&action, &len) in order.iter().zip(&lengths) {
            starts.push(t);
            for _ in 0..len {
                let proto = prototypes.row(action);
                for (d, v) in raw.row_mut(t).iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = proto[d] + cfg.noise * z;
                }
                labels.push(action as i64);
                t += 1;
            }
        }
        let features = moving_average3(&raw);
        videos.push(FeatureSequence::new(format!("video_{n:03}"), features, Some(labels))?);
        orders.push(order);
        boundaries.push(starts);
    }
    Ok(SynthDataset { videos, prototypes, orders, boundaries })
}

fn draw_prototypes(cfg: &SynthConfig, rng: &mut rng::Rng) -> Result<Matrix> {
    for _ in 0..PROTOTYPE_ATTEMPTS {
        let data = (0..cfg.actions * cfg.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut *rng);
                cfg.separation * z
            })
            .collect();
        let protos = Matrix::from_vec(cfg.actions, cfg.dim, data)?;
        let ok = (0..cfg.actions).all(|a| {
            (a + 1..cfg.actions).all(|b| distance(protos.row(a), protos.row(b)) >= cfg.separation)
        });
        if ok {
            return Ok(protos);
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not place {} prototypes {} apart in {} dimensions after {PROTOTYPE_ATTEMPTS} draws",
        cfg.actions, cfg.separation, cfg.dim
    )))
}

/// Centered 3-frame average; the first and last frames average their two
/// available neighbours.
fn moving_average3(x: &Matrix) -> Matrix {
    let (frames, dim) = x.shape();
    let mut out = Matrix::zeros(frames, dim);
    for t in 0..frames {
        let lo = t.saturating_sub(1);
        let hi = (t + 1).min(frames - 1);
        let count = (hi - lo + 1) as f64;
        for d in 0..dim {
            let s: f64 = (lo..=hi).map(|u| x[(u, d)]).sum();
            out[(t, d)] = s / count;
        }
    }
    out
}

/// Fisher–Yates shuffle of `0..n` from a seed.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    idx
}
