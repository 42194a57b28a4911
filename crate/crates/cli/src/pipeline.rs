//! Stage functions and the end-to-end runner.
//!
//! Every stage is a pure function of its inputs and the seed. Per-video work
//! uses seeds derived from the video index, so `threads` never changes
//! results.

use std::path::{Path, PathBuf};

use tempseg_core::data::FeatureSequence;
use tempseg_core::decoder::{decode_all, derive_orders, fit_gaussians, group_by_global, Covariance, OrderMode, SegmentationResult};
use tempseg_core::embednet::{embed, train, EmbedConfig, EmbeddedSequence, ModelParams, Variant};
use tempseg_core::globalassign::{
    brute_force_assign, multi_hub_assign, naive_assign, CentroidTable, GlobalAssignment, Strategy,
};
use tempseg_core::metrics::{apply_mappings, evaluate, match_labels, MatchScope, MetricsReport};
use tempseg_core::rng::derive;
use tempseg_core::videocluster::{within_video_clustering, SimilarityConfig, WithinVideoClusters};
use tempseg_core::data::IGNORE_LABEL;

use crate::artifacts::{
    assignment_to_text, clusters_to_text, read_assignment, read_clusters, segments_to_text, ASSIGNMENT_NAME,
    CLUSTERS_NAME, REPORT_NAME, SEGMENTS_NAME,
};
use crate::checkpoint::{load_model, save_model, CHECKPOINT_NAME};
use crate::error::{CliError, Result, StageContext};
use crate::formats::{load_dataset, write_text};
use crate::parallel::par_map;
use crate::svg::{render_segmentation_svg, Palette};

/// Stream separating per-video clustering seeds from the training seed.
const CLUSTER_STREAM: u64 = 0x636c_7573;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    /// Defaults to `out_dir/model.bin`.
    pub checkpoint: Option<PathBuf>,
    /// `arch.input_dim` and `seed` are taken from the data and from `seed`.
    pub embed: EmbedConfig,
    pub similarity: SimilarityConfig,
    /// Number of actions `K`.
    pub clusters: usize,
    pub strategy: Strategy,
    pub order: OrderMode,
    pub covariance: Covariance,
    pub scope: MatchScope,
    pub seed: u64,
    pub threads: usize,
    /// Reuse a compatible checkpoint, clustering and assignment found in `out_dir`.
    pub resume: bool,
    /// Write `segmentation_<video>.svg` figures.
    pub plots: bool,
}

impl PipelineConfig {
    pub fn new(manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            manifest: manifest.into(),
            out_dir: out_dir.into(),
            checkpoint: None,
            embed: EmbedConfig::new(Variant::Ssten, 1),
            similarity: SimilarityConfig::default(),
            clusters: 4,
            strategy: Strategy::MultiHub,
            order: OrderMode::VideoWise,
            covariance: Covariance::Diagonal,
            scope: MatchScope::Global,
            seed: 0,
            threads: 1,
            resume: false,
            plots: false,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join(CHECKPOINT_NAME))
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(CliError::Usage("the number of actions K must be positive".into()));
        }
        self.similarity.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let mut embed = self.embed.clone();
        embed.arch.input_dim = embed.arch.input_dim.max(1);
        embed.validate().map_err(|e| CliError::Usage(e.to_string()))
    }
}

/// Trains an embedding network on `videos`; `cfg.seed` seeds initialization and shuffling.
pub fn train_model(videos: &[FeatureSequence], cfg: &EmbedConfig) -> Result<ModelParams> {
    let mut cfg = cfg.clone();
    cfg.arch.input_dim = videos.first().map_or(0, FeatureSequence::dim);
    Ok(train(videos, &cfg)?.params)
}

pub fn embed_all(params: &ModelParams, videos: &[FeatureSequence], threads: usize) -> Result<Vec<EmbeddedSequence>> {
    par_map(threads, videos, |_, v| embed(params, v)).into_iter().map(|r| r.map_err(CliError::from)).collect()
}

pub fn cluster_all(
    embeddings: &[EmbeddedSequence],
    k: usize,
    cfg: &SimilarityConfig,
    seed: u64,
    threads: usize,
) -> Result<Vec<WithinVideoClusters>> {
    let base = derive(seed, CLUSTER_STREAM);
    par_map(threads, embeddings, |n, e| within_video_clustering(e, k, cfg, derive(base, n as u64)))
        .into_iter()
        .map(|r| r.map_err(CliError::from))
        .collect()
}

pub fn assign(clusters: &[WithinVideoClusters], strategy: Strategy) -> Result<GlobalAssignment> {
    Ok(match strategy {
        Strategy::MultiHub => multi_hub_assign(&CentroidTable::from_clusters(clusters)?)?,
        Strategy::BruteForce => brute_force_assign(&CentroidTable::from_clusters(clusters)?)?,
        Strategy::Naive => naive_assign(clusters)?,
    })
}

pub fn decode(
    embeddings: &[EmbeddedSequence],
    clusters: &[WithinVideoClusters],
    assignment: &GlobalAssignment,
    order: OrderMode,
    covariance: Covariance,
) -> Result<SegmentationResult> {
    let groups = group_by_global(embeddings, clusters, assignment)?;
    let model = fit_gaussians(&groups, covariance)?;
    let orders = derive_orders(clusters, assignment, order)?;
    Ok(decode_all(embeddings, &model, &orders)?)
}

/// Ground-truth labels of every video, or `None` when no video has any.
pub fn ground_truth(videos: &[FeatureSequence]) -> Result<Option<Vec<Vec<i64>>>> {
    let with = videos.iter().filter(|v| v.gt_labels.is_some()).count();
    match with {
        0 => Ok(None),
        n if n == videos.len() => Ok(Some(videos.iter().map(|v| v.gt_labels.clone().expect("checked")).collect())),
        _ => Err(CliError::Usage("ground truth is present for some videos but not all".into())),
    }
}

pub fn evaluate_dataset(videos: &[FeatureSequence], labels: &[Vec<usize>], scope: MatchScope) -> Result<Option<MetricsReport>> {
    let Some(gt) = ground_truth(videos)? else { return Ok(None) };
    let ids: Vec<String> = videos.iter().map(|v| v.video_id.clone()).collect();
    Ok(Some(evaluate(&ids, labels, &gt, scope, IGNORE_LABEL)?))
}

/// Contents of `report.txt`: `key=value` lines, a blank line, then the readable table.
pub fn report_text(report: &MetricsReport) -> String {
    format!("{}\n{report}", report.key_values())
}

/// One figure per video: ground truth and the prediction mapped onto classes.
pub fn write_segmentation_plots(
    out_dir: &Path,
    videos: &[FeatureSequence],
    labels: &[Vec<usize>],
    scope: MatchScope,
) -> Result<Vec<PathBuf>> {
    let Some(gt) = ground_truth(videos)? else { return Ok(Vec::new()) };
    let mapped = apply_mappings(labels, &match_labels(labels, &gt, scope, IGNORE_LABEL)?);
    let palette = Palette::default();
    let mut written = Vec::new();
    for ((v, g), p) in videos.iter().zip(&gt).zip(&mapped) {
        let svg = render_segmentation_svg(g, &[("prediction", p.as_slice())], &palette)?;
        let path = out_dir.join(format!("segmentation_{}.svg", v.video_id));
        write_text(&path, &svg)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: Option<MetricsReport>,
    pub segmentation: SegmentationResult,
    pub assignment: GlobalAssignment,
    /// Stages whose saved results were reused.
    pub resumed: Vec<&'static str>,
}

fn model_matches(params: &ModelParams, cfg: &EmbedConfig, dim: usize) -> bool {
    let a = params.arch();
    let b = &cfg.arch;
    a.variant == b.variant
        && a.input_dim == dim
        && a.hidden_dim == b.hidden_dim
        && (a.variant == Variant::Mlp || (a.layers_per_stage == b.layers_per_stage && a.kernel_size == b.kernel_size))
}

/// Runs train → embed → cluster → assign → decode → eval, writing
/// `model.bin`, `clusters.txt`, `assignment.txt`, `segments.txt` and, when the
/// dataset has ground truth, `report.txt` under `out_dir`.
///
/// With `resume`, a saved stage result is reused when it fits the current
/// configuration; any stage that is recomputed invalidates the ones after it.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let videos = load_dataset(&cfg.manifest).stage("load")?;
    let dim = videos[0].dim();
    let ids: Vec<String> = videos.iter().map(|v| v.video_id.clone()).collect();
    let mut embed_cfg = cfg.embed.clone();
    embed_cfg.arch.input_dim = dim;
    embed_cfg.seed = cfg.seed;
    let mut resumed = Vec::new();
    let mut reuse = cfg.resume;

    let ckpt = cfg.checkpoint_path();
    let saved = if reuse && ckpt.exists() {
        Some(load_model(&ckpt).stage("train")?).filter(|p| model_matches(p, &embed_cfg, dim))
    } else {
        None
    };
    let params = match saved {
        Some(p) => {
            resumed.push("train");
            p
        }
        None => {
            reuse = false;
            let p = train_model(&videos, &embed_cfg).stage("train")?;
            save_model(&ckpt, &p).stage("train")?;
            p
        }
    };

    let embeddings = embed_all(&params, &videos, cfg.threads).stage("embed")?;

    let clusters_path = cfg.out_dir.join(CLUSTERS_NAME);
    let saved = if reuse && clusters_path.exists() {
        Some(read_clusters(&clusters_path, &embeddings).stage("cluster")?).filter(|c| c.iter().all(|c| c.k == cfg.clusters))
    } else {
        None
    };
    let clusters = match saved {
        Some(c) => {
            resumed.push("cluster");
            c
        }
        None => {
            reuse = false;
            let c = cluster_all(&embeddings, cfg.clusters, &cfg.similarity, cfg.seed, cfg.threads).stage("cluster")?;
            write_text(&clusters_path, &clusters_to_text(&c)).stage("cluster")?;
            c
        }
    };

    let assignment_path = cfg.out_dir.join(ASSIGNMENT_NAME);
    let saved = if reuse && assignment_path.exists() {
        let table = CentroidTable::from_clusters(&clusters).stage("assign")?;
        Some(read_assignment(&assignment_path, &ids, &table).stage("assign")?).filter(|a| a.strategy == cfg.strategy)
    } else {
        None
    };
    let assignment = match saved {
        Some(a) => {
            resumed.push("assign");
            a
        }
        None => {
            let a = assign(&clusters, cfg.strategy).stage("assign")?;
            write_text(&assignment_path, &assignment_to_text(&a, &ids)).stage("assign")?;
            a
        }
    };

    let segmentation = decode(&embeddings, &clusters, &assignment, cfg.order, cfg.covariance).stage("decode")?;
    write_text(&cfg.out_dir.join(SEGMENTS_NAME), &segments_to_text(&segmentation.labels)).stage("decode")?;

    let report = evaluate_dataset(&videos, &segmentation.labels, cfg.scope).stage("eval")?;
    if let Some(r) = &report {
        write_text(&cfg.out_dir.join(REPORT_NAME), &report_text(r)).stage("eval")?;
    }
    if cfg.plots {
        write_segmentation_plots(&cfg.out_dir, &videos, &segmentation.labels, cfg.scope).stage("plot")?;
    }
    Ok(PipelineOutput { report, segmentation, assignment, resumed })
}
