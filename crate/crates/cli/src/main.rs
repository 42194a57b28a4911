use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tempseg::artifacts::{
    assignment_to_text, clusters_to_text, read_assignment, read_clusters, read_segments, segments_to_text,
    ASSIGNMENT_NAME, CLUSTERS_NAME, REPORT_NAME, SEGMENTS_NAME,
};
use tempseg::checkpoint::{load_model, save_model, CHECKPOINT_NAME};
use tempseg::config::expand_config_args;
use tempseg::formats::{load_dataset, save_dataset, write_text};
use tempseg::pipeline::{
    assign, cluster_all, decode, embed_all, evaluate_dataset, report_text, run_pipeline, write_segmentation_plots,
    PipelineConfig,
};
use tempseg::svg::render_similarity_svg;
use tempseg::{CliError, Result};
use tempseg_core::data::{generate_synthetic, FeatureSequence, SynthConfig};
use tempseg_core::decoder::{Covariance, OrderMode};
use tempseg_core::embednet::{train, EmbedConfig, EmbeddedSequence, ModelParams};
use tempseg_core::globalassign::{CentroidTable, Strategy};
use tempseg_core::metrics::MatchScope;
use tempseg_core::videocluster::{similarity_matrix, SimilarityConfig};

/// Unsupervised temporal action segmentation.
///
/// Any flag may also be set in a `key=value` file passed with `--config`;
/// flags given on the command line take precedence.
#[derive(Parser)]
#[command(name = "tempseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted ground truth.
    Synth(SynthArgs),
    /// Train the frame embedding network and write model.bin.
    Train(TrainArgs),
    /// Write frame embeddings as a dataset under OUT/embeddings.
    Embed(StageArgs),
    /// Cluster the frames of each video and write clusters.txt.
    Cluster(ClusterArgs),
    /// Match clusters across videos and write assignment.txt.
    Assign(AssignArgs),
    /// Decode every video under its order constraint and write segments.txt.
    Decode(DecodeArgs),
    /// Score segments.txt against the ground truth and write report.txt.
    Eval(EvalArgs),
    /// Run every stage end to end.
    Pipeline(PipelineArgs),
    /// Draw segmentation and similarity figures.
    Plot(PlotArgs),
}

#[derive(Args)]
#[command(args_override_self = true)]
struct SynthArgs {
    /// Output directory for the manifest, features and labels.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    videos: usize,
    #[arg(long, default_value_t = 4)]
    actions: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Minimum distance between action prototypes.
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    #[arg(long, default_value_t = 0.4)]
    noise: f64,
    #[arg(long, default_value_t = 20)]
    min_segment: usize,
    #[arg(long, default_value_t = 40)]
    max_segment: usize,
    /// Chance that a video's action order is perturbed.
    #[arg(long, default_value_t = 0.5)]
    perm_prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Key=value file with default flag values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset manifest (`video_id feature_path [label_path]` lines).
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for all outputs.
    #[arg(long)]
    out: PathBuf,
    /// Model checkpoint, OUT/model.bin by default.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Key=value file with default flag values.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl DataArgs {
    fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join(CHECKPOINT_NAME))
    }

    fn load(&self) -> Result<Vec<FeatureSequence>> {
        load_dataset(&self.manifest)
    }

    fn embeddings(&self, videos: &[FeatureSequence]) -> Result<(ModelParams, Vec<EmbeddedSequence>)> {
        let params = load_model(&self.model_path())?;
        let emb = embed_all(&params, videos, self.threads)?;
        Ok((params, emb))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Ssten,
    Tcn,
    Mlp,
}

#[derive(Args)]
struct NetArgs {
    #[arg(long, value_enum, default_value = "ssten")]
    variant: VariantArg,
    /// Hidden channels H; the embedding has H + 1 dimensions.
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Dilated residual layers per stage.
    #[arg(long, default_value_t = 5)]
    layers: usize,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    /// Weight of the reconstruction loss.
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
}

impl NetArgs {
    fn config(&self, input_dim: usize, seed: u64) -> EmbedConfig {
        let variant = match self.variant {
            VariantArg::Ssten => tempseg_core::embednet::Variant::Ssten,
            VariantArg::Tcn => tempseg_core::embednet::Variant::Tcn,
            VariantArg::Mlp => tempseg_core::embednet::Variant::Mlp,
        };
        let mut cfg = EmbedConfig::new(variant, input_dim);
        cfg.arch.hidden_dim = self.hidden;
        cfg.arch.layers_per_stage = self.layers;
        cfg.arch.kernel_size = self.kernel;
        cfg.lambda = self.lambda;
        cfg.epochs = self.epochs;
        cfg.learning_rate = self.lr;
        cfg.dropout = self.dropout;
        cfg.seed = seed;
        cfg
    }
}

#[derive(Args)]
struct SimArgs {
    /// Number of actions K per video.
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Local scale uses the distance to this nearest neighbour.
    #[arg(long, default_value_t = 9)]
    neighbor: usize,
    #[arg(long, default_value_t = 1.0 / 6.0)]
    sigma_prime: f64,
    /// Fixed spatial scale instead of local scaling.
    #[arg(long)]
    sigma_spat: Option<f64>,
    /// Drop the temporal factor of the affinity.
    #[arg(long)]
    no_temporal: bool,
    #[arg(long, default_value_t = 2000)]
    max_frames: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
}

impl SimArgs {
    fn config(&self) -> SimilarityConfig {
        SimilarityConfig {
            neighbor_index: self.neighbor,
            sigma_prime: self.sigma_prime,
            fixed_sigma_spat: self.sigma_spat,
            temporal_kernel: !self.no_temporal,
            max_frames: self.max_frames,
            restarts: self.restarts,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    #[value(name = "multi_hub")]
    MultiHub,
    Naive,
    #[value(name = "brute_force")]
    BruteForce,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::MultiHub => Strategy::MultiHub,
            StrategyArg::Naive => Strategy::Naive,
            StrategyArg::BruteForce => Strategy::BruteForce,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    #[value(name = "video_wise")]
    VideoWise,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum CovarianceArg {
    Diagonal,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Global,
    Local,
}

#[derive(Args)]
struct DecodeOpts {
    #[arg(long, value_enum, default_value = "video_wise")]
    order: OrderArg,
    #[arg(long, value_enum, default_value = "diagonal")]
    covariance: CovarianceArg,
}

impl DecodeOpts {
    fn order(&self) -> OrderMode {
        match self.order {
            OrderArg::VideoWise => OrderMode::VideoWise,
            OrderArg::Uniform => OrderMode::Uniform,
        }
    }

    fn covariance(&self) -> Covariance {
        match self.covariance {
            CovarianceArg::Diagonal => Covariance::Diagonal,
            CovarianceArg::Full => Covariance::Full,
        }
    }
}

fn scope(s: ScopeArg) -> MatchScope {
    match s {
        ScopeArg::Global => MatchScope::Global,
        ScopeArg::Local => MatchScope::Local,
    }
}

#[derive(Args)]
#[command(args_override_self = true)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct StageArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct ClusterArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct AssignArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "multi_hub")]
    strategy: StrategyArg,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct DecodeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    decode: DecodeOpts,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct EvalArgs {
    /// Dataset manifest with ground-truth labels.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding segments.txt; report.txt is written here.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "global")]
    scope: ScopeArg,
    /// Key=value file with default flag values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct PipelineArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, value_enum, default_value = "multi_hub")]
    strategy: StrategyArg,
    #[command(flatten)]
    decode: DecodeOpts,
    #[arg(long, value_enum, default_value = "global")]
    scope: ScopeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reuse compatible results already in OUT.
    #[arg(long)]
    resume: bool,
    /// Also write segmentation_<video>.svg figures.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct PlotArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Only plot this video.
    #[arg(long)]
    video: Option<String>,
    #[arg(long, value_enum, default_value = "global")]
    scope: ScopeArg,
}

fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        videos: a.videos,
        actions: a.actions,
        dim: a.dim,
        separation: a.separation,
        noise: a.noise,
        min_segment: a.min_segment,
        max_segment: a.max_segment,
        order_permutation_prob: a.perm_prob,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = generate_synthetic(&cfg)?;
    let manifest = save_dataset(&a.out, &ds.videos)?;
    println!("{}", manifest.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let videos = a.data.load()?;
    let cfg = a.net.config(videos[0].dim(), a.seed);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let outcome = train(&videos, &cfg)?;
    for (epoch, loss) in outcome.loss_history.iter().enumerate() {
        println!("epoch {} loss {loss:.6}", epoch + 1);
    }
    save_model(&a.data.model_path(), &outcome.params)
}

fn embed_cmd(a: &StageArgs) -> Result<()> {
    let videos = a.data.load()?;
    let (_, emb) = a.data.embeddings(&videos)?;
    let seqs = emb
        .into_iter()
        .zip(&videos)
        .map(|(e, v)| FeatureSequence::new(e.video_id, e.embedding, v.gt_labels.clone()))
        .collect::<tempseg_core::Result<Vec<_>>>()?;
    let manifest = save_dataset(&a.data.out.join("embeddings"), &seqs)?;
    println!("{}", manifest.display());
    Ok(())
}

fn cluster_cmd(a: &ClusterArgs) -> Result<()> {
    if a.sim.k == 0 {
        return Err(CliError::Usage("the number of actions K must be positive".into()));
    }
    let cfg = a.sim.config();
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let videos = a.data.load()?;
    let (_, emb) = a.data.embeddings(&videos)?;
    let clusters = cluster_all(&emb, a.sim.k, &cfg, a.seed, a.data.threads)?;
    write_text(&a.data.out.join(CLUSTERS_NAME), &clusters_to_text(&clusters))
}

fn video_ids(videos: &[FeatureSequence]) -> Vec<String> {
    videos.iter().map(|v| v.video_id.clone()).collect()
}

fn assign_cmd(a: &AssignArgs) -> Result<()> {
    let videos = a.data.load()?;
    let (_, emb) = a.data.embeddings(&videos)?;
    let clusters = read_clusters(&a.data.out.join(CLUSTERS_NAME), &emb)?;
    let assignment = assign(&clusters, a.strategy.into())?;
    println!("cost={}", assignment.cost);
    write_text(&a.data.out.join(ASSIGNMENT_NAME), &assignment_to_text(&assignment, &video_ids(&videos)))
}

fn decode_cmd(a: &DecodeArgs) -> Result<()> {
    let videos = a.data.load()?;
    let (_, emb) = a.data.embeddings(&videos)?;
    let clusters = read_clusters(&a.data.out.join(CLUSTERS_NAME), &emb)?;
    let table = CentroidTable::from_clusters(&clusters)?;
    let assignment = read_assignment(&a.data.out.join(ASSIGNMENT_NAME), &video_ids(&videos), &table)?;
    let seg = decode(&emb, &clusters, &assignment, a.decode.order(), a.decode.covariance())?;
    write_text(&a.data.out.join(SEGMENTS_NAME), &segments_to_text(&seg.labels))
}

fn frames(videos: &[FeatureSequence]) -> Vec<usize> {
    videos.iter().map(FeatureSequence::frames).collect()
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let videos = load_dataset(&a.manifest)?;
    let labels = read_segments(&a.out.join(SEGMENTS_NAME), &frames(&videos))?;
    let report = evaluate_dataset(&videos, &labels, scope(a.scope))?
        .ok_or_else(|| CliError::format(&a.manifest, "dataset has no ground-truth labels"))?;
    let text = report_text(&report);
    print!("{text}");
    write_text(&a.out.join(REPORT_NAME), &text)
}

fn pipeline_cmd(a: &PipelineArgs) -> Result<()> {
    let mut cfg = PipelineConfig::new(&a.data.manifest, &a.data.out);
    cfg.checkpoint = a.data.model.clone();
    cfg.embed = a.net.config(1, a.seed);
    cfg.similarity = a.sim.config();
    cfg.clusters = a.sim.k;
    cfg.strategy = a.strategy.into();
    cfg.order = a.decode.order();
    cfg.covariance = a.decode.covariance();
    cfg.scope = scope(a.scope);
    cfg.seed = a.seed;
    cfg.threads = a.data.threads;
    cfg.resume = a.resume;
    cfg.plots = a.plots;
    let out = run_pipeline(&cfg)?;
    if !out.resumed.is_empty() {
        eprintln!("reused saved results of: {}", out.resumed.join(", "));
    }
    match out.report {
        Some(r) => print!("{}", report_text(&r)),
        None => println!("segments written; no ground truth to evaluate"),
    }
    Ok(())
}

fn plot_cmd(a: &PlotArgs) -> Result<()> {
    let videos = a.data.load()?;
    let segments_path = a.data.out.join(SEGMENTS_NAME);
    let labels = if segments_path.exists() { Some(read_segments(&segments_path, &frames(&videos))?) } else { None };
    let model_path = a.data.model_path();
    let params = if model_path.exists() { Some(load_model(&model_path)?) } else { None };
    let keep: Vec<usize> = match &a.video {
        Some(id) => vec![videos
            .iter()
            .position(|v| &v.video_id == id)
            .ok_or_else(|| CliError::Usage(format!("no video {id:?} in the manifest")))?],
        None => (0..videos.len()).collect(),
    };
    if labels.is_none() && params.is_none() {
        return Err(CliError::Usage(format!(
            "nothing to plot: neither {} nor {} exists",
            segments_path.display(),
            model_path.display()
        )));
    }
    if let Some(labels) = &labels {
        let sel: Vec<Vec<usize>> = keep.iter().map(|&i| labels[i].clone()).collect();
        let vids: Vec<FeatureSequence> = keep.iter().map(|&i| videos[i].clone()).collect();
        for p in write_segmentation_plots(&a.data.out, &vids, &sel, scope(a.scope))? {
            println!("{}", p.display());
        }
    }
    if let Some(params) = &params {
        let cfg = a.sim.config();
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        for &i in &keep {
            let v = &videos[i];
            let emb = tempseg_core::embednet::embed(params, v)?;
            let svg = render_similarity_svg(&similarity_matrix(&emb, &cfg)?)?;
            let path = a.data.out.join(format!("similarity_{}.svg", v.video_id));
            write_text(&path, &svg)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Embed(a) => embed_cmd(a),
        Command::Cluster(a) => cluster_cmd(a),
        Command::Assign(a) => assign_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
        Command::Plot(a) => plot_cmd(a),
    }
}

fn fail(err: &CliError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let args = match expand_config_args(args) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
