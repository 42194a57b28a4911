//! Temporal embedding networks.
//!
//! The default variant is a two-stage encoder / two-stage decoder of dilated
//! residual layers. Each encoder stage regresses the relative timestamp of
//! every frame with a `1×1` head and appends that prediction to its hidden
//! features; the concatenation at the end of the second encoder stage is the
//! frame embedding. Two ablations share the code path: `Tcn` keeps a single
//! timestamp-regressing stage without decoder, and `Mlp` replaces the
//! convolutions with three per-frame fully connected layers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{common_dim, relative_timestamps, shuffled_indices, FeatureSequence};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::seqgrad::{NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Ssten,
    Tcn,
    Mlp,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ssten => "ssten",
            Variant::Tcn => "tcn",
            Variant::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ssten" => Ok(Variant::Ssten),
            "tcn" => Ok(Variant::Tcn),
            "mlp" => Ok(Variant::Mlp),
            other => Err(invalid!("unknown embedding variant {other:?}")),
        }
    }
}

/// Shape-determining part of the configuration, stored with the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub variant: Variant,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers_per_stage: usize,
    pub kernel_size: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(invalid!("input and hidden dimensions must be positive"));
        }
        if self.variant != Variant::Mlp {
            if self.layers_per_stage == 0 {
                return Err(invalid!("at least one residual layer per stage is required"));
            }
            if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
                return Err(invalid!("kernel size {} must be odd", self.kernel_size));
            }
            if self.layers_per_stage > 30 {
                return Err(invalid!("{} layers per stage overflow the dilation schedule", self.layers_per_stage));
            }
        }
        Ok(())
    }

    /// Width of the frame embedding: hidden channels plus the predicted timestamp.
    pub fn embedding_dim(&self) -> usize {
        self.hidden_dim + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub arch: Architecture,
    /// Weight of the reconstruction term.
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Dropout probability after each residual nonlinearity (training only).
    pub dropout: f64,
    pub seed: u64,
}

impl EmbedConfig {
    pub fn new(variant: Variant, input_dim: usize) -> Self {
        EmbedConfig {
            arch: Architecture { variant, input_dim, hidden_dim: 32, layers_per_stage: 5, kernel_size: 3 },
            lambda: 0.01,
            epochs: 40,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            dropout: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(invalid!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid!("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid!("dropout must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-dimension z-score statistics of the training features.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Normalization { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn fit(videos: &[FeatureSequence]) -> Result<Self> {
        let dim = common_dim(videos)?;
        let mut sum = vec![0.0; dim];
        let mut count = 0usize;
        for v in videos {
            for t in 0..v.frames() {
                for (s, x) in sum.iter_mut().zip(v.features.row(t)) {
                    *s += x;
                }
            }
            count += v.frames();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; dim];
        for v in videos {
            for t in 0..v.frames() {
                for ((s, x), m) in sq.iter_mut().zip(v.features.row(t)).zip(&mean) {
                    *s += (x - m) * (x - m);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = libm::sqrt(s / count as f64);
                if sd > 1e-8 { sd } else { 1.0 }
            })
            .collect();
        Ok(Normalization { mean, std })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(invalid!("features have {} dimensions, model expects {}", x.cols(), self.mean.len()));
        }
        let mut out = x.clone();
        for t in 0..out.rows() {
            for ((v, m), s) in out.row_mut(t).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Name and shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    fan_in: usize,
}

/// Parameter tensors in forward-pass order.
pub fn param_layout(arch: &Architecture) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let affine = |specs: &mut Vec<ParamSpec>, name: &str, cout: usize, cin: usize| {
        specs.push(ParamSpec { name: format!("{name}.weight"), rows: cout, cols: cin, fan_in: cin });
        specs.push(ParamSpec { name: format!("{name}.bias"), rows: 1, cols: cout, fan_in: cin });
    };
    let (d, h, r) = (arch.input_dim, arch.hidden_dim, arch.kernel_size);
    let residual_stage = |specs: &mut Vec<ParamSpec>, stage: &str| {
        for q in 1..=arch.layers_per_stage {
            let name = format!("{stage}.layer{q}.dilated");
            specs.push(ParamSpec { name: format!("{name}.weight"), rows: h, cols: h * r, fan_in: h * r });
            specs.push(ParamSpec { name: format!("{name}.bias"), rows: 1, cols: h, fan_in: h * r });
            let name = format!("{stage}.layer{q}.pointwise");
            specs.push(ParamSpec { name: format!("{name}.weight"), rows: h, cols: h, fan_in: h });
            specs.push(ParamSpec { name: format!("{name}.bias"), rows: 1, cols: h, fan_in: h });
        }
    };
    match arch.variant {
        Variant::Mlp => {
            affine(&mut specs, "fc1", h, d);
            affine(&mut specs, "fc2", h, h);
            affine(&mut specs, "head", 1, h);
        }
        Variant::Tcn => {
            affine(&mut specs, "enc1.in", h, d);
            residual_stage(&mut specs, "enc1");
            affine(&mut specs, "enc1.head", 1, h);
        }
        Variant::Ssten => {
            affine(&mut specs, "enc1.in", h, d);
            residual_stage(&mut specs, "enc1");
            affine(&mut specs, "enc1.head", 1, h);
            affine(&mut specs, "enc2.in", h, h + 1);
            residual_stage(&mut specs, "enc2");
            affine(&mut specs, "enc2.head", 1, h);
            affine(&mut specs, "dec1.in", h, h + 1);
            residual_stage(&mut specs, "dec1");
            affine(&mut specs, "dec2.in", h, h);
            residual_stage(&mut specs, "dec2");
            affine(&mut specs, "dec2.out", d, h);
        }
    }
    specs
}

/// Weights of an embedding network plus its architecture and input statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    norm: Normalization,
    tensors: Vec<Matrix>,
}

impl ModelParams {
    /// Assembles a model from stored parts, checking every shape.
    pub fn from_parts(arch: Architecture, norm: Normalization, tensors: Vec<Matrix>) -> Result<Self> {
        arch.validate()?;
        let layout = param_layout(&arch);
        if layout.len() != tensors.len() {
            return Err(invalid!("expected {} parameter tensors, got {}", layout.len(), tensors.len()));
        }
        for (spec, t) in layout.iter().zip(&tensors) {
            if t.shape() != (spec.rows, spec.cols) {
                return Err(invalid!("{} has shape {:?}, expected {:?}", spec.name, t.shape(), (spec.rows, spec.cols)));
            }
        }
        if norm.mean.len() != arch.input_dim || norm.std.len() != arch.input_dim {
            return Err(invalid!("normalization statistics do not match input dimension {}", arch.input_dim));
        }
        Ok(ModelParams { arch, norm, tensors })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn set_normalization(&mut self, norm: Normalization) -> Result<()> {
        if norm.mean.len() != self.arch.input_dim || norm.std.len() != self.arch.input_dim {
            return Err(invalid!("normalization statistics do not match input dimension"));
        }
        self.norm = norm;
        Ok(())
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    /// Named view of the parameters, in layout order.
    pub fn named(&self) -> impl Iterator<Item = (String, &Matrix)> {
        param_layout(&self.arch).into_iter().map(|s| s.name).zip(self.tensors.iter())
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.as_slice().len()).sum()
    }
}

/// Deterministic uniform `±1/sqrt(fan_in)` initialization.
pub fn build_model(arch: &Architecture, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    let mut rng = rng::seeded(seed);
    let tensors = param_layout(arch)
        .iter()
        .map(|spec| {
            let bound = 1.0 / libm::sqrt(spec.fan_in as f64);
            let data = (0..spec.rows * spec.cols).map(|_| rng.random_range(-bound..=bound)).collect();
            Matrix::from_vec(spec.rows, spec.cols, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelParams { arch: *arch, norm: Normalization::identity(arch.input_dim), tensors })
}

/// Receptive field of the `q`-th stacked dilated layer with kernel size `r`:
/// `1 + (r - 1)(2^q - 1)`.
pub fn receptive_field(q: u32, r: u64) -> u64 {
    1 + (r - 1) * ((1u64 << q) - 1)
}

/// Handles of one forward pass recorded on a tape.
#[derive(Debug, Clone)]
pub struct ForwardNodes {
    pub reconstruction: Option<NodeId>,
    /// One `T × 1` node per timestamp head, in stage order.
    pub timestamps: Vec<NodeId>,
    pub embedding: NodeId,
}

struct Dropout<'a> {
    prob: f64,
    rng: &'a mut rng::Rng,
}

struct Builder<'a, 'b> {
    tape: &'a mut Tape,
    params: &'a [NodeId],
    cursor: usize,
    arch: Architecture,
    dropout: Option<Dropout<'b>>,
}

impl Builder<'_, '_> {
    fn take(&mut self) -> NodeId {
        let id = self.params[self.cursor];
        self.cursor += 1;
        id
    }

    fn affine(&mut self, h: NodeId) -> Result<NodeId> {
        let (w, b) = (self.take(), self.take());
        self.tape.pointwise_conv(h, w, b)
    }

    fn residual_stage(&mut self, mut h: NodeId) -> Result<NodeId> {
        for q in 0..self.arch.layers_per_stage {
            let (w, b) = (self.take(), self.take());
            let c = self.tape.conv1d_dilated(h, w, b, 1 << q)?;
            let mut a = self.tape.relu(c);
            if let Some(drop) = self.dropout.as_mut() {
                let (rows, cols) = self.tape.value(a).shape();
                let keep = 1.0 - drop.prob;
                let mask = (0..rows * cols)
                    .map(|_| if drop.rng.random_bool(keep) { 1.0 / keep } else { 0.0 })
                    .collect();
                a = self.tape.mask(a, Matrix::from_vec(rows, cols, mask)?)?;
            }
            let p = self.affine(a)?;
            h = self.tape.add(h, p)?;
        }
        Ok(h)
    }

    /// Residual stage followed by a timestamp head; returns `(features ‖ ŝ, ŝ)`.
    fn encoder_stage(&mut self, x: NodeId) -> Result<(NodeId, NodeId)> {
        let h = self.affine(x)?;
        let h = self.residual_stage(h)?;
        let s = self.affine(h)?;
        Ok((self.tape.concat_channels(h, s)?, s))
    }

    fn run(&mut self, x: NodeId, with_decoder: bool) -> Result<ForwardNodes> {
        match self.arch.variant {
            Variant::Mlp => {
                let h = self.affine(x)?;
                let h = self.tape.relu(h);
                let h = self.affine(h)?;
                let h = self.tape.relu(h);
                let s = self.affine(h)?;
                let embedding = self.tape.concat_channels(h, s)?;
                Ok(ForwardNodes { reconstruction: None, timestamps: vec![s], embedding })
            }
            Variant::Tcn => {
                let (embedding, s) = self.encoder_stage(x)?;
                Ok(ForwardNodes { reconstruction: None, timestamps: vec![s], embedding })
            }
            Variant::Ssten => {
                let (z1, s1) = self.encoder_stage(x)?;
                let (embedding, s2) = self.encoder_stage(z1)?;
                let reconstruction = if with_decoder {
                    let d = self.affine(embedding)?;
                    let d = self.residual_stage(d)?;
                    let d = self.affine(d)?;
                    let d = self.residual_stage(d)?;
                    Some(self.affine(d)?)
                } else {
                    None
                };
                Ok(ForwardNodes { reconstruction, timestamps: vec![s1, s2], embedding })
            }
        }
    }
}

/// Records a forward pass of `x` (already normalized) on `tape`, with the
/// model parameters given as tape nodes in layout order.
pub fn forward_on_tape(
    tape: &mut Tape,
    arch: &Architecture,
    params: &[NodeId],
    x: NodeId,
    with_decoder: bool,
) -> Result<ForwardNodes> {
    forward_inner(tape, arch, params, x, with_decoder, None)
}

fn forward_inner(
    tape: &mut Tape,
    arch: &Architecture,
    params: &[NodeId],
    x: NodeId,
    with_decoder: bool,
    dropout: Option<Dropout<'_>>,
) -> Result<ForwardNodes> {
    if tape.value(x).cols() != arch.input_dim {
        return Err(invalid!("input has {} dimensions, model expects {}", tape.value(x).cols(), arch.input_dim));
    }
    if tape.value(x).rows() == 0 {
        return Err(invalid!("input has no frames"));
    }
    let mut b = Builder { tape, params, cursor: 0, arch: *arch, dropout };
    b.run(x, with_decoder)
}

/// Materialized outputs of [`forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Decoder reconstruction `x̂` (absent for `Tcn` and `Mlp`).
    pub reconstruction: Option<Matrix>,
    /// Per-head timestamp predictions `ŝ_p`.
    pub timestamps: Vec<Vec<f64>>,
    pub embedding: Matrix,
}

/// Runs the network on normalized input `x` (`T × D`).
pub fn forward(params: &ModelParams, x: &Matrix) -> Result<ForwardOutput> {
    let mut tape = Tape::new();
    let ids: Vec<_> = params.tensors.iter().map(|t| tape.constant(t.clone())).collect();
    let xi = tape.constant(x.clone());
    let nodes = forward_on_tape(&mut tape, &params.arch, &ids, xi, true)?;
    Ok(ForwardOutput {
        reconstruction: nodes.reconstruction.map(|id| tape.value(id).clone()),
        timestamps: nodes.timestamps.iter().map(|&id| tape.value(id).col(0)).collect(),
        embedding: tape.value(nodes.embedding).clone(),
    })
}

/// `λ·Σ_t ‖x_t − x̂_t‖² + Σ_p Σ_t (s_t − ŝ_{p,t})²` for one video.
pub fn loss(
    x: &Matrix,
    reconstruction: Option<&Matrix>,
    predicted: &[Vec<f64>],
    true_timestamps: &[f64],
    lambda: f64,
) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(invalid!("lambda must be nonnegative, got {lambda}"));
    }
    let mut total = 0.0;
    if let Some(xh) = reconstruction {
        if xh.shape() != x.shape() {
            return Err(invalid!("reconstruction shape {:?} differs from input {:?}", xh.shape(), x.shape()));
        }
        let rec: f64 = x.as_slice().iter().zip(xh.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
        total += lambda * rec;
    }
    for s in predicted {
        if s.len() != true_timestamps.len() {
            return Err(invalid!("timestamp prediction has {} frames, expected {}", s.len(), true_timestamps.len()));
        }
        total += s.iter().zip(true_timestamps).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}

/// Records the training objective on the tape.
pub fn loss_on_tape(tape: &mut Tape, x: NodeId, nodes: &ForwardNodes, lambda: f64) -> Result<NodeId> {
    if !(lambda >= 0.0) {
        return Err(invalid!("lambda must be nonnegative, got {lambda}"));
    }
    let frames = tape.value(x).rows();
    let target = tape.constant(Matrix::column(&relative_timestamps(frames)));
    let mut total: Option<NodeId> = None;
    if let Some(rec) = nodes.reconstruction {
        let l = tape.mse(rec, x)?;
        total = Some(tape.scale(l, lambda));
    }
    for &s in &nodes.timestamps {
        let l = tape.mse(s, target)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, l)?,
            None => l,
        });
    }
    total.ok_or_else(|| invalid!("network has no loss terms"))
}

/// Value of the training objective for one (normalized) video.
pub fn video_loss(params: &ModelParams, x: &Matrix, lambda: f64) -> Result<f64> {
    let out = forward(params, x)?;
    let s = relative_timestamps(x.rows());
    loss(x, out.reconstruction.as_ref(), &out.timestamps, &s, lambda)
}

/// Loss value and parameter gradients for one normalized video.
pub fn loss_and_gradients(params: &ModelParams, x: &Matrix, lambda: f64) -> Result<(f64, Vec<Matrix>)> {
    loss_and_gradients_inner(params, x, lambda, None)
}

fn loss_and_gradients_inner(
    params: &ModelParams,
    x: &Matrix,
    lambda: f64,
    dropout: Option<Dropout<'_>>,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let ids: Vec<_> = params.tensors.iter().map(|t| tape.param(t.clone())).collect();
    let xi = tape.constant(x.clone());
    let with_decoder = lambda > 0.0;
    let nodes = forward_inner(&mut tape, &params.arch, &ids, xi, with_decoder, dropout)?;
    let l = loss_on_tape(&mut tape, xi, &nodes, lambda)?;
    tape.backward(l)?;
    let value = tape.scalar(l);
    let grads = ids
        .iter()
        .map(|&id| tape.grad(id).cloned().unwrap_or_else(|| Matrix::zeros(0, 0)))
        .collect();
    Ok((value, grads))
}

struct Adam {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: i32,
}

impl Adam {
    fn new(params: &[Matrix]) -> Self {
        let zeros = |p: &Matrix| Matrix::zeros(p.rows(), p.cols());
        Adam { m: params.iter().map(zeros).collect(), v: params.iter().map(zeros).collect(), step: 0 }
    }

    fn update(&mut self, params: &mut [Matrix], grads: &[Matrix], cfg: &EmbedConfig) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(cfg.beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(cfg.beta2, self.step as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let entries = p.as_mut_slice().iter_mut().zip(g.as_slice());
            for ((pv, gv), (mv, vv)) in entries.zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice())) {
                *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
                *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
                let mh = *mv / c1;
                let vh = *vv / c2;
                *pv -= cfg.learning_rate * mh / (libm::sqrt(vh) + cfg.adam_eps);
            }
        }
    }
}

/// Trained weights and the mean per-video loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub loss_history: Vec<f64>,
}

/// Trains with one optimizer step per video, visiting videos in a seeded
/// random order each epoch.
pub fn train(dataset: &[FeatureSequence], cfg: &EmbedConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dim = common_dim(dataset)?;
    if dim != cfg.arch.input_dim {
        return Err(invalid!("dataset has dimension {dim}, configuration expects {}", cfg.arch.input_dim));
    }
    let mut params = build_model(&cfg.arch, cfg.seed)?;
    params.norm = Normalization::fit(dataset)?;
    let inputs = dataset.iter().map(|v| params.norm.apply(&v.features)).collect::<Result<Vec<_>>>()?;

    let mut adam = Adam::new(&params.tensors);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut dropout_rng = rng::seeded(rng::derive(cfg.seed, u64::MAX));
    for epoch in 0..cfg.epochs {
        let order = shuffled_indices(inputs.len(), rng::derive(cfg.seed, epoch as u64));
        let mut total = 0.0;
        for &i in &order {
            let dropout = (cfg.dropout > 0.0).then(|| Dropout { prob: cfg.dropout, rng: &mut dropout_rng });
            let (value, grads) = loss_and_gradients_inner(&params, &inputs[i], cfg.lambda, dropout)?;
            if !value.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            total += value;
            let active: Vec<Matrix> = grads
                .into_iter()
                .zip(&params.tensors)
                .map(|(g, p)| if g.shape() == p.shape() { g } else { Matrix::zeros(p.rows(), p.cols()) })
                .collect();
            adam.update(&mut params.tensors, &active, cfg);
        }
        let mean = total / inputs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(mean);
    }
    Ok(TrainOutcome { params, loss_history: history })
}

/// Frame embeddings of one video with its true relative timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSequence {
    pub video_id: String,
    /// `T × (H + 1)`: hidden features followed by the predicted timestamp.
    pub embedding: Matrix,
    pub timestamps: Vec<f64>,
}

impl EmbeddedSequence {
    pub fn new(video_id: impl Into<String>, embedding: Matrix) -> Self {
        let timestamps = relative_timestamps(embedding.rows());
        EmbeddedSequence { video_id: video_id.into(), embedding, timestamps }
    }

    pub fn frames(&self) -> usize {
        self.embedding.rows()
    }
}

/// Normalizes the video with the model's statistics and returns the encoder
/// embedding.
pub fn embed(params: &ModelParams, video: &FeatureSequence) -> Result<EmbeddedSequence> {
    let x = params.norm.apply(&video.features)?;
    let mut tape = Tape::new();
    let ids: Vec<_> = params.tensors.iter().map(|t| tape.constant(t.clone())).collect();
    let xi = tape.constant(x);
    let nodes = forward_on_tape(&mut tape, &params.arch, &ids, xi, false)?;
    Ok(EmbeddedSequence::new(video.video_id.clone(), tape.value(nodes.embedding).clone()))
}

/// Timestamp prediction of the last head for a raw (unnormalized) video.
pub fn predict_timestamps(params: &ModelParams, video: &FeatureSequence) -> Result<Vec<f64>> {
    let x = params.norm.apply(&video.features)?;
    let out = forward(params, &x)?;
    out.timestamps.last().cloned().ok_or_else(|| invalid!("network has no timestamp head"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};

    fn tiny(variant: Variant) -> Architecture {
        Architecture { variant, input_dim: 3, hidden_dim: 4, layers_per_stage: 2, kernel_size: 3 }
    }

    #[test]
    fn receptive_field_values() {
        assert_eq!(receptive_field(1, 3), 3);
        assert_eq!(receptive_field(5, 3), 63);
        assert_eq!(receptive_field(10, 3), 2047);
    }

    #[test]
    fn parameter_count_matches_hand_enumeration() {
        let arch = Architecture { variant: Variant::Ssten, input_dim: 16, hidden_dim: 32, layers_per_stage: 5, kernel_size: 3 };
        let model = build_model(&arch, 1).unwrap();
        let (d, h, q, r) = (16, 32, 5, 3);
        let layer = (h * h * r + h) + (h * h + h);
        let enc1 = (h * d + h) + q * layer + (h + 1);
        let enc2 = (h * (h + 1) + h) + q * layer + (h + 1);
        let dec1 = (h * (h + 1) + h) + q * layer;
        let dec2 = (h * h + h) + q * layer + (d * h + d);
        assert_eq!(model.param_count(), enc1 + enc2 + dec1 + dec2);
    }

    #[test]
    fn same_seed_same_parameters() {
        let arch = tiny(Variant::Ssten);
        assert_eq!(build_model(&arch, 5).unwrap(), build_model(&arch, 5).unwrap());
        assert_ne!(build_model(&arch, 5).unwrap(), build_model(&arch, 6).unwrap());
    }

    #[test]
    fn mlp_has_no_temporal_kernels() {
        let arch = tiny(Variant::Mlp);
        let layout = param_layout(&arch);
        assert_eq!(layout.len(), 6);
        assert!(layout.iter().all(|spec| !spec.name.contains("dilated")));
    }

    #[test]
    fn invalid_architectures_are_rejected() {
        let mut arch = tiny(Variant::Ssten);
        arch.kernel_size = 2;
        assert!(build_model(&arch, 0).is_err());
        arch.kernel_size = 3;
        arch.hidden_dim = 0;
        assert!(build_model(&arch, 0).is_err());
    }

    #[test]
    fn variable_length_forward() {
        let model = build_model(&tiny(Variant::Ssten), 2).unwrap();
        for frames in [1, 7, 30] {
            let out = forward(&model, &Matrix::filled(frames, 3, 0.5)).unwrap();
            assert_eq!(out.reconstruction.unwrap().shape(), (frames, 3));
            assert_eq!(out.timestamps.len(), 2);
            assert!(out.timestamps.iter().all(|s| s.len() == frames));
            assert_eq!(out.embedding.shape(), (frames, 5));
        }
        assert!(forward(&model, &Matrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn zero_weights_give_constant_bias_timestamps() {
        let mut model = build_model(&tiny(Variant::Ssten), 2).unwrap();
        let layout = param_layout(model.arch());
        for (spec, t) in layout.iter().zip(model.tensors_mut()) {
            let fill = if spec.name == "enc2.head.bias" { 0.25 } else { 0.0 };
            *t = Matrix::filled(t.rows(), t.cols(), fill);
        }
        let out = forward(&model, &Matrix::filled(6, 3, 1.7)).unwrap();
        assert!(out.timestamps[1].iter().all(|&s| s == 0.25));
        assert!(out.timestamps[0].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn loss_arithmetic() {
        let x = Matrix::column(&[1.0]);
        let xh = Matrix::column(&[0.0]);
        let s = [vec![0.5], vec![0.5]];
        assert_eq!(loss(&x, Some(&xh), &s, &[1.0], 2.0).unwrap(), 2.5);
        assert_eq!(loss(&x, Some(&x), &[vec![1.0], vec![1.0]], &[1.0], 3.0).unwrap(), 0.0);
        assert_eq!(loss(&x, Some(&xh), &s, &[1.0], 0.0).unwrap(), 0.5);
        assert!(matches!(loss(&x, Some(&xh), &s, &[1.0], -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tape_loss_matches_direct_loss() {
        let model = build_model(&tiny(Variant::Ssten), 4).unwrap();
        let x = Matrix::from_vec(6, 3, (0..18).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let direct = video_loss(&model, &x, 0.3).unwrap();
        let (taped, _) = loss_and_gradients(&model, &x, 0.3).unwrap();
        assert!((direct - taped).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_ignores_decoder() {
        let mut model = build_model(&tiny(Variant::Ssten), 4).unwrap();
        let x = Matrix::from_vec(6, 3, (0..18).map(|i| (i as f64 * 0.37).cos()).collect()).unwrap();
        let before = video_loss(&model, &x, 0.0).unwrap();
        let layout = param_layout(model.arch());
        for (spec, t) in layout.iter().zip(model.tensors_mut()) {
            if spec.name.starts_with("dec") {
                t.as_mut_slice().iter_mut().for_each(|v| *v += 0.3);
            }
        }
        assert_eq!(before, video_loss(&model, &x, 0.0).unwrap());
    }

    #[test]
    fn epochs_zero_returns_initial_model() {
        let ds = generate_synthetic(&SynthConfig { videos: 2, dim: 3, ..SynthConfig::default() }).unwrap();
        let mut cfg = EmbedConfig::new(Variant::Ssten, 3);
        cfg.arch = tiny(Variant::Ssten);
        cfg.epochs = 0;
        let out = train(&ds.videos, &cfg).unwrap();
        assert!(out.loss_history.is_empty());
        assert_eq!(out.params.tensors(), build_model(&cfg.arch, cfg.seed).unwrap().tensors());
    }

    #[test]
    fn training_rejects_mismatched_dimensions() {
        let a = FeatureSequence::new("a", Matrix::zeros(4, 3), None).unwrap();
        let b = FeatureSequence::new("b", Matrix::zeros(4, 2), None).unwrap();
        let mut cfg = EmbedConfig::new(Variant::Ssten, 3);
        cfg.arch = tiny(Variant::Ssten);
        assert!(train(&[a, b], &cfg).is_err());
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let ds = generate_synthetic(&SynthConfig { videos: 2, dim: 3, ..SynthConfig::default() }).unwrap();
        let mut cfg = EmbedConfig::new(Variant::Mlp, 3);
        cfg.arch = tiny(Variant::Mlp);
        cfg.learning_rate = 1e300;
        cfg.epochs = 5;
        assert!(matches!(train(&ds.videos, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn embedding_shape_and_timestamps() {
        let model = build_model(&tiny(Variant::Ssten), 4).unwrap();
        let video = FeatureSequence::new("v", Matrix::filled(10, 3, 0.1), None).unwrap();
        let e = embed(&model, &video).unwrap();
        assert_eq!(e.embedding.shape(), (10, 5));
        let expected: Vec<f64> = (1..=10).map(|t| t as f64 / 10.0).collect();
        assert_eq!(e.timestamps, expected);
        assert_eq!(e, embed(&model, &video).unwrap());

        let mlp = build_model(&tiny(Variant::Mlp), 4).unwrap();
        assert_eq!(embed(&mlp, &video).unwrap().embedding.cols(), 5);
        let tcn = build_model(&tiny(Variant::Tcn), 4).unwrap();
        assert_eq!(embed(&tcn, &video).unwrap().embedding.cols(), 5);
    }
}
