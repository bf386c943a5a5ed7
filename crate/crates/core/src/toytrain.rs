//! Desk-scale training of a projection encoder with the memorable contrastive
//! loss on synthetic clustered "proposal features".
//!
//! The encoder is `x → ReLU(W1 x + b1) → W2 h + b2 → L2-normalize`, i.e. two
//! 1×1 convolutions on pooled vectors with a ReLU in between. Everything is
//! backpropagated by hand and optimized with SGD + momentum under a warmup
//! and step-decay learning-rate schedule.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::mcl::{self, ContrastiveBatch, MclConfig, MclError};
use crate::membank::{BankError, EnqueuePolicy, MemoryBank};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub enum ToyError {
    InvalidConfig(String),
    /// An encoder output was the zero vector before normalization.
    DegenerateNormalization { row: usize },
    ShapeMismatch { expected: usize, found: usize },
    NonFiniteGradient,
    TooFewClasses,
    Mcl(MclError),
    Bank(BankError),
}

impl fmt::Display for ToyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ToyError::InvalidConfig(msg) => write!(f, "invalid training configuration: {msg}"),
            ToyError::DegenerateNormalization { row } => {
                write!(f, "row {row}: projection output is zero, cannot normalize")
            }
            ToyError::ShapeMismatch { expected, found } => {
                write!(f, "expected {expected} values, found {found}")
            }
            ToyError::NonFiniteGradient => f.write_str("non-finite gradient"),
            ToyError::TooFewClasses => {
                f.write_str("need at least two classes with two or more samples")
            }
            ToyError::Mcl(e) => write!(f, "{e}"),
            ToyError::Bank(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ToyError {}

impl From<MclError> for ToyError {
    fn from(e: MclError) -> Self {
        ToyError::Mcl(e)
    }
}

impl From<BankError> for ToyError {
    fn from(e: BankError) -> Self {
        ToyError::Bank(e)
    }
}

fn invalid(msg: &str) -> ToyError {
    ToyError::InvalidConfig(String::from(msg))
}

/// Two affine maps with a ReLU between them, followed by L2 normalization.
/// Parameters are stored flat as `[W1 (H×D_in) | b1 (H) | W2 (D×H) | b2 (D)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionEncoder {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    params: Vec<f64>,
}

/// Activations kept by [`ProjectionEncoder::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    rows: usize,
    inputs: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    projected: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradients {
    /// Same layout as [`ProjectionEncoder::params`].
    pub params: Vec<f64>,
    /// `∂/∂x`, row-major `n × D_in`.
    pub inputs: Vec<f64>,
}

impl EncoderCache {
    /// Distance of the closest hidden pre-activation to the ReLU kink.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.hidden_pre.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

impl ProjectionEncoder {
    pub fn param_count(input_dim: usize, hidden_dim: usize, output_dim: usize) -> usize {
        hidden_dim * input_dim + hidden_dim + output_dim * hidden_dim + output_dim
    }

    /// Uniform fan-in initialization: every weight and bias of a layer is drawn
    /// from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut g = rng::generator(seed, 0x0065_6e63_6f64_6572);
        let mut params = Vec::with_capacity(Self::param_count(input_dim, hidden_dim, output_dim));
        let b1 = 1.0 / math::sqrt(input_dim as f64);
        for _ in 0..hidden_dim * input_dim + hidden_dim {
            params.push(rng::uniform(&mut g, -b1, b1));
        }
        let b2 = 1.0 / math::sqrt(hidden_dim as f64);
        for _ in 0..output_dim * hidden_dim + output_dim {
            params.push(rng::uniform(&mut g, -b2, b2));
        }
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            params,
        }
    }

    pub fn from_params(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        params: Vec<f64>,
    ) -> Result<Self, ToyError> {
        let expected = Self::param_count(input_dim, hidden_dim, output_dim);
        if params.len() != expected {
            return Err(ToyError::ShapeMismatch {
                expected,
                found: params.len(),
            });
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            output_dim,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (w1, rest) = self.params.split_at(self.hidden_dim * self.input_dim);
        let (b1, rest) = rest.split_at(self.hidden_dim);
        let (w2, b2) = rest.split_at(self.output_dim * self.hidden_dim);
        (w1, b1, w2, b2)
    }

    /// Embeds `n × D_in` features into `n × D` unit vectors.
    pub fn forward(&self, features: &[f64]) -> Result<(Vec<f64>, EncoderCache), ToyError> {
        let (din, hd, dout) = (self.input_dim, self.hidden_dim, self.output_dim);
        if din == 0 || !features.len().is_multiple_of(din) {
            return Err(ToyError::ShapeMismatch {
                expected: din,
                found: features.len(),
            });
        }
        let n = features.len() / din;
        let (w1, b1, w2, b2) = self.split();
        let mut hidden_pre = vec![0.0; n * hd];
        let mut hidden = vec![0.0; n * hd];
        let mut projected = vec![0.0; n * dout];
        let mut z = vec![0.0; n * dout];
        for r in 0..n {
            let x = &features[r * din..(r + 1) * din];
            for k in 0..hd {
                let a = b1[k] + math::dot(&w1[k * din..(k + 1) * din], x);
                hidden_pre[r * hd + k] = a;
                hidden[r * hd + k] = a.max(0.0);
            }
            let h = &hidden[r * hd..(r + 1) * hd];
            for o in 0..dout {
                projected[r * dout + o] = b2[o] + math::dot(&w2[o * hd..(o + 1) * hd], h);
            }
            let u = &projected[r * dout..(r + 1) * dout];
            let unit = math::normalized(u).ok_or(ToyError::DegenerateNormalization { row: r })?;
            z[r * dout..(r + 1) * dout].copy_from_slice(&unit);
        }
        let cache = EncoderCache {
            rows: n,
            inputs: features.to_vec(),
            hidden_pre,
            hidden,
            projected,
        };
        Ok((z, cache))
    }

    /// Exact gradients of `Σ ⟨grad_z, z⟩` with respect to parameters and inputs.
    pub fn backward(&self, cache: &EncoderCache, grad_z: &[f64]) -> EncoderGradients {
        let (din, hd, dout) = (self.input_dim, self.hidden_dim, self.output_dim);
        let n = cache.rows;
        assert_eq!(grad_z.len(), n * dout, "upstream gradient shape");
        let (w1, _, w2, _) = self.split();
        let mut grads = vec![0.0; self.params.len()];
        let mut d_inputs = vec![0.0; n * din];
        let off_b1 = hd * din;
        let off_w2 = off_b1 + hd;
        let off_b2 = off_w2 + dout * hd;
        let mut d_hidden = vec![0.0; hd];
        for r in 0..n {
            let u = &cache.projected[r * dout..(r + 1) * dout];
            let d_proj = math::normalization_backward(u, &grad_z[r * dout..(r + 1) * dout]);
            let h = &cache.hidden[r * hd..(r + 1) * hd];
            d_hidden.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..dout {
                let g = d_proj[o];
                if g == 0.0 {
                    continue;
                }
                grads[off_b2 + o] += g;
                for k in 0..hd {
                    grads[off_w2 + o * hd + k] += g * h[k];
                    d_hidden[k] += g * w2[o * hd + k];
                }
            }
            let x = &cache.inputs[r * din..(r + 1) * din];
            for k in 0..hd {
                if cache.hidden_pre[r * hd + k] <= 0.0 {
                    continue;
                }
                let g = d_hidden[k];
                grads[off_b1 + k] += g;
                for i in 0..din {
                    grads[k * din + i] += g * x[i];
                    d_inputs[r * din + i] += g * w1[k * din + i];
                }
            }
        }
        EncoderGradients {
            params: grads,
            inputs: d_inputs,
        }
    }
}

/// Linear softmax classifier on embeddings, used as the stand-in
/// classification loss. Parameters: `[W (C×D) | b (C)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    classes: usize,
    dim: usize,
    params: Vec<f64>,
}

impl LinearHead {
    pub fn init(classes: usize, dim: usize, seed: u64) -> Self {
        let mut g = rng::generator(seed, 0x6865_6164);
        let bound = 1.0 / math::sqrt(dim as f64);
        let params = (0..classes * dim + classes)
            .map(|_| rng::uniform(&mut g, -bound, bound))
            .collect();
        Self {
            classes,
            dim,
            params,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Mean cross-entropy over the rows, its gradient with respect to the
    /// head parameters, and with respect to the embeddings.
    pub fn loss_grad(&self, z: &[f64], labels: &[u32]) -> (f64, Vec<f64>, Vec<f64>) {
        let (c, d) = (self.classes, self.dim);
        let n = labels.len();
        let (w, b) = self.params.split_at(c * d);
        let mut d_params = vec![0.0; self.params.len()];
        let mut d_z = vec![0.0; z.len()];
        let mut loss = 0.0;
        let inv_n = 1.0 / n as f64;
        let mut logits = vec![0.0; c];
        for r in 0..n {
            let zr = &z[r * d..(r + 1) * d];
            for k in 0..c {
                logits[k] = b[k] + math::dot(&w[k * d..(k + 1) * d], zr);
            }
            let lse = math::log_sum_exp(logits.iter().copied());
            let y = labels[r] as usize;
            loss += lse - logits[y];
            for k in 0..c {
                let p = math::exp(logits[k] - lse);
                let g = (p - if k == y { 1.0 } else { 0.0 }) * inv_n;
                d_params[c * d + k] += g;
                for t in 0..d {
                    d_params[k * d + t] += g * zr[t];
                    d_z[r * d + t] += g * w[k * d + t];
                }
            }
        }
        (loss * inv_n, d_params, d_z)
    }
}

/// SGD with momentum and L2 weight decay:
/// `v ← μ v + (g + λ_wd p)`, `p ← p − lr v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: Vec<f64>,
}

impl SgdState {
    pub fn new(param_count: usize, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            buffers: vec![0.0; param_count],
        }
    }

    pub fn buffers(&self) -> &[f64] {
        &self.buffers
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), ToyError> {
        if params.len() != self.buffers.len() || grads.len() != params.len() {
            return Err(ToyError::ShapeMismatch {
                expected: self.buffers.len(),
                found: grads.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(ToyError::NonFiniteGradient);
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(self.buffers.iter_mut()) {
            *v = self.momentum * *v + (g + self.weight_decay * *p);
            *p -= lr * *v;
        }
        Ok(())
    }
}

/// Linear warmup from `warmup_start_fraction × base_lr` to `base_lr` over
/// `warmup_iters`, then division by `1/factor` at every milestone reached.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_iters: u64,
    pub warmup_start_fraction: f64,
    pub milestones: Vec<u64>,
    pub factor: f64,
}

impl Default for LrSchedule {
    /// Fine-tuning schedule: 1e-3, 200 warmup iterations, ×0.1 at 8000.
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            warmup_iters: 200,
            warmup_start_fraction: 1.0 / 3.0,
            milestones: vec![8000],
            factor: 0.1,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<(), ToyError> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(invalid("base_lr must be positive"));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(invalid("decay factor must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.warmup_start_fraction) {
            return Err(invalid("warmup_start_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: u64) -> f64 {
        let decays = self.milestones.iter().filter(|&&m| iteration >= m).count();
        // Dividing by 1/factor keeps decimal factors such as 0.1 exact
        // (1e-3 / 10 is the double nearest 1e-4; 1e-3 · 0.1 is not).
        let divisor = 1.0 / self.factor;
        let mut lr = self.base_lr;
        for _ in 0..decays {
            lr /= divisor;
        }
        if iteration < self.warmup_iters {
            let progress = iteration as f64 / self.warmup_iters as f64;
            lr *= self.warmup_start_fraction + (1.0 - self.warmup_start_fraction) * progress;
        }
        lr
    }
}

/// Class-conditional Gaussian clusters standing in for detector RoI features.
///
/// Class centers are `separation · uᶜ` for random unit directions `uᶜ`; a
/// sample is its center plus `noise · N(0, I)`. Consistency scores are
/// uniform on `[consistency_min, consistency_max]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SyntheticConfig {
    pub classes: usize,
    pub input_dim: usize,
    pub embed_dim: usize,
    pub separation: f64,
    pub noise: f64,
    pub consistency_min: f64,
    pub consistency_max: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            input_dim: 32,
            embed_dim: 16,
            separation: 1.0,
            noise: 0.3,
            consistency_min: 0.3,
            consistency_max: 1.0,
            batch_size: 12,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), ToyError> {
        if self.classes < 2 {
            return Err(invalid("need at least two classes"));
        }
        if self.input_dim == 0 || self.embed_dim == 0 || self.batch_size == 0 {
            return Err(invalid("dimensions and batch size must be positive"));
        }
        if !(self.separation > 0.0) || !(self.noise >= 0.0) {
            return Err(invalid("separation must be positive and noise non-negative"));
        }
        let (lo, hi) = (self.consistency_min, self.consistency_max);
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(invalid("consistency range must satisfy 0 <= min <= max <= 1"));
        }
        Ok(())
    }

    /// Row-major `classes × input_dim` cluster centers.
    pub fn centers(&self) -> Vec<f64> {
        let mut g = rng::generator(self.seed, 0);
        let mut out = Vec::with_capacity(self.classes * self.input_dim);
        for _ in 0..self.classes {
            let dir: Vec<f64> = (0..self.input_dim).map(|_| rng::standard_normal(&mut g)).collect();
            let unit = math::normalized(&dir).expect("gaussian direction is non-zero");
            out.extend(unit.iter().map(|v| v * self.separation));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBatch {
    pub features: Vec<f64>,
    pub labels: Vec<u32>,
    pub consistencies: Vec<f64>,
}

fn sample_rows(cfg: &SyntheticConfig, centers: &[f64], stream: u64, rows: usize) -> SyntheticBatch {
    let mut g = rng::generator(cfg.seed, stream);
    let d = cfg.input_dim;
    let mut features = Vec::with_capacity(rows * d);
    let mut labels = Vec::with_capacity(rows);
    let mut consistencies = Vec::with_capacity(rows);
    for _ in 0..rows {
        let y = rng::below(&mut g, cfg.classes as u64) as usize;
        labels.push(y as u32);
        for t in 0..d {
            features.push(centers[y * d + t] + cfg.noise * rng::standard_normal(&mut g));
        }
        consistencies.push(rng::uniform(&mut g, cfg.consistency_min, cfg.consistency_max));
    }
    SyntheticBatch {
        features,
        labels,
        consistencies,
    }
}

/// The batch for training iteration `step`; a pure function of `(cfg, step)`.
pub fn generate_batch(cfg: &SyntheticConfig, step: u64) -> SyntheticBatch {
    let centers = cfg.centers();
    sample_rows(cfg, &centers, step.wrapping_add(1), cfg.batch_size)
}

/// Held-out samples drawn from a stream no training step uses.
pub fn generate_eval_set(cfg: &SyntheticConfig, rows: usize) -> SyntheticBatch {
    let centers = cfg.centers();
    sample_rows(cfg, &centers, u64::MAX, rows)
}

/// Cluster quality of labelled unit embeddings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Compactness {
    /// Mean cosine similarity over same-label pairs.
    pub intra: f64,
    /// Mean cosine similarity over different-label pairs.
    pub inter: f64,
    /// `intra − inter`.
    pub margin: f64,
    /// Classes dropped for having fewer than two samples.
    pub excluded_classes: Vec<u32>,
}

pub fn compactness_metrics(
    embeddings: &[f64],
    dim: usize,
    labels: &[u32],
) -> Result<Compactness, ToyError> {
    if dim == 0 || embeddings.len() != labels.len() * dim {
        return Err(ToyError::ShapeMismatch {
            expected: labels.len() * dim,
            found: embeddings.len(),
        });
    }
    let mut counts: alloc::collections::BTreeMap<u32, usize> = Default::default();
    for &y in labels {
        *counts.entry(y).or_default() += 1;
    }
    let excluded: Vec<u32> = counts.iter().filter(|(_, &n)| n < 2).map(|(&y, _)| y).collect();
    if counts.len() - excluded.len() < 2 {
        return Err(ToyError::TooFewClasses);
    }
    let keep: Vec<usize> = (0..labels.len())
        .filter(|&i| counts[&labels[i]] >= 2)
        .collect();
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for (a, &i) in keep.iter().enumerate() {
        let zi = &embeddings[i * dim..(i + 1) * dim];
        for &j in &keep[a + 1..] {
            let s = math::dot(zi, &embeddings[j * dim..(j + 1) * dim]);
            if labels[i] == labels[j] {
                intra += s;
                n_intra += 1;
            } else {
                inter += s;
                n_inter += 1;
            }
        }
    }
    let intra = intra / n_intra as f64;
    let inter = inter / n_inter as f64;
    Ok(Compactness {
        intra,
        inter,
        margin: intra - inter,
        excluded_classes: excluded,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

/// Everything a toy run needs. Defaults give the desk-scale 5-class task.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub synthetic: SyntheticConfig,
    pub mcl: MclConfig,
    pub schedule: LrSchedule,
    pub sgd: SgdConfig,
    pub hidden_dim: usize,
    pub iterations: u64,
    /// Adds a linear softmax head on the embeddings as the classification loss.
    pub surrogate_classifier: bool,
    pub enqueue_policy: EnqueuePolicy,
    /// Held-out samples for the compactness metrics.
    pub eval_samples: usize,
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig::default(),
            mcl: MclConfig {
                capacity: 512,
                ..MclConfig::default()
            },
            schedule: LrSchedule {
                base_lr: 0.5,
                ..LrSchedule::default()
            },
            sgd: SgdConfig::default(),
            hidden_dim: 64,
            iterations: 2000,
            surrogate_classifier: false,
            enqueue_policy: EnqueuePolicy::All,
            eval_samples: 500,
            init_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ToyError> {
        self.synthetic.validate()?;
        self.mcl.validate()?;
        self.schedule.validate()?;
        if self.mcl.dim != self.synthetic.embed_dim {
            return Err(invalid("mcl.dim must equal synthetic.embed_dim"));
        }
        if self.hidden_dim == 0 {
            return Err(invalid("hidden_dim must be positive"));
        }
        if !(self.sgd.momentum >= 0.0 && self.sgd.momentum < 1.0) || !(self.sgd.weight_decay >= 0.0) {
            return Err(invalid("momentum must lie in [0, 1) and weight decay be non-negative"));
        }
        if let EnqueuePolicy::AboveThreshold(t) = self.enqueue_policy {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid("enqueue threshold must lie in [0, 1]"));
            }
        }
        if self.eval_samples < 4 {
            return Err(invalid("eval_samples must be at least 4"));
        }
        Ok(())
    }
}

/// One row of the loss curve. `total = in_batch + cross_batch` is the gated
/// contrastive loss; `classification` is the surrogate head's loss (0 when off).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossRecord {
    pub iteration: u64,
    pub total: f64,
    pub in_batch: f64,
    pub cross_batch: f64,
    pub classification: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: ProjectionEncoder,
    pub head: Option<LinearHead>,
    pub bank: MemoryBank,
    pub history: Vec<LossRecord>,
    pub initial: Compactness,
    pub final_metrics: Compactness,
    /// Held-out embeddings under the trained encoder, with their labels.
    pub eval_embeddings: Vec<f64>,
    pub eval_labels: Vec<u32>,
}

/// Gradients of `L_cls + λ L_MCL` for one batch, with the loss values.
pub struct StepGradients {
    pub record: LossRecord,
    pub encoder: Vec<f64>,
    pub head: Option<Vec<f64>>,
    pub batch: ContrastiveBatch,
}

/// Forward and backward for one synthetic batch against the current bank.
pub fn step_gradients(
    cfg: &TrainConfig,
    encoder: &ProjectionEncoder,
    head: Option<&LinearHead>,
    bank: &MemoryBank,
    data: &SyntheticBatch,
    iteration: u64,
) -> Result<StepGradients, ToyError> {
    let (z, cache) = encoder.forward(&data.features)?;
    let batch = ContrastiveBatch::new(
        encoder.output_dim(),
        z,
        data.labels.clone(),
        data.consistencies.clone(),
    )?;
    let snapshot = bank.snapshot();
    let offsets = snapshot.backward_offsets(iteration);
    let mcl = mcl::mcl_loss_grad(&batch, &snapshot, &offsets, &cfg.mcl)?;
    let lambda = cfg.mcl.lambda;
    let mut grad_z: Vec<f64> = mcl.d_embeddings.iter().map(|g| lambda * g).collect();
    let mut cls = 0.0;
    let head_grads = head.map(|h| {
        let (loss, d_params, d_z) = h.loss_grad(batch.embeddings(), batch.labels());
        cls = loss;
        for (a, b) in grad_z.iter_mut().zip(&d_z) {
            *a += b;
        }
        d_params
    });
    let enc = encoder.backward(&cache, &grad_z);
    Ok(StepGradients {
        record: LossRecord {
            iteration,
            total: mcl.loss.total,
            in_batch: mcl.loss.in_batch,
            cross_batch: mcl.loss.cross_batch,
            classification: cls,
        },
        encoder: enc.params,
        head: head_grads,
        batch,
    })
}

fn evaluate_compactness(
    cfg: &TrainConfig,
    encoder: &ProjectionEncoder,
    eval: &SyntheticBatch,
) -> Result<(Compactness, Vec<f64>), ToyError> {
    let (z, _) = encoder.forward(&eval.features)?;
    let m = compactness_metrics(&z, encoder.output_dim(), &eval.labels)?;
    let _ = cfg;
    Ok((m, z))
}

/// Runs the fine-tuning loop: generate → encode → loss → backward → SGD →
/// enqueue. Deterministic for a given configuration.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome, ToyError> {
    cfg.validate()?;
    let syn = &cfg.synthetic;
    let mut encoder =
        ProjectionEncoder::init(syn.input_dim, cfg.hidden_dim, syn.embed_dim, cfg.init_seed);
    let mut head = cfg
        .surrogate_classifier
        .then(|| LinearHead::init(syn.classes, syn.embed_dim, cfg.init_seed));
    let mut bank = MemoryBank::with_policy(cfg.mcl.capacity, cfg.enqueue_policy)?;
    let mut enc_opt = SgdState::new(encoder.params().len(), cfg.sgd.momentum, cfg.sgd.weight_decay);
    let mut head_opt = head
        .as_ref()
        .map(|h| SgdState::new(h.params().len(), cfg.sgd.momentum, cfg.sgd.weight_decay));

    let eval = generate_eval_set(syn, cfg.eval_samples);
    let (initial, _) = evaluate_compactness(cfg, &encoder, &eval)?;

    let centers = syn.centers();
    let mut history = Vec::with_capacity(cfg.iterations as usize);
    for it in 0..cfg.iterations {
        let data = sample_rows(syn, &centers, it.wrapping_add(1), syn.batch_size);
        let step = step_gradients(cfg, &encoder, head.as_ref(), &bank, &data, it)?;
        let lr = cfg.schedule.lr_at(it);
        enc_opt.step(encoder.params_mut(), &step.encoder, lr)?;
        if let (Some(h), Some(opt), Some(g)) = (head.as_mut(), head_opt.as_mut(), step.head.as_ref()) {
            opt.step(h.params_mut(), g, lr)?;
        }
        bank.enqueue_batch(step.batch.to_records(it), it)?;
        history.push(step.record);
    }

    let (final_metrics, eval_embeddings) = evaluate_compactness(cfg, &encoder, &eval)?;
    Ok(TrainOutcome {
        encoder,
        head,
        bank,
        history,
        initial,
        final_metrics,
        eval_embeddings,
        eval_labels: eval.labels,
    })
}

/// Trailing mean of `values` over a window, for smoothed loss curves.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}
