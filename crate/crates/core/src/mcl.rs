//! Memorable contrastive loss: IoU-gated supervised contrastive loss over the
//! current batch plus a step-decayed cross-batch term against the memory bank.
//!
//! For a batch of `M` unit embeddings `zᵢ` with labels `yᵢ` and consistencies
//! `cᵢ`, and bank entries `b_j` with labels `y_j` and backward offsets `t_j`:
//!
//! ```text
//! s_ik        = zᵢ·z_k / τ
//! L_in,i      = −(1/M)     Σ_{j≠i, y_j=yᵢ}  [ s_ij − log Σ_{k≠i} exp(s_ik) ]
//! L_cross,i   = −(1/N_eff) Σ_j  w_ij        [ zᵢ·b_j/τ − log Σ_k exp(zᵢ·b_k/τ) ]
//! w_ij        = 𝟙(yᵢ = y_j) · max(w0 − α t_j, 0)
//! φ(c)        = c if c > θ else 0
//! L           = (1/M) Σᵢ φ(cᵢ) (L_in,i + L_cross,i)
//! ```
//!
//! so that with every gate equal to one, `L` is the batch mean `−1/(M·M)` in-batch
//! sum plus the `−1/(M·N_eff)` cross-batch sum. `N_eff` is the current bank
//! occupancy. All denominators use max-subtracted log-sum-exp.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::membank::{BankSnapshot, ProposalRecord, UNIT_NORM_TOL};

#[derive(Debug, Clone, PartialEq)]
pub enum MclError {
    EmptyBatch,
    ZeroDimension,
    /// Embedding buffer length is not `M × D`, or labels/consistencies disagree with `M`.
    ShapeMismatch { expected: usize, found: usize },
    NotUnitNorm { index: usize, norm: f64 },
    ConsistencyOutOfRange { index: usize, value: f64 },
    DimensionMismatch { batch: usize, bank: usize },
    OffsetsMisaligned { records: usize, offsets: usize },
    InvalidConfig(&'static str),
    NonFinite,
}

impl fmt::Display for MclError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MclError::EmptyBatch => f.write_str("contrastive batch is empty"),
            MclError::ZeroDimension => f.write_str("embedding dimension must be positive"),
            MclError::ShapeMismatch { expected, found } => {
                write!(f, "expected {expected} values, found {found}")
            }
            MclError::NotUnitNorm { index, norm } => {
                write!(f, "embedding {index} has norm {norm}, expected 1")
            }
            MclError::ConsistencyOutOfRange { index, value } => {
                write!(f, "consistency {value} of proposal {index} outside [0, 1]")
            }
            MclError::DimensionMismatch { batch, bank } => {
                write!(f, "batch embeddings have dimension {batch}, bank has {bank}")
            }
            MclError::OffsetsMisaligned { records, offsets } => {
                write!(f, "{offsets} offsets for {records} bank records")
            }
            MclError::InvalidConfig(msg) => write!(f, "invalid loss configuration: {msg}"),
            MclError::NonFinite => f.write_str("loss inputs must be finite"),
        }
    }
}

impl core::error::Error for MclError {}

/// Loss hyperparameters. Defaults: `θ = 0.5`, `w0 = 0.95`, `α = 0.01`,
/// `λ = 0.3`, `N = 8192`; `τ = 0.2` and `D = 16` are desk-scale choices.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MclConfig {
    pub tau: f64,
    pub theta: f64,
    pub w0: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub capacity: usize,
    pub dim: usize,
}

impl Default for MclConfig {
    fn default() -> Self {
        Self {
            tau: 0.2,
            theta: 0.5,
            w0: 0.95,
            alpha: 0.01,
            lambda: 0.3,
            capacity: 8192,
            dim: 16,
        }
    }
}

impl MclConfig {
    pub fn validate(&self) -> Result<(), MclError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(MclError::InvalidConfig("tau must be positive"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(MclError::InvalidConfig("theta must lie in [0, 1]"));
        }
        if !(self.w0 > 0.0 && self.w0.is_finite()) {
            return Err(MclError::InvalidConfig("w0 must be positive"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(MclError::InvalidConfig("alpha must be non-negative"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(MclError::InvalidConfig("lambda must be non-negative"));
        }
        if self.capacity == 0 {
            return Err(MclError::InvalidConfig("capacity must be positive"));
        }
        if self.dim == 0 {
            return Err(MclError::InvalidConfig("dim must be positive"));
        }
        Ok(())
    }
}

/// The current iteration's proposals: row-major `M × D` embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    dim: usize,
    embeddings: Vec<f64>,
    labels: Vec<u32>,
    consistencies: Vec<f64>,
}

impl ContrastiveBatch {
    /// Validated batch; every embedding must be unit norm within `1e-6`.
    pub fn new(
        dim: usize,
        embeddings: Vec<f64>,
        labels: Vec<u32>,
        consistencies: Vec<f64>,
    ) -> Result<Self, MclError> {
        let batch = Self::new_unnormalized(dim, embeddings, labels, consistencies)?;
        for i in 0..batch.len() {
            let norm = math::norm(batch.embedding(i));
            if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
                return Err(MclError::NotUnitNorm { index: i, norm });
            }
        }
        Ok(batch)
    }

    /// Normalizes raw feature rows, then builds the batch.
    pub fn from_features(
        dim: usize,
        features: &[f64],
        labels: Vec<u32>,
        consistencies: Vec<f64>,
    ) -> Result<Self, MclError> {
        if dim == 0 {
            return Err(MclError::ZeroDimension);
        }
        let mut embeddings = Vec::with_capacity(features.len());
        for (i, row) in features.chunks(dim).enumerate() {
            let z = math::normalized(row).ok_or(MclError::NotUnitNorm { index: i, norm: 0.0 })?;
            embeddings.extend(z);
        }
        Self::new(dim, embeddings, labels, consistencies)
    }

    /// Skips the unit-norm check. The loss formula is then evaluated on the
    /// given vectors as-is, which is what finite-difference probing needs.
    pub fn new_unnormalized(
        dim: usize,
        embeddings: Vec<f64>,
        labels: Vec<u32>,
        consistencies: Vec<f64>,
    ) -> Result<Self, MclError> {
        if dim == 0 {
            return Err(MclError::ZeroDimension);
        }
        let m = labels.len();
        if m == 0 {
            return Err(MclError::EmptyBatch);
        }
        if embeddings.len() != m * dim {
            return Err(MclError::ShapeMismatch {
                expected: m * dim,
                found: embeddings.len(),
            });
        }
        if consistencies.len() != m {
            return Err(MclError::ShapeMismatch {
                expected: m,
                found: consistencies.len(),
            });
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(MclError::NonFinite);
        }
        for (i, &c) in consistencies.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(MclError::ConsistencyOutOfRange { index: i, value: c });
            }
        }
        Ok(Self {
            dim,
            embeddings,
            labels,
            consistencies,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn consistencies(&self) -> &[f64] {
        &self.consistencies
    }

    /// Bank records for this batch, stamped with `step`.
    pub fn to_records(&self, step: u64) -> Vec<ProposalRecord> {
        (0..self.len())
            .map(|i| {
                ProposalRecord::new(
                    self.embedding(i).to_vec(),
                    self.labels[i],
                    self.consistencies[i],
                    step,
                )
            })
            .collect()
    }
}

/// Per-anchor contribution: `gate = φ(cᵢ)`, and the ungated `L_in,i`, `L_cross,i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorTerm {
    pub gate: f64,
    pub in_batch: f64,
    pub cross_batch: f64,
}

impl AnchorTerm {
    pub fn loss(&self) -> f64 {
        self.in_batch + self.cross_batch
    }
}

/// Loss value with its decomposition. `in_batch` and `cross_batch` are the
/// gated contributions `(1/M) Σ φ(cᵢ) L_in,i` and `(1/M) Σ φ(cᵢ) L_cross,i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub in_batch: f64,
    pub cross_batch: f64,
    pub per_anchor: Vec<AnchorTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MclGradient {
    pub loss: LossBreakdown,
    /// `∂L/∂zᵢ`, row-major `M × D`.
    pub d_embeddings: Vec<f64>,
}

impl MclGradient {
    /// Chains `∂L/∂z` through `z = u/‖u‖` to the pre-normalization features `u`
    /// (row-major `M × D`).
    pub fn through_normalization(&self, features: &[f64], dim: usize) -> Vec<f64> {
        features
            .chunks(dim)
            .zip(self.d_embeddings.chunks(dim))
            .flat_map(|(u, g)| math::normalization_backward(u, g))
            .collect()
    }
}

/// `φ(c) = 𝟙(c > θ) · c`.
pub fn consistency_weight(c: f64, theta: f64) -> f64 {
    if c > theta {
        c
    } else {
        0.0
    }
}

/// `𝟙(yᵢ = y_j) · max(w0 − α t_j, 0)`.
pub fn step_weight(label_i: u32, label_j: u32, offset: u64, w0: f64, alpha: f64) -> f64 {
    if label_i != label_j {
        return 0.0;
    }
    (w0 - alpha * offset as f64).max(0.0)
}

/// `L_cls + L_reg + λ L_MCL`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLossInputs {
    pub cls_loss: f64,
    pub reg_loss: f64,
    pub mcl_loss: f64,
}

impl TotalLossInputs {
    pub fn new(cls_loss: f64, reg_loss: f64, mcl_loss: f64) -> Result<Self, MclError> {
        if [cls_loss, reg_loss, mcl_loss].iter().all(|v| v.is_finite()) {
            Ok(Self {
                cls_loss,
                reg_loss,
                mcl_loss,
            })
        } else {
            Err(MclError::NonFinite)
        }
    }
}

pub fn total_loss(inputs: &TotalLossInputs, lambda: f64) -> f64 {
    inputs.cls_loss + inputs.reg_loss + lambda * inputs.mcl_loss
}

/// Bank view with validated alignment.
struct BankView<'a> {
    records: &'a [ProposalRecord],
    offsets: &'a [u64],
}

fn check_bank<'a>(
    batch: &ContrastiveBatch,
    bank: &'a BankSnapshot,
    offsets: &'a [u64],
) -> Result<BankView<'a>, MclError> {
    if offsets.len() != bank.len() {
        return Err(MclError::OffsetsMisaligned {
            records: bank.len(),
            offsets: offsets.len(),
        });
    }
    if let Some(r) = bank.records().iter().find(|r| r.embedding.len() != batch.dim) {
        return Err(MclError::DimensionMismatch {
            batch: batch.dim,
            bank: r.embedding.len(),
        });
    }
    Ok(BankView {
        records: bank.records(),
        offsets,
    })
}

/// Eq-4-style in-batch term for anchor `i`: `L_in,i`, and when `grad` is
/// given, accumulates `scale · ∂L_in,i/∂z` into it.
fn anchor_in_batch(
    batch: &ContrastiveBatch,
    tau: f64,
    i: usize,
    grad: Option<(&mut [f64], f64)>,
) -> f64 {
    let m = batch.len();
    let zi = batch.embedding(i);
    let positives = (0..m)
        .filter(|&j| j != i && batch.labels[j] == batch.labels[i])
        .count();
    if positives == 0 {
        return 0.0;
    }
    let logits: Vec<f64> = (0..m)
        .map(|k| {
            if k == i {
                f64::NEG_INFINITY
            } else {
                math::dot(zi, batch.embedding(k)) / tau
            }
        })
        .collect();
    let lse = math::log_sum_exp(logits.iter().copied().filter(|v| v.is_finite()));
    let mut sum = 0.0;
    for (j, logit) in logits.iter().enumerate() {
        if j != i && batch.labels[j] == batch.labels[i] {
            sum += logit - lse;
        }
    }
    let inv_m = 1.0 / m as f64;
    if let Some((grad, scale)) = grad {
        let d = batch.dim;
        let p = positives as f64;
        for k in 0..m {
            if k == i {
                continue;
            }
            let positive = if batch.labels[k] == batch.labels[i] { 1.0 } else { 0.0 };
            let prob = math::exp(logits[k] - lse);
            // ∂L/∂s_ik, then s_ik = zᵢ·z_k/τ feeds both rows.
            let coef = -scale * inv_m * (positive - p * prob) / tau;
            if coef == 0.0 {
                continue;
            }
            for t in 0..d {
                let zk = batch.embeddings[k * d + t];
                let zit = batch.embeddings[i * d + t];
                grad[i * d + t] += coef * zk;
                grad[k * d + t] += coef * zit;
            }
        }
    }
    -inv_m * sum
}

fn anchor_cross_batch(
    batch: &ContrastiveBatch,
    bank: &BankView<'_>,
    cfg: &MclConfig,
    i: usize,
    grad: Option<(&mut [f64], f64)>,
) -> f64 {
    let n = bank.records.len();
    if n == 0 {
        return 0.0;
    }
    let yi = batch.labels[i];
    let weights: Vec<f64> = bank
        .records
        .iter()
        .zip(bank.offsets)
        .map(|(r, &t)| step_weight(yi, r.label, t, cfg.w0, cfg.alpha))
        .collect();
    let weight_sum: f64 = weights.iter().sum();
    if weight_sum == 0.0 {
        return 0.0;
    }
    let zi = batch.embedding(i);
    let logits: Vec<f64> = bank
        .records
        .iter()
        .map(|r| math::dot(zi, &r.embedding) / cfg.tau)
        .collect();
    let lse = math::log_sum_exp(logits.iter().copied());
    let sum: f64 = weights
        .iter()
        .zip(&logits)
        .map(|(w, s)| if *w == 0.0 { 0.0 } else { w * (s - lse) })
        .sum();
    let inv_n = 1.0 / n as f64;
    if let Some((grad, scale)) = grad {
        let d = batch.dim;
        for (j, r) in bank.records.iter().enumerate() {
            let prob = math::exp(logits[j] - lse);
            let coef = -scale * inv_n * (weights[j] - weight_sum * prob) / cfg.tau;
            if coef == 0.0 {
                continue;
            }
            for (g, b) in grad[i * d..(i + 1) * d].iter_mut().zip(&r.embedding) {
                *g += coef * b;
            }
        }
    }
    -inv_n * sum
}

/// In-batch loss `−(1/M²) Σᵢ Σ_{j≠i, y_j=yᵢ} log softmax_{k≠i}(s_ik)[j]`,
/// with the per-anchor `L_in,i` whose batch mean it is.
pub fn in_batch_loss(batch: &ContrastiveBatch, tau: f64) -> Result<(f64, Vec<f64>), MclError> {
    if batch.is_empty() {
        return Err(MclError::EmptyBatch);
    }
    if !(tau > 0.0) {
        return Err(MclError::InvalidConfig("tau must be positive"));
    }
    let terms: Vec<f64> = (0..batch.len())
        .map(|i| anchor_in_batch(batch, tau, i, None))
        .collect();
    let mean = terms.iter().sum::<f64>() / batch.len() as f64;
    Ok((mean, terms))
}

/// Cross-batch loss against a bank snapshot, with per-anchor `L_cross,i`.
pub fn cross_batch_loss(
    batch: &ContrastiveBatch,
    bank: &BankSnapshot,
    offsets: &[u64],
    cfg: &MclConfig,
) -> Result<(f64, Vec<f64>), MclError> {
    cfg.validate()?;
    let view = check_bank(batch, bank, offsets)?;
    let terms: Vec<f64> = (0..batch.len())
        .map(|i| anchor_cross_batch(batch, &view, cfg, i, None))
        .collect();
    let mean = terms.iter().sum::<f64>() / batch.len() as f64;
    Ok((mean, terms))
}

fn evaluate(
    batch: &ContrastiveBatch,
    bank: &BankSnapshot,
    offsets: &[u64],
    cfg: &MclConfig,
    mut grad: Option<&mut [f64]>,
) -> Result<LossBreakdown, MclError> {
    cfg.validate()?;
    let view = check_bank(batch, bank, offsets)?;
    let m = batch.len();
    let inv_m = 1.0 / m as f64;
    let mut per_anchor = Vec::with_capacity(m);
    let (mut total, mut in_sum, mut cross_sum) = (0.0, 0.0, 0.0);
    for i in 0..m {
        let gate = consistency_weight(batch.consistencies[i], cfg.theta);
        let scale = gate * inv_m;
        let g_in = grad.as_deref_mut().filter(|_| gate != 0.0).map(|g| (g, scale));
        let l_in = anchor_in_batch(batch, cfg.tau, i, g_in);
        let g_cross = grad.as_deref_mut().filter(|_| gate != 0.0).map(|g| (g, scale));
        let l_cross = anchor_cross_batch(batch, &view, cfg, i, g_cross);
        per_anchor.push(AnchorTerm {
            gate,
            in_batch: l_in,
            cross_batch: l_cross,
        });
        if gate != 0.0 {
            total += gate * (l_in + l_cross);
            in_sum += gate * l_in;
            cross_sum += gate * l_cross;
        }
    }
    let out = LossBreakdown {
        total: total * inv_m,
        in_batch: in_sum * inv_m,
        cross_batch: cross_sum * inv_m,
        per_anchor,
    };
    if !out.total.is_finite() {
        return Err(MclError::NonFinite);
    }
    Ok(out)
}

/// `L = (1/M) Σᵢ φ(cᵢ)(L_in,i + L_cross,i)`.
pub fn mcl_loss(
    batch: &ContrastiveBatch,
    bank: &BankSnapshot,
    offsets: &[u64],
    cfg: &MclConfig,
) -> Result<LossBreakdown, MclError> {
    evaluate(batch, bank, offsets, cfg, None)
}

/// Loss and `∂L/∂zᵢ` for the batch rows. Bank entries are constants.
pub fn mcl_loss_grad(
    batch: &ContrastiveBatch,
    bank: &BankSnapshot,
    offsets: &[u64],
    cfg: &MclConfig,
) -> Result<MclGradient, MclError> {
    let mut d = vec![0.0; batch.embeddings.len()];
    let loss = evaluate(batch, bank, offsets, cfg, Some(&mut d))?;
    Ok(MclGradient {
        loss,
        d_embeddings: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::membank::MemoryBank;
    use crate::rng;

    fn batch(dim: usize, rows: &[&[f64]], labels: &[u32], cons: &[f64]) -> ContrastiveBatch {
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        ContrastiveBatch::from_features(dim, &flat, labels.to_vec(), cons.to_vec()).unwrap()
    }

    fn random_unit(g: &mut rng::Generator, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng::standard_normal(g)).collect();
        math::normalized(&v).unwrap()
    }

    #[test]
    fn gate_examples() {
        assert_eq!(consistency_weight(0.4, 0.5), 0.0);
        assert_eq!(consistency_weight(0.7, 0.5), 0.7);
        assert_eq!(consistency_weight(0.5, 0.5), 0.0);
    }

    #[test]
    fn step_weight_examples() {
        assert!((step_weight(1, 1, 0, 0.95, 0.01) - 0.95).abs() < 1e-15);
        assert!((step_weight(1, 1, 5, 0.95, 0.01) - 0.90).abs() < 1e-12);
        assert_eq!(step_weight(1, 2, 0, 0.95, 0.01), 0.0);
        assert_eq!(step_weight(1, 2, 50, 0.95, 0.01), 0.0);
        assert_eq!(step_weight(3, 3, 200, 0.95, 0.01), 0.0);
    }

    #[test]
    fn total_loss_examples() {
        let x = 1.7;
        assert!((total_loss(&TotalLossInputs::new(0.0, 0.0, x).unwrap(), 0.3) - 0.3 * x).abs() < 1e-15);
        assert_eq!(total_loss(&TotalLossInputs::new(1.5, 2.5, 0.0).unwrap(), 0.3), 4.0);
        assert_eq!(total_loss(&TotalLossInputs::new(1.0, 2.0, 3.0).unwrap(), 0.5), 4.5);
        assert_eq!(TotalLossInputs::new(f64::NAN, 0.0, 0.0), Err(MclError::NonFinite));
    }

    #[test]
    fn in_batch_trivial_cases() {
        let one = batch(2, &[&[1.0, 0.0]], &[0], &[0.9]);
        assert_eq!(in_batch_loss(&one, 1.0).unwrap().0, 0.0);

        let diff = batch(2, &[&[1.0, 0.0], &[0.0, 1.0]], &[0, 1], &[0.9, 0.9]);
        assert_eq!(in_batch_loss(&diff, 1.0).unwrap().0, 0.0);

        let same = batch(2, &[&[1.0, 0.0], &[1.0, 0.0]], &[4, 4], &[0.9, 0.9]);
        assert_eq!(in_batch_loss(&same, 1.0).unwrap().0, 0.0);
    }

    #[test]
    fn in_batch_three_rows_by_hand() {
        // Rows e1, e1, e2 with labels 0, 0, 1 and τ = 1: anchors 0 and 1 each
        // have one positive with logit 1 against a negative with logit 0.
        let b = batch(2, &[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]], &[0, 0, 1], &[1.0; 3]);
        let (mean, terms) = in_batch_loss(&b, 1.0).unwrap();
        let per = -(1.0 / 3.0) * (1.0 - libm::log(libm::exp(1.0) + 1.0));
        assert!((terms[0] - per).abs() < 1e-15);
        assert!((terms[1] - per).abs() < 1e-15);
        assert_eq!(terms[2], 0.0);
        assert!((mean - 2.0 * per / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cross_batch_trivial_cases() {
        let cfg = MclConfig::default();
        let b = batch(2, &[&[1.0, 0.0], &[0.0, 1.0]], &[0, 1], &[0.9, 0.9]);
        let empty = BankSnapshot::default();
        assert_eq!(cross_batch_loss(&b, &empty, &[], &cfg).unwrap().0, 0.0);

        let mut bank = MemoryBank::new(8).unwrap();
        let other = batch(2, &[&[1.0, 0.0], &[0.6, 0.8]], &[5, 6], &[0.9, 0.9]);
        bank.enqueue_batch(other.to_records(0), 0).unwrap();
        let snap = bank.snapshot();
        let (v, terms) = cross_batch_loss(&b, &snap, &[0, 0], &cfg).unwrap();
        assert_eq!(v, 0.0);
        assert!(terms.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn cross_batch_errors() {
        let cfg = MclConfig::default();
        let b = batch(2, &[&[1.0, 0.0]], &[0], &[0.9]);
        let mut bank = MemoryBank::new(8).unwrap();
        bank.enqueue_batch([ProposalRecord::new(vec![0.0, 0.0, 1.0], 0, 0.9, 0)], 0)
            .unwrap();
        let snap = bank.snapshot();
        assert!(matches!(
            cross_batch_loss(&b, &snap, &[0], &cfg),
            Err(MclError::DimensionMismatch { batch: 2, bank: 3 })
        ));
        assert!(matches!(
            cross_batch_loss(&b, &snap, &[], &cfg),
            Err(MclError::OffsetsMisaligned { .. })
        ));
    }

    #[test]
    fn batch_validation() {
        assert_eq!(
            ContrastiveBatch::new(2, vec![], vec![], vec![]),
            Err(MclError::EmptyBatch)
        );
        assert!(matches!(
            ContrastiveBatch::new(2, vec![1.0, 1.0], vec![0], vec![0.5]),
            Err(MclError::NotUnitNorm { index: 0, .. })
        ));
        assert!(matches!(
            ContrastiveBatch::new(2, vec![1.0, 0.0], vec![0], vec![1.5]),
            Err(MclError::ConsistencyOutOfRange { .. })
        ));
        assert!(matches!(
            ContrastiveBatch::new(2, vec![1.0, 0.0, 0.0], vec![0], vec![0.5]),
            Err(MclError::ShapeMismatch { .. })
        ));
        let cfg = MclConfig {
            tau: 0.0,
            ..MclConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fully_gated_batch_is_zero() {
        let mut g = rng::generator(11, 0);
        let rows: Vec<f64> = (0..4).flat_map(|_| random_unit(&mut g, 3)).collect();
        let b = ContrastiveBatch::new(3, rows, vec![0, 0, 1, 1], vec![0.5, 0.1, 0.3, 0.0]).unwrap();
        let cfg = MclConfig::default();
        let out = mcl_loss_grad(&b, &BankSnapshot::default(), &[], &cfg).unwrap();
        assert_eq!(out.loss.total, 0.0);
        assert!(out.d_embeddings.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_bank_reduces_to_gated_in_batch() {
        let mut g = rng::generator(12, 0);
        let rows: Vec<f64> = (0..5).flat_map(|_| random_unit(&mut g, 4)).collect();
        let cons = vec![0.9, 0.6, 0.2, 0.75, 1.0];
        let b = ContrastiveBatch::new(4, rows, vec![0, 1, 0, 1, 0], cons.clone()).unwrap();
        let cfg = MclConfig::default();
        let out = mcl_loss(&b, &BankSnapshot::default(), &[], &cfg).unwrap();
        let (_, terms) = in_batch_loss(&b, cfg.tau).unwrap();
        let want: f64 = terms
            .iter()
            .zip(&cons)
            .map(|(l, c)| consistency_weight(*c, 0.5) * l)
            .sum::<f64>()
            / 5.0;
        assert!((out.total - want).abs() < 1e-15);
        assert_eq!(out.cross_batch, 0.0);
    }

    #[test]
    fn breakdown_invariant() {
        let mut g = rng::generator(13, 0);
        let d = 5;
        let rows: Vec<f64> = (0..6).flat_map(|_| random_unit(&mut g, d)).collect();
        let b = ContrastiveBatch::new(d, rows, vec![0, 1, 2, 0, 1, 2], vec![0.9, 0.4, 0.8, 0.7, 0.95, 0.55])
            .unwrap();
        let mut bank = MemoryBank::new(16).unwrap();
        for s in 0..3 {
            let recs: Vec<ProposalRecord> = (0..4)
                .map(|k| ProposalRecord::new(random_unit(&mut g, d), k % 3, 0.8, 0))
                .collect();
            bank.enqueue_batch(recs, s * 7).unwrap();
        }
        let snap = bank.snapshot();
        let offsets = bank.backward_offsets(20).unwrap();
        let cfg = MclConfig::default();
        let out = mcl_loss(&b, &snap, &offsets, &cfg).unwrap();
        let recomposed: f64 =
            out.per_anchor.iter().map(|a| a.gate * a.loss()).sum::<f64>() / b.len() as f64;
        assert!((out.total - recomposed).abs() < 1e-12);
        assert!((out.total - out.in_batch - out.cross_batch).abs() < 1e-12);
        assert!(out.cross_batch != 0.0);
    }

    #[test]
    fn identical_positive_pair_has_zero_gradient() {
        let b = batch(3, &[&[0.0, 0.6, 0.8], &[0.0, 0.6, 0.8]], &[1, 1], &[0.9, 0.9]);
        let out = mcl_loss_grad(&b, &BankSnapshot::default(), &[], &MclConfig::default()).unwrap();
        assert_eq!(out.loss.total, 0.0);
        assert!(out.d_embeddings.iter().all(|v| v.abs() < 1e-15));
    }
}
