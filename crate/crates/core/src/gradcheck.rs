//! Finite-difference verification of the analytic contrastive-loss gradients,
//! both with respect to the batch embeddings and through a small projection
//! encoder to its parameters.

use alloc::vec::Vec;

use rand::RngCore;

use crate::mcl::{self, ContrastiveBatch, MclConfig};
use crate::membank::{MemoryBank, ProposalRecord};
use crate::toytrain::{ProjectionEncoder, ToyError};
use crate::{math, rng};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GradcheckConfig {
    pub instances: usize,
    pub seed: u64,
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Perturbs the analytic gradient so the check must fail.
    pub corrupt: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            seed: 0,
            step: 1e-6,
            tolerance: 1e-5,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstanceResult {
    pub batch: usize,
    pub bank: usize,
    pub dim: usize,
    pub rel_err_embeddings: f64,
    pub rel_err_params: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradcheckReport {
    pub instances: usize,
    pub max_rel_err: f64,
    pub pass: bool,
    pub results: Vec<InstanceResult>,
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both norms are below `1e-12`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = math::norm(a).max(math::norm(b));
    if scale < 1e-12 {
        0.0
    } else {
        math::norm(&diff) / scale
    }
}

/// Central differences of `f` at `x`.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>, ToyError>
where
    F: FnMut(&[f64]) -> Result<f64, ToyError>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

const INPUT_DIM: usize = 5;
const HIDDEN_DIM: usize = 6;
const CLASSES: u64 = 3;

fn unit_vector(g: &mut rng::Generator, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng::standard_normal(g)).collect();
        if let Some(u) = math::normalized(&v) {
            return u;
        }
    }
}

/// Runs one random instance drawn from stream `index` of `seed`.
pub fn check_instance(cfg: &GradcheckConfig, index: u64) -> Result<InstanceResult, ToyError> {
    let mut g = rng::generator(cfg.seed, index);
    let m = 2 + rng::below(&mut g, 5) as usize;
    let n = rng::below(&mut g, 17) as usize;
    let d = if rng::below(&mut g, 2) == 0 { 4 } else { 8 };
    let mcl_cfg = MclConfig {
        tau: rng::uniform(&mut g, 0.1, 0.5),
        dim: d,
        capacity: n.max(1),
        ..MclConfig::default()
    };
    let encoder = ProjectionEncoder::init(INPUT_DIM, HIDDEN_DIM, d, g.next_u64());
    let labels: Vec<u32> = (0..m).map(|_| rng::below(&mut g, CLASSES) as u32).collect();
    // The first anchor passes the gate so the gradient is never trivially zero.
    let consistencies: Vec<f64> = (0..m)
        .map(|i| {
            if i == 0 {
                rng::uniform(&mut g, 0.6, 1.0)
            } else {
                rng::unit(&mut g)
            }
        })
        .collect();
    // Redraw inputs until every hidden unit is clear of the ReLU kink.
    let (features, z, cache) = loop {
        let x: Vec<f64> = (0..m * INPUT_DIM).map(|_| rng::standard_normal(&mut g)).collect();
        let (z, cache) = encoder.forward(&x)?;
        if cache.min_abs_preactivation() > 1e-3 {
            break (x, z, cache);
        }
    };
    let mut bank = MemoryBank::new(mcl_cfg.capacity)?;
    let records: Vec<ProposalRecord> = (0..n)
        .map(|_| {
            let e = unit_vector(&mut g, d);
            ProposalRecord::new(e, rng::below(&mut g, CLASSES) as u32, rng::unit(&mut g), 0)
        })
        .collect();
    bank.enqueue_batch(records, 0)?;
    let snapshot = bank.snapshot();
    let offsets: Vec<u64> = (0..n).map(|_| rng::below(&mut g, 120)).collect();

    let batch = ContrastiveBatch::new(d, z.clone(), labels.clone(), consistencies.clone())?;
    let grad = mcl::mcl_loss_grad(&batch, &snapshot, &offsets, &mcl_cfg)?;
    let corrupt = |v: Vec<f64>| -> Vec<f64> {
        if cfg.corrupt {
            v.into_iter().map(|x| x * 1.001).collect()
        } else {
            v
        }
    };

    let loss_at_z = |zz: &[f64]| -> Result<f64, ToyError> {
        let b = ContrastiveBatch::new_unnormalized(d, zz.to_vec(), labels.clone(), consistencies.clone())?;
        Ok(mcl::mcl_loss(&b, &snapshot, &offsets, &mcl_cfg)?.total)
    };
    let numeric_z = central_difference(loss_at_z, &z, cfg.step)?;
    let analytic_z = corrupt(grad.d_embeddings.clone());

    let analytic_p = corrupt(encoder.backward(&cache, &grad.d_embeddings).params);
    let loss_at_params = |p: &[f64]| -> Result<f64, ToyError> {
        let enc = ProjectionEncoder::from_params(INPUT_DIM, HIDDEN_DIM, d, p.to_vec())?;
        let (zz, _) = enc.forward(&features)?;
        let b = ContrastiveBatch::new_unnormalized(d, zz, labels.clone(), consistencies.clone())?;
        Ok(mcl::mcl_loss(&b, &snapshot, &offsets, &mcl_cfg)?.total)
    };
    let numeric_p = central_difference(loss_at_params, encoder.params(), cfg.step)?;

    Ok(InstanceResult {
        batch: m,
        bank: n,
        dim: d,
        rel_err_embeddings: relative_error(&analytic_z, &numeric_z),
        rel_err_params: relative_error(&analytic_p, &numeric_p),
    })
}

/// Checks `cfg.instances` random instances; passes when every relative error
/// is below the tolerance (vacuously with zero instances).
pub fn run(cfg: &GradcheckConfig) -> Result<GradcheckReport, ToyError> {
    if !(cfg.step > 0.0 && cfg.tolerance > 0.0) {
        return Err(ToyError::InvalidConfig("step and tolerance must be positive".into()));
    }
    let results = (0..cfg.instances as u64)
        .map(|i| check_instance(cfg, i))
        .collect::<Result<Vec<_>, _>>()?;
    let max_rel_err = results
        .iter()
        .map(|r| r.rel_err_embeddings.max(r.rel_err_params))
        .fold(0.0, f64::max);
    Ok(GradcheckReport {
        instances: results.len(),
        max_rel_err,
        pass: max_rel_err < cfg.tolerance,
        results,
    })
}
