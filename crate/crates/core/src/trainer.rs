//! Contrastive pre-training and frozen-encoder fine-tuning with momentum SGD.

use std::io::Write;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{make_views, modulus, AugmentConfig, AugmentError};
use crate::losses::{
    align_loss_var, cross_entropy_var, sup_con_loss_var, total_loss, Denominator, LossError, LossReport, Reduction,
};
use crate::model::{ModelError, ModelParams, ParamGroup, SHALLOW_DIM};
use crate::seeding::{derive_seed, rng_for};
use crate::tensor::{Tape, Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training data must contain both classes (got {clutter} clutter, {target} target)")]
    SingleClass { clutter: usize, target: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub finetune_epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub alpha: f64,
    pub t: f64,
    pub supcon_denominator: Denominator,
    /// Mean keeps the step size independent of batch size.
    pub supcon_reduction: Reduction,
    /// Filled from the run seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 20,
            finetune_epochs: 20,
            lr: 0.01,
            weight_decay: 1e-4,
            momentum: 0.9,
            alpha: 0.1,
            t: 0.07,
            supcon_denominator: Denominator::All,
            supcon_reduction: Reduction::Mean,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size {} must be ≥ 2", self.batch_size));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha {}", self.alpha));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay {}", self.weight_decay));
        }
        if !(self.t > 0.0) {
            return bad(format!("temperature {}", self.t));
        }
        Ok(())
    }
}

/// One training example: the complex segment, its class id and its weighted
/// shallow features (computed on the unaugmented segment).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub samples: Vec<Complex64>,
    pub label: usize,
    pub shallow: [f64; SHALLOW_DIM],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub step: usize,
    pub report: LossReport,
}

pub fn write_log_csv(rows: &[LogRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,step,l_sup,l_align,l_total")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:e},{:e},{:e}",
            r.epoch, r.step, r.report.l_sup, r.report.l_align, r.report.l_total
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl From<&TrainConfig> for SgdConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            lr: c.lr,
            momentum: c.momentum,
            weight_decay: c.weight_decay,
        }
    }
}

/// Momentum buffers, one per parameter, created on first use.
#[derive(Debug, Clone, Default)]
pub struct Velocity(Vec<Option<Vec<f64>>>);

/// `v ← μ·v + g + λ·w` (no decay on biases), `w ← w − lr·v`.
///
/// Parameters in frozen groups or without a gradient are left untouched,
/// including their decay.
pub fn sgd_step(params: &mut ModelParams, grads: &[Option<Tensor>], cfg: SgdConfig, velocity: &mut Velocity) {
    velocity.0.resize(params.params.len(), None);
    let frozen: Vec<bool> = params.params.iter().map(|p| params.is_frozen(p.group)).collect();
    for (i, p) in params.params.iter_mut().enumerate() {
        let Some(g) = grads.get(i).and_then(|g| g.as_ref()) else {
            continue;
        };
        if frozen[i] {
            continue;
        }
        let decay = if p.is_bias() { 0.0 } else { cfg.weight_decay };
        let v = velocity.0[i].get_or_insert_with(|| vec![0.0; g.numel()]);
        for ((w, vi), gi) in p.value.data_mut().iter_mut().zip(v.iter_mut()).zip(g.data()) {
            *vi = cfg.momentum * *vi + gi + decay * *w;
            *w -= cfg.lr * *vi;
        }
    }
}

/// Per-epoch batches drawing half from each class; the smaller class is
/// reshuffled and reused when exhausted. Batch count is `ceil(n / B)`.
fn balanced_batches(labels: &[usize], batch: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>, TrainError> {
    let by_class: [Vec<usize>; 2] = [0, 1].map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect());
    if by_class[0].is_empty() || by_class[1].is_empty() {
        return Err(TrainError::SingleClass {
            clutter: by_class[0].len(),
            target: by_class[1].len(),
        });
    }
    let mut rng = rng_for(seed, &[epoch as u64, 0xBA7C]);
    let mut queues: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let n_batches = labels.len().div_ceil(batch);
    let mut out = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let mut b = Vec::with_capacity(batch);
        for (c, take) in [(0, batch / 2), (1, batch - batch / 2)] {
            for _ in 0..take {
                if queues[c].is_empty() {
                    queues[c] = by_class[c].clone();
                    queues[c].shuffle(&mut rng);
                }
                b.push(queues[c].pop().expect("refilled"));
            }
        }
        b.shuffle(&mut rng);
        out.push(b);
    }
    Ok(out)
}

fn rows_tensor(rows: &[Vec<f64>]) -> Result<Tensor, TensorError> {
    let cols = rows.first().map_or(0, |r| r.len());
    Tensor::new(&[rows.len(), cols], rows.iter().flatten().copied().collect())
}

fn collect_grads(tape_grads: &mut crate::tensor::Gradients, vars: &[crate::tensor::Var<'_>]) -> Vec<Option<Tensor>> {
    vars.iter().map(|&v| tape_grads.take(v)).collect()
}

/// Contrastive pre-training of encoder, head and (when `alpha > 0`) the
/// alignment matrices. Returns the loss log; `params` is updated in place.
pub fn pretrain(
    params: &mut ModelParams,
    data: &[TrainSample],
    cfg: &TrainConfig,
    augment: &AugmentConfig,
) -> Result<Vec<LogRow>, TrainError> {
    cfg.validate()?;
    augment.validate()?;
    let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
    let sgd = SgdConfig::from(cfg);
    let mut velocity = Velocity::default();
    let mut log = Vec::new();
    let align_trains = cfg.alpha > 0.0;
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for batch in balanced_batches(&labels, cfg.batch_size, cfg.seed, epoch)? {
            let mut x_rows = Vec::new();
            let mut view_labels = Vec::new();
            let mut fs_rows = Vec::new();
            for &i in &batch {
                let view_seed = derive_seed(cfg.seed ^ augment.seed, &[epoch as u64, i as u64]);
                for (_, view) in make_views(&data[i].samples, augment, view_seed)? {
                    x_rows.push(modulus(&view));
                    view_labels.push(data[i].label);
                    fs_rows.push(data[i].shallow.to_vec());
                }
            }
            let tape = Tape::new();
            let bound = params.bind(&tape, |g| match g {
                ParamGroup::Encoder | ParamGroup::Head => true,
                ParamGroup::Align => align_trains,
                ParamGroup::Classifier => false,
            });
            let z = bound.project(bound.encode(tape.constant(rows_tensor(&x_rows)?))?)?;
            let l_sup = sup_con_loss_var(z, &view_labels, cfg.t, cfg.supcon_denominator, cfg.supcon_reduction)?;
            let d = bound.deep_embed(z)?;
            let s = bound.shallow_embed(tape.constant(rows_tensor(&fs_rows)?))?;
            let l_align = align_loss_var(s, d)?;
            let report = total_loss(l_sup.item()?, l_align.item()?, cfg.alpha);
            if !(report.l_total.is_finite()) {
                return Err(TrainError::NonFinite { epoch, step });
            }
            // at α = 0 the alignment term is logged but kept off the graph
            let objective = if align_trains { l_sup.add(l_align.scale(cfg.alpha))? } else { l_sup };
            let mut grads = tape.backward(objective)?;
            let g = collect_grads(&mut grads, bound.vars());
            sgd_step(params, &g, sgd, &mut velocity);
            log.push(LogRow { epoch, step, report });
            step += 1;
        }
        let n = log.iter().filter(|r| r.epoch == epoch).count() as f64;
        let mean = log.iter().filter(|r| r.epoch == epoch).map(|r| r.report.l_total).sum::<f64>() / n;
        log::info!("pretrain epoch {epoch}: mean l_total {mean:.5}");
    }
    Ok(log)
}

/// Encoder outputs for unaugmented inputs, computed in parallel chunks.
pub fn encode_all(params: &ModelParams, segments: &[Vec<Complex64>]) -> Result<Tensor, TrainError> {
    let r = params.config.encoder.repr_dim;
    let chunks: Vec<Vec<f64>> = segments
        .par_chunks(128)
        .map(|chunk| -> Result<Vec<f64>, TrainError> {
            let rows: Vec<Vec<f64>> = chunk.iter().map(|s| modulus(s)).collect();
            Ok(crate::model::encode(&rows_tensor(&rows)?, params)?.into_data())
        })
        .collect::<Result<_, _>>()?;
    Ok(Tensor::new(&[segments.len(), r], chunks.concat())?)
}

/// Freezes encoder and alignment groups, then trains head and classifier
/// with cross-entropy on unaugmented inputs. Returns per-step losses.
pub fn finetune(params: &mut ModelParams, data: &[TrainSample], cfg: &TrainConfig) -> Result<Vec<(usize, usize, f64)>, TrainError> {
    cfg.validate()?;
    params.set_frozen(ParamGroup::Encoder, true);
    params.set_frozen(ParamGroup::Align, true);
    params.set_frozen(ParamGroup::Head, false);
    params.set_frozen(ParamGroup::Classifier, false);
    let segments: Vec<Vec<Complex64>> = data.iter().map(|s| s.samples.clone()).collect();
    let reprs = encode_all(params, &segments)?;
    let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
    let sgd = SgdConfig::from(cfg);
    let mut velocity = Velocity::default();
    let mut log = Vec::new();
    let mut step = 0;
    let seed = derive_seed(cfg.seed, &[0xF1E7]);
    for epoch in 0..cfg.finetune_epochs {
        for batch in balanced_batches(&labels, cfg.batch_size, seed, epoch)? {
            let rows: Vec<Vec<f64>> = batch.iter().map(|&i| reprs.row(i).to_vec()).collect();
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let tape = Tape::new();
            let bound = params.bind(&tape, |_| true);
            let logits = bound.classify(bound.project(tape.constant(rows_tensor(&rows)?))?)?;
            let loss = cross_entropy_var(logits, &batch_labels)?;
            let value = loss.item()?;
            if !value.is_finite() {
                return Err(TrainError::NonFinite { epoch, step });
            }
            let mut grads = tape.backward(loss)?;
            let g = collect_grads(&mut grads, bound.vars());
            sgd_step(params, &g, sgd, &mut velocity);
            log.push((epoch, step, value));
            step += 1;
        }
    }
    Ok(log)
}
