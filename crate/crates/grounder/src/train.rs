//! Losses, the min-loss objective over sampled variants, Adam, and the
//! training loop.
//!
//! Per sample the single branch pays an L1 regression loss in both span
//! parameterizations plus an attention loss over the ground-truth clip mask;
//! the multi branch pays the same loss only for the variant currently closest
//! to the annotation (lowest loss, ties to the lowest index), scaled by
//! lambda. Gradients therefore flow through the single branch and exactly one
//! variant.
//!
//! Per-sample gradients within a batch are independent (training-mode batch
//! norm uses each forward's own statistics and returns them for a serialized
//! running-stat update), so the batch map can run on worker threads without
//! changing any bit of the result.

use crate::autodiff::{NodeId, Tape};
use crate::config::{RegHeads, RunConfig};
use crate::dataset::GroundingSample;
use crate::error::Error;
use crate::exec::{self, ExecMode};
use crate::model::Model;
use crate::regressor::{BnCapture, BnPhase, BranchOutput, BranchOutputNodes};
use crate::rng::{self, NoiseSource, LABEL_NOISE, LABEL_SHUFFLE};
use crate::span::TemporalSpan;
use crate::tensor::Matrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const ATTENTION_FLOOR: f64 = 1e-12;

/// L1 regression loss over the two span parameterizations; the center-width
/// target is derived from the start-end ground truth. `heads` can mask one
/// parameterization out.
pub fn loss_reg(se: (f64, f64), cw: (f64, f64), gt: &TemporalSpan, heads: RegHeads) -> f64 {
    let y_cw = gt.to_center_width();
    let se_term = (se.0 - gt.start()).abs() + (se.1 - gt.end()).abs();
    let cw_term = (cw.0 - y_cw.center).abs() + (cw.1 - y_cw.width).abs();
    match heads {
        RegHeads::Both => se_term + cw_term,
        RegHeads::Boundary => se_term,
        RegHeads::Centerness => cw_term,
    }
}

/// Masked negative log attention mass inside the ground-truth clips.
pub fn loss_att(attention: &[f64], mask: &[bool]) -> f64 {
    assert_eq!(attention.len(), mask.len());
    let count = mask.iter().filter(|&&m| m).count();
    assert!(count > 0, "attention mask must have at least one clip");
    let s: f64 = attention
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&a, _)| a.max(ATTENTION_FLOOR).ln())
        .sum();
    -s / count as f64
}

fn branch_loss(out: &BranchOutput, gt: &TemporalSpan, mask: &[bool], heads: RegHeads) -> f64 {
    loss_reg(out.se, out.cw, gt, heads) + loss_att(&out.attention, mask)
}

/// The full objective over a variant list: single-branch loss plus lambda
/// times the lowest variant loss. Returns the total and the selected index
/// (ties break to the lowest index).
pub fn loss_all(
    single: &BranchOutput,
    variants: &[BranchOutput],
    gt: &TemporalSpan,
    mask: &[bool],
    lambda: f64,
) -> (f64, usize) {
    assert!(!variants.is_empty());
    let l_single = branch_loss(single, gt, mask, RegHeads::Both);
    let losses: Vec<f64> = variants
        .iter()
        .map(|v| branch_loss(v, gt, mask, RegHeads::Both))
        .collect();
    let selected = argmin(&losses);
    (l_single + lambda * losses[selected], selected)
}

pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Tape version of [`loss_reg`].
pub fn loss_reg_nodes(
    tape: &mut Tape,
    se: NodeId,
    cw: NodeId,
    gt: &TemporalSpan,
    heads: RegHeads,
) -> NodeId {
    let y_cw = gt.to_center_width();
    let se_target = tape.leaf(Matrix::col_vec(&[gt.start(), gt.end()]));
    let cw_target = tape.leaf(Matrix::col_vec(&[y_cw.center, y_cw.width]));
    let se_term = {
        let d = tape.sub(se, se_target);
        let a = tape.abs_of(d);
        tape.sum_all(a)
    };
    let cw_term = {
        let d = tape.sub(cw, cw_target);
        let a = tape.abs_of(d);
        tape.sum_all(a)
    };
    match heads {
        RegHeads::Both => tape.add(se_term, cw_term),
        RegHeads::Boundary => se_term,
        RegHeads::Centerness => cw_term,
    }
}

/// Tape version of [`loss_att`].
pub fn loss_att_nodes(tape: &mut Tape, attention: NodeId, mask: &[bool]) -> NodeId {
    let count = mask.iter().filter(|&&m| m).count();
    assert!(count > 0, "attention mask must have at least one clip");
    let mask_row: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let m = tape.leaf(Matrix::row_vec(&mask_row));
    let la = tape.log_clamped(attention, ATTENTION_FLOOR);
    let masked = tape.mul(la, m);
    let s = tape.sum_all(masked);
    tape.scale(s, -1.0 / count as f64)
}

pub fn branch_loss_nodes(
    tape: &mut Tape,
    out: &BranchOutputNodes,
    gt: &TemporalSpan,
    mask: &[bool],
    heads: RegHeads,
) -> NodeId {
    let reg = loss_reg_nodes(tape, out.se, out.cw, gt, heads);
    let att = loss_att_nodes(tape, out.attention, mask);
    tape.add(reg, att)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Matrix>,
    pub v: BTreeMap<String, Matrix>,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub state: AdamState,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: AdamState {
                step: 0,
                m: BTreeMap::new(),
                v: BTreeMap::new(),
            },
        }
    }

    pub fn with_state(lr: f64, state: AdamState) -> Self {
        Adam {
            state,
            ..Adam::new(lr)
        }
    }

    /// One update over every gradient entry. Parameters without a gradient
    /// this step keep their moments and values untouched.
    pub fn step(&mut self, params: &mut BTreeMap<String, Matrix>, grads: &BTreeMap<String, Matrix>) {
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter {name}"));
            let m = self
                .state
                .m
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(g.rows(), g.cols()));
            let v = self
                .state
                .v
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(g.rows(), g.cols()));
            for i in 0..g.len() {
                let gi = g.data()[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                p.data_mut()[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean loss of the selected variant, when the multi branch trains.
    pub mean_selected: Option<f64>,
}

struct SampleGrad {
    grads: BTreeMap<String, Matrix>,
    bn_capture: BnCapture,
    loss: f64,
    selected_loss: Option<f64>,
}

fn sample_grads(
    model: &Model,
    sample: &GroundingSample,
    cfg: &RunConfig,
    noise_seed_parts: &[u64],
) -> Result<SampleGrad, Error> {
    let flags = &cfg.ablation;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let enc = model.encode_sample(&mut tape, &bound, sample, flags.pos_mode);
    let gt = sample.primary_annotation();
    let mask = crate::span::inside_mask(&gt, model.dims.t_m);

    let mut capture: BnCapture = Vec::new();
    let single_out = {
        let mut bn = BnPhase::Train(&mut capture);
        model.single_output(&mut tape, &bound, &enc, flags, &mut bn)
    };
    let l_single = branch_loss_nodes(&mut tape, &single_out, &gt, &mask, flags.reg_heads);

    let use_multi = !flags.single_branch_only.is_on() && cfg.loss.lambda > 0.0;
    let mut selected_loss = None;
    let total = if use_multi {
        let mut noise = NoiseSource::from_stream(cfg.train.seed, noise_seed_parts);
        let mut variant_losses = Vec::with_capacity(cfg.sampler.k_train);
        for _ in 0..cfg.sampler.k_train {
            let out = {
                let mut bn = BnPhase::Train(&mut capture);
                model.variant_output(
                    &mut tape,
                    &bound,
                    &enc,
                    flags,
                    cfg.sampler.sigma_train,
                    &mut noise,
                    &mut bn,
                )
            };
            variant_losses.push(branch_loss_nodes(&mut tape, &out, &gt, &mask, flags.reg_heads));
        }
        let values: Vec<f64> = variant_losses.iter().map(|&n| tape.value(n).item()).collect();
        let multi_term = if flags.min_loss.is_on() {
            let sel = argmin(&values);
            selected_loss = Some(values[sel]);
            tape.scale(variant_losses[sel], cfg.loss.lambda)
        } else {
            // min-loss ablation: every variant regresses to the annotation
            let mut acc = variant_losses[0];
            for &n in &variant_losses[1..] {
                acc = tape.add(acc, n);
            }
            let sel = argmin(&values);
            selected_loss = Some(values[sel]);
            tape.scale(acc, cfg.loss.lambda / cfg.sampler.k_train as f64)
        };
        tape.add(l_single, multi_term)
    } else {
        l_single
    };

    let loss = tape.value(total).item();
    if !loss.is_finite() {
        // the caller adds epoch/batch context
        return Err(Error::NonFiniteLoss {
            query_id: sample.query_id.clone(),
            epoch: 0,
            batch: 0,
        });
    }
    let grads = tape.backward(total);
    let mut out = BTreeMap::new();
    for (name, &id) in &bound.ids {
        if let Some(g) = grads.get(id) {
            out.insert(name.clone(), g.clone());
        }
    }
    Ok(SampleGrad {
        grads: out,
        bn_capture: capture,
        loss,
        selected_loss,
    })
}

/// One pass over the dataset in shuffled mini-batches with one Adam step per
/// batch. Deterministic given the seed, including under parallel execution.
pub fn train_epoch(
    model: &mut Model,
    adam: &mut Adam,
    data: &[GroundingSample],
    cfg: &RunConfig,
    epoch: usize,
    mode: ExecMode,
) -> Result<EpochStats, Error> {
    assert!(!data.is_empty(), "train_epoch on empty dataset");
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng::stream(cfg.train.seed, &[LABEL_SHUFFLE, epoch as u64]);
    order.shuffle(&mut shuffle_rng);

    let mut loss_sum = 0.0;
    let mut sel_sum = 0.0;
    let mut sel_count = 0usize;

    for (batch_idx, batch) in order.chunks(cfg.train.batch_size).enumerate() {
        let offset = batch_idx * cfg.train.batch_size;
        let results: Vec<Result<SampleGrad, Error>> =
            exec::map_indexed(mode, batch, |i, &sample_idx| {
                let pos = (offset + i) as u64;
                sample_grads(
                    model,
                    &data[sample_idx],
                    cfg,
                    &[LABEL_NOISE, epoch as u64, pos],
                )
            });

        let mut batch_grads: BTreeMap<String, Matrix> = BTreeMap::new();
        let scale = 1.0 / batch.len() as f64;
        for r in results {
            let sg = r.map_err(|e| match e {
                Error::NonFiniteLoss { query_id, .. } => Error::NonFiniteLoss {
                    query_id,
                    epoch,
                    batch: batch_idx,
                },
                other => other,
            })?;
            for (name, g) in sg.grads {
                match batch_grads.get_mut(&name) {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        batch_grads.insert(name, g);
                    }
                }
            }
            model.apply_bn_capture(&sg.bn_capture);
            loss_sum += sg.loss;
            if let Some(s) = sg.selected_loss {
                sel_sum += s;
                sel_count += 1;
            }
        }
        for g in batch_grads.values_mut() {
            g.scale_assign(scale);
        }
        adam.step(&mut model.params, &batch_grads);
    }

    Ok(EpochStats {
        epoch,
        mean_loss: loss_sum / data.len() as f64,
        mean_selected: if sel_count > 0 {
            Some(sel_sum / sel_count as f64)
        } else {
            None
        },
    })
}

/// Run the configured number of epochs.
pub fn fit(
    model: &mut Model,
    data: &[GroundingSample],
    cfg: &RunConfig,
    mode: ExecMode,
) -> Result<(Vec<EpochStats>, Adam), Error> {
    let mut adam = Adam::new(cfg.train.lr);
    let mut stats = Vec::with_capacity(cfg.train.epochs);
    for epoch in 0..cfg.train.epochs {
        stats.push(train_epoch(model, &mut adam, data, cfg, epoch, mode)?);
    }
    Ok((stats, adam))
}

/// Everything needed to restore training or run inference, in one
/// self-describing container. JSON round-trips f64 values exactly.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub seed: u64,
    pub vocab: Vec<String>,
    pub params: BTreeMap<String, Matrix>,
    pub bn: BTreeMap<String, crate::regressor::BnStats>,
    pub optimizer: AdamState,
}

impl Checkpoint {
    pub fn new(model: &Model, cfg: &RunConfig, adam: &Adam) -> Checkpoint {
        Checkpoint {
            config: cfg.clone(),
            seed: cfg.train.seed,
            vocab: model.vocab.clone(),
            params: model.params.clone(),
            bn: model.bn.clone(),
            optimizer: adam.state.clone(),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), Error> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &std::path::Path) -> Result<Checkpoint, Error> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn into_model(self) -> (Model, RunConfig, AdamState) {
        let model = Model::from_parts(self.config.model.clone(), self.vocab, self.params, self.bn);
        (model, self.config, self.optimizer)
    }
}
