//! The temporal regression network: a stack of temporal blocks (residual
//! conv/batch-norm followed by residual multi-head self-attention over the
//! clip axis) and an attention-guided regression head producing start-end and
//! center-width predictions squashed to [0, 1] by a logistic.
//!
//! The full model instantiates this twice: a single-output branch fed the
//! deterministic fused features and a multi-output branch fed sampled
//! variants. The branches share no parameters.

use crate::autodiff::{NodeId, Tape};
use crate::span::TemporalSpan;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const BN_EPS: f64 = 1e-5;
/// Momentum for folding batch statistics into running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

/// Running batch-norm statistics for one normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnStats {
    pub fn fresh(channels: usize) -> Self {
        BnStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn update(&mut self, batch_mean: &[f64], batch_var: &[f64]) {
        for (r, (m, v)) in batch_mean.iter().zip(batch_var).enumerate() {
            self.mean[r] = (1.0 - BN_MOMENTUM) * self.mean[r] + BN_MOMENTUM * m;
            self.var[r] = (1.0 - BN_MOMENTUM) * self.var[r] + BN_MOMENTUM * v;
        }
    }
}

/// Captured batch statistics from one training-mode forward, applied to the
/// running stats in order after the (possibly parallel) forward passes.
pub type BnCapture = Vec<(String, Vec<f64>, Vec<f64>)>;

/// Whether a forward pass normalizes with the current input's statistics
/// (training) or the stored running statistics (evaluation).
pub enum BnPhase<'a> {
    Train(&'a mut BnCapture),
    Eval(&'a BTreeMap<String, BnStats>),
}

impl BnPhase<'_> {
    fn apply(
        &mut self,
        tape: &mut Tape,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        name: &str,
    ) -> NodeId {
        match self {
            BnPhase::Train(capture) => {
                let (node, mean, var) = tape.batchnorm_train(x, gamma, beta, BN_EPS);
                capture.push((name.to_string(), mean, var));
                node
            }
            BnPhase::Eval(stats) => {
                let s = stats
                    .get(name)
                    .unwrap_or_else(|| panic!("missing running stats for {name}"));
                tape.batchnorm_eval(x, gamma, beta, &s.mean, &s.var, BN_EPS)
            }
        }
    }
}

/// Tape nodes for one temporal block.
#[derive(Clone, Copy)]
pub struct BlockNodes {
    pub conv1: NodeId,
    pub bn1_gamma: NodeId,
    pub bn1_beta: NodeId,
    pub conv2: NodeId,
    pub bn2_gamma: NodeId,
    pub bn2_beta: NodeId,
    pub wq: NodeId,
    pub wk: NodeId,
    pub wv: NodeId,
    pub wo: NodeId,
}

/// Tape nodes for the regression head.
#[derive(Clone, Copy)]
pub struct HeadNodes {
    pub w5: NodeId,
    pub w6: NodeId,
    pub se_w: NodeId,
    pub se_b: NodeId,
    pub cw_w: NodeId,
    pub cw_b: NodeId,
}

#[derive(Clone)]
pub struct BranchNodes {
    pub blocks: Vec<BlockNodes>,
    pub head: HeadNodes,
}

/// Raw head outputs as tape nodes.
#[derive(Clone, Copy)]
pub struct BranchOutputNodes {
    /// `[2 x 1]` start-end, each coordinate in (0, 1).
    pub se: NodeId,
    /// `[2 x 1]` center-width.
    pub cw: NodeId,
    /// `[1 x T_m]` attention distribution.
    pub attention: NodeId,
}

/// Plain-value branch output extracted from the tape.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchOutput {
    pub se: (f64, f64),
    pub cw: (f64, f64),
    pub attention: Vec<f64>,
}

impl BranchOutput {
    pub fn from_nodes(tape: &Tape, nodes: &BranchOutputNodes) -> Self {
        let se = tape.value(nodes.se);
        let cw = tape.value(nodes.cw);
        BranchOutput {
            se: (se.get(0, 0), se.get(1, 0)),
            cw: (cw.get(0, 0), cw.get(1, 0)),
            attention: tape.value(nodes.attention).row(0).to_vec(),
        }
    }

    /// Sanitized start-end span (clamped, swapped when inverted).
    pub fn span(&self) -> TemporalSpan {
        TemporalSpan::sanitized(self.se.0, self.se.1)
    }
}

fn multihead_attention(
    tape: &mut Tape,
    x: NodeId,
    block: &BlockNodes,
    heads: usize,
) -> NodeId {
    let d_m = tape.value(x).rows();
    assert!(d_m % heads == 0, "d_m must be divisible by the head count");
    let d_h = d_m / heads;
    let q = tape.matmul(block.wq, x);
    let k = tape.matmul(block.wk, x);
    let v = tape.matmul(block.wv, x);
    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_rows(q, h * d_h, (h + 1) * d_h);
        let kh = tape.slice_rows(k, h * d_h, (h + 1) * d_h);
        let vh = tape.slice_rows(v, h * d_h, (h + 1) * d_h);
        let qt = tape.transpose(qh);
        let scores = tape.matmul(qt, kh);
        let scaled = tape.scale(scores, 1.0 / (d_h as f64).sqrt());
        let weights = tape.softmax_rows(scaled);
        let wt = tape.transpose(weights);
        head_outputs.push(tape.matmul(vh, wt));
    }
    let cat = tape.concat_rows(&head_outputs);
    tape.matmul(block.wo, cat)
}

/// One temporal block: `F~ = F + conv-bn-relu-conv-bn(F)`, then
/// `F' = F~ + MultiheadAttention(F~)`.
pub fn temporal_block(
    tape: &mut Tape,
    input: NodeId,
    block: &BlockNodes,
    name: &str,
    heads: usize,
    kernel: usize,
    bn: &mut BnPhase<'_>,
) -> NodeId {
    let c1 = tape.conv1d_same(input, block.conv1, kernel);
    let n1 = bn.apply(tape, c1, block.bn1_gamma, block.bn1_beta, &format!("{name}.bn1"));
    let r = tape.relu(n1);
    let c2 = tape.conv1d_same(r, block.conv2, kernel);
    let n2 = bn.apply(tape, c2, block.bn2_gamma, block.bn2_beta, &format!("{name}.bn2"));
    let ft = tape.add(input, n2);
    let att = multihead_attention(tape, ft, block, heads);
    tape.add(ft, att)
}

/// Attention-guided regression: pool the clip features with a learned
/// softmax attention and regress both span parameterizations from the pooled
/// vector.
pub fn regression_head(tape: &mut Tape, features: NodeId, head: &HeadNodes) -> BranchOutputNodes {
    let hidden = tape.matmul(head.w5, features);
    let th = tape.tanh_of(hidden);
    let scores = tape.matmul(head.w6, th);
    let attention = tape.softmax_rows(scores);
    let at = tape.transpose(attention);
    let pooled = tape.matmul(features, at);
    let se_lin = tape.matmul(head.se_w, pooled);
    let se_aff = tape.add_bias(se_lin, head.se_b);
    let se = tape.sigmoid(se_aff);
    let cw_lin = tape.matmul(head.cw_w, pooled);
    let cw_aff = tape.add_bias(cw_lin, head.cw_b);
    let cw = tape.sigmoid(cw_aff);
    BranchOutputNodes {
        se,
        cw,
        attention,
    }
}

/// Sequential blocks then the head.
pub fn forward_branch(
    tape: &mut Tape,
    input: NodeId,
    branch: &BranchNodes,
    name: &str,
    heads: usize,
    kernel: usize,
    bn: &mut BnPhase<'_>,
) -> BranchOutputNodes {
    let mut x = input;
    for (i, block) in branch.blocks.iter().enumerate() {
        x = temporal_block(tape, x, block, &format!("{name}.block{i}"), heads, kernel, bn);
    }
    regression_head(tape, x, &branch.head)
}
