//! The full grounding model: named parameter store, initialization, tape
//! binding, and the single/variant forward paths shared by training and
//! inference.
//!
//! Parameters live in a name-keyed map so checkpoints are self-describing and
//! every parameter's init stream is derived from its name — two models built
//! from the same seed initialize shared layers identically even when one of
//! them has extra layers.

use crate::autodiff::{NodeId, Tape};
use crate::config::{AblationSection, ModelSection};
use crate::dataset::GroundingSample;
use crate::encoder::{self, BiRnnLayerNodes, EncoderNodes, LstmDirNodes, PosMode};
use crate::error::Error;
use crate::regressor::{BnPhase, BnStats, BranchNodes, BranchOutputNodes, BlockNodes, HeadNodes};
use crate::rng::{self, LABEL_INIT};
use crate::span::uniform_resample;
use crate::tensor::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::{BTreeMap, HashMap};

pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone)]
pub struct Model {
    pub dims: ModelSection,
    pub vocab: Vec<String>,
    pub params: BTreeMap<String, Matrix>,
    pub bn: BTreeMap<String, BnStats>,
    vocab_index: HashMap<String, usize>,
}

/// Sorted unique tokens behind a reserved unknown-word slot.
pub fn build_vocab(samples: &[GroundingSample]) -> Vec<String> {
    let mut words: Vec<String> = samples
        .iter()
        .flat_map(|s| s.query.tokens.iter().cloned())
        .collect();
    words.sort_unstable();
    words.dedup();
    let mut vocab = vec![UNK_TOKEN.to_string()];
    vocab.extend(words);
    vocab
}

fn shape_table(dims: &ModelSection, vocab: usize) -> Vec<(String, usize, usize)> {
    let d = dims.d_m;
    let d_w = dims.d_w;
    let h = dims.d_l / 2;
    let d_h = d / 2;
    let k = dims.kernel;
    let mut t: Vec<(String, usize, usize)> = Vec::new();
    t.push(("encoder.embedding".into(), vocab, d_w));
    for (layer, in_dim) in [(0, d_w), (1, dims.d_l)] {
        for dir in ["fw", "bw"] {
            t.push((format!("encoder.rnn{layer}.{dir}.w_x"), 4 * h, in_dim));
            t.push((format!("encoder.rnn{layer}.{dir}.w_h"), 4 * h, h));
            t.push((format!("encoder.rnn{layer}.{dir}.b"), 4 * h, 1));
        }
    }
    t.push(("encoder.w1".into(), d, d));
    t.push(("encoder.w2".into(), d, d));
    t.push(("encoder.w3".into(), dims.d_l, 2 * dims.d_l));
    t.push(("encoder.b3".into(), dims.d_l, 1));
    t.push(("encoder.w4".into(), dims.d_l, 2 * dims.d_l));
    t.push(("encoder.b4".into(), dims.d_l, 1));
    for branch in ["single", "multi"] {
        for b in 0..dims.blocks {
            let p = format!("{branch}.block{b}");
            t.push((format!("{p}.conv1"), d, d * k));
            t.push((format!("{p}.bn1.gamma"), d, 1));
            t.push((format!("{p}.bn1.beta"), d, 1));
            t.push((format!("{p}.conv2"), d, d * k));
            t.push((format!("{p}.bn2.gamma"), d, 1));
            t.push((format!("{p}.bn2.beta"), d, 1));
            t.push((format!("{p}.attn.wq"), d, d));
            t.push((format!("{p}.attn.wk"), d, d));
            t.push((format!("{p}.attn.wv"), d, d));
            t.push((format!("{p}.attn.wo"), d, d));
        }
        t.push((format!("{branch}.head.w5"), d_h, d));
        t.push((format!("{branch}.head.w6"), 1, d_h));
        t.push((format!("{branch}.head.se.w"), 2, d));
        t.push((format!("{branch}.head.se.b"), 2, 1));
        t.push((format!("{branch}.head.cw.w"), 2, d));
        t.push((format!("{branch}.head.cw.b"), 2, 1));
    }
    t
}

fn init_param(name: &str, rows: usize, cols: usize, seed: u64) -> Matrix {
    if name.ends_with(".b")
        || name.ends_with(".beta")
        || name.ends_with("b3")
        || name.ends_with("b4")
        || name.ends_with("se.b")
        || name.ends_with("cw.b")
    {
        return Matrix::zeros(rows, cols);
    }
    if name.ends_with(".gamma") {
        return Matrix::from_fn(rows, cols, |_, _| 1.0);
    }
    let mut rng = rng::stream(seed, &[LABEL_INIT, rng::fnv1a(name)]);
    if name == "encoder.embedding" {
        return Matrix::from_fn(rows, cols, |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            z
        });
    }
    let bound = 1.0 / (cols as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}

impl Model {
    pub fn init(dims: ModelSection, vocab: Vec<String>, seed: u64) -> Result<Model, Error> {
        if dims.d_v != dims.d_l || dims.d_l != dims.d_m {
            return Err(Error::config("model.d_v", "d_v, d_l, d_m must be equal"));
        }
        if dims.d_l % 2 != 0 || dims.d_m % dims.heads != 0 || dims.kernel % 2 == 0 {
            return Err(Error::config("model", "invalid dimension combination"));
        }
        let mut params = BTreeMap::new();
        for (name, rows, cols) in shape_table(&dims, vocab.len()) {
            params.insert(name.clone(), init_param(&name, rows, cols, seed));
        }
        let mut bn = BTreeMap::new();
        for branch in ["single", "multi"] {
            for b in 0..dims.blocks {
                bn.insert(format!("{branch}.block{b}.bn1"), BnStats::fresh(dims.d_m));
                bn.insert(format!("{branch}.block{b}.bn2"), BnStats::fresh(dims.d_m));
            }
        }
        let vocab_index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Model {
            dims,
            vocab,
            params,
            bn,
            vocab_index,
        })
    }

    pub fn from_parts(
        dims: ModelSection,
        vocab: Vec<String>,
        params: BTreeMap<String, Matrix>,
        bn: BTreeMap<String, BnStats>,
    ) -> Model {
        let vocab_index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Model {
            dims,
            vocab,
            params,
            bn,
            vocab_index,
        }
    }

    /// Overwrite embedding rows for words found in a pretrained vector table.
    pub fn load_word_vectors(
        &mut self,
        vectors: &HashMap<String, Vec<f64>>,
    ) -> Result<usize, Error> {
        let emb = self.params.get_mut("encoder.embedding").expect("embedding");
        let mut loaded = 0;
        for (word, &row) in &self.vocab_index {
            if let Some(v) = vectors.get(word) {
                if v.len() != emb.cols() {
                    return Err(Error::Shape {
                        what: format!("word vector `{word}`"),
                        expected: format!("{} values (model d_w)", emb.cols()),
                        got: format!("{} values", v.len()),
                    });
                }
                for (c, &val) in v.iter().enumerate() {
                    emb.set(row, c, val);
                }
                loaded += 1;
            }
        }
        Ok(loaded)
    }

    pub fn token_ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.vocab_index.get(t).copied().unwrap_or(0))
            .collect()
    }

    /// Insert every parameter as a tape leaf and assemble the typed views.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let mut ids = BTreeMap::new();
        for (name, m) in &self.params {
            ids.insert(name.clone(), tape.leaf(m.clone()));
        }
        let get = |n: &str| *ids.get(n).unwrap_or_else(|| panic!("missing param {n}"));
        let dir = |layer: usize, d: &str| LstmDirNodes {
            w_x: get(&format!("encoder.rnn{layer}.{d}.w_x")),
            w_h: get(&format!("encoder.rnn{layer}.{d}.w_h")),
            b: get(&format!("encoder.rnn{layer}.{d}.b")),
        };
        let enc = EncoderNodes {
            word_embedding: get("encoder.embedding"),
            rnn: vec![
                BiRnnLayerNodes {
                    fw: dir(0, "fw"),
                    bw: dir(0, "bw"),
                },
                BiRnnLayerNodes {
                    fw: dir(1, "fw"),
                    bw: dir(1, "bw"),
                },
            ],
            w1: get("encoder.w1"),
            w2: get("encoder.w2"),
            w3: get("encoder.w3"),
            b3: get("encoder.b3"),
            w4: get("encoder.w4"),
            b4: get("encoder.b4"),
        };
        let branch = |name: &str| BranchNodes {
            blocks: (0..self.dims.blocks)
                .map(|b| {
                    let p = format!("{name}.block{b}");
                    BlockNodes {
                        conv1: get(&format!("{p}.conv1")),
                        bn1_gamma: get(&format!("{p}.bn1.gamma")),
                        bn1_beta: get(&format!("{p}.bn1.beta")),
                        conv2: get(&format!("{p}.conv2")),
                        bn2_gamma: get(&format!("{p}.bn2.gamma")),
                        bn2_beta: get(&format!("{p}.bn2.beta")),
                        wq: get(&format!("{p}.attn.wq")),
                        wk: get(&format!("{p}.attn.wk")),
                        wv: get(&format!("{p}.attn.wv")),
                        wo: get(&format!("{p}.attn.wo")),
                    }
                })
                .collect(),
            head: HeadNodes {
                w5: get(&format!("{name}.head.w5")),
                w6: get(&format!("{name}.head.w6")),
                se_w: get(&format!("{name}.head.se.w")),
                se_b: get(&format!("{name}.head.se.b")),
                cw_w: get(&format!("{name}.head.cw.w")),
                cw_b: get(&format!("{name}.head.cw.b")),
            },
        };
        BoundModel {
            single: branch("single"),
            multi: branch("multi"),
            enc,
            ids,
        }
    }

    /// Encode one sample up to the pooled query features. The deterministic
    /// query embedding (`W3` path) is included; variants are drawn separately.
    pub fn encode_sample(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        sample: &GroundingSample,
        pos_mode: PosMode,
    ) -> EncodedSample {
        let resampled = uniform_resample(&sample.clip_features, self.dims.t_m);
        let video_in = tape.leaf(resampled);
        let f_v = encoder::encode_video(tape, video_in, bound.enc.w1, bound.enc.w2);
        let ids = self.token_ids(&sample.query.tokens);
        let word_features = encoder::encode_words(tape, &bound.enc, &ids, self.dims.d_l);
        let all: Vec<usize> = (0..ids.len()).collect();
        let (rel, modi): (&[usize], &[usize]) = match pos_mode {
            PosMode::None => (&all, &all),
            _ => (
                &sample.query.relation_indices,
                &sample.query.modified_indices,
            ),
        };
        let (f_r, f_m, query_det) =
            encoder::pool_and_fuse(tape, word_features, rel, modi, bound.enc.w3, bound.enc.b3);
        EncodedSample {
            f_v,
            f_r,
            f_m,
            query_det,
        }
    }

    /// Deterministic path through the single-output branch.
    pub fn single_output(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        enc: &EncodedSample,
        flags: &AblationSection,
        bn: &mut BnPhase<'_>,
    ) -> BranchOutputNodes {
        let fused = encoder::fuse(tape, enc.f_v, enc.query_det, self.dims.t_m, flags.fusion_norm);
        crate::regressor::forward_branch(
            tape,
            fused,
            &bound.single,
            "single",
            self.dims.heads,
            self.dims.kernel,
            bn,
        )
    }

    /// One sampled variant. Routed through the multi-output branch, or the
    /// single branch when the model is built without one.
    pub fn variant_output(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        enc: &EncodedSample,
        flags: &AblationSection,
        sigma: f64,
        noise: &mut crate::rng::NoiseSource,
        bn: &mut BnPhase<'_>,
    ) -> BranchOutputNodes {
        let emb = encoder::sample_variant_mode(
            tape,
            flags.pos_mode,
            enc.f_r,
            enc.f_m,
            bound.enc.w4,
            bound.enc.b4,
            sigma,
            noise,
        );
        let fused = encoder::fuse(tape, enc.f_v, emb, self.dims.t_m, flags.fusion_norm);
        let (branch, name) = if flags.single_branch_only.is_on() {
            (&bound.single, "single")
        } else {
            (&bound.multi, "multi")
        };
        crate::regressor::forward_branch(
            tape,
            fused,
            branch,
            name,
            self.dims.heads,
            self.dims.kernel,
            bn,
        )
    }

    /// Fold captured batch statistics into the running statistics, in order.
    pub fn apply_bn_capture(&mut self, capture: &[(String, Vec<f64>, Vec<f64>)]) {
        for (name, mean, var) in capture {
            self.bn
                .get_mut(name)
                .unwrap_or_else(|| panic!("missing bn stats {name}"))
                .update(mean, var);
        }
    }
}

pub struct BoundModel {
    pub ids: BTreeMap<String, NodeId>,
    pub enc: EncoderNodes,
    pub single: BranchNodes,
    pub multi: BranchNodes,
}

pub struct EncodedSample {
    pub f_v: NodeId,
    pub f_r: NodeId,
    pub f_m: NodeId,
    /// `W3[f_r; f_m] + b3`.
    pub query_det: NodeId,
}
