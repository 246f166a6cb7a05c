//! Synthetic dataset generator manufacturing both kinds of uncertainty:
//! paraphrase query pairs (same event, resampled style words) and
//! multi-annotator labels with jitter plus a second "extended" boundary mode.
//!
//! Each event is a (noun, verb) pair mapped to fixed random signature
//! vectors; clip features are Gaussian noise with the summed signature added
//! on clips inside the true span, so a projection oracle can recover the span
//! and bound what a trained localizer should achieve.

use crate::dataset::GroundingSample;
use crate::error::Error;
use crate::pos::{Query, TagLexicon};
use crate::rng::{self, LABEL_GEN};
use crate::span::{AnnotationSet, TemporalSpan};
use crate::tensor::Matrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const GEN_SIG: u64 = 1;
const GEN_SAMPLE: u64 = 2;
const GEN_EVENTS: u64 = 3;

const EVENT_NOUNS: &[&str] = &[
    "person", "dog", "cat", "door", "window", "cup", "book", "ball", "phone", "chair", "towel",
    "plate", "box", "bag", "broom", "laptop", "mirror", "blanket", "bottle", "guitar",
];

const EVENT_VERBS: &[&str] = &[
    "washing", "opening", "closing", "reading", "throwing", "holding", "cleaning", "lifting",
    "pushing", "pulling", "carrying", "folding", "wiping", "turning", "moving", "placing",
    "removing", "kicking", "catching", "waving",
];

const DETERMINERS: &[&str] = &["a", "the", "this", "that"];
const AUXILIARIES: &[&str] = &["is", "was"];

// style words only: no nouns or verbs, so the relation phrase stays exactly
// the event pair
const MODIFIERS: &[&str] = &[
    "slowly", "quickly", "carefully", "gently", "quietly", "suddenly", "red", "small", "old",
    "white", "their", "his", "her", "near", "inside", "outside", "again", "now", "softly",
    "calmly",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    /// Base samples; paraphrases are emitted on top of these.
    pub n_samples: usize,
    /// Raw clips per video (before resampling to the model's fixed length).
    pub clips: usize,
    pub d_v: usize,
    /// Distinct (noun, verb) events to draw from.
    pub n_events: usize,
    pub signature_scale: f64,
    pub noise_scale: f64,
    /// Annotators per sample (G).
    pub annotators: usize,
    /// Boundary jitter as a fraction of span width.
    pub jitter: f64,
    /// Probability an annotator labels the span extended left by half its
    /// width (the second label mode).
    pub bimodal_prob: f64,
    /// Probability a sample gets a paraphrased twin.
    pub paraphrase_prob: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_samples: 600,
            clips: 48,
            d_v: 32,
            n_events: 12,
            signature_scale: 1.0,
            noise_scale: 0.3,
            annotators: 5,
            jitter: 0.15,
            bimodal_prob: 0.3,
            paraphrase_prob: 0.5,
            seed: 0,
        }
    }
}

pub struct SyntheticDataset {
    pub samples: Vec<GroundingSample>,
    /// Per-token signature vectors for every event noun/verb used.
    pub token_signatures: BTreeMap<String, Vec<f64>>,
    pub events: Vec<(String, String)>,
}

impl SyntheticDataset {
    /// Summed signature vector for the event named by a query's relation
    /// tokens, if both halves are known.
    pub fn event_signature(&self, query: &Query) -> Option<Vec<f64>> {
        let mut sig = vec![0.0; self.token_signatures.values().next()?.len()];
        let mut found = 0;
        for tok in query.relation_tokens() {
            if let Some(s) = self.token_signatures.get(tok) {
                for (a, b) in sig.iter_mut().zip(s) {
                    *a += b;
                }
                found += 1;
            }
        }
        if found == 0 {
            None
        } else {
            Some(sig)
        }
    }
}

pub fn generate(config: &GeneratorConfig) -> Result<SyntheticDataset, Error> {
    let lexicon = TagLexicon::builtin_english();
    let max_events = EVENT_NOUNS.len() * EVENT_VERBS.len();
    if config.n_events == 0 || config.n_events > max_events {
        return Err(Error::VocabTooSmall {
            kind: "event pair".into(),
            needed: config.n_events,
            have: max_events,
        });
    }
    if config.annotators == 0 || config.clips == 0 || config.d_v == 0 || config.n_samples == 0 {
        return Err(Error::Invalid(
            "generator counts must be positive".into(),
        ));
    }

    // distinct (noun, verb) pairs
    let mut pair_rng = rng::stream(config.seed, &[LABEL_GEN, GEN_EVENTS]);
    let mut all_pairs: Vec<(usize, usize)> = (0..EVENT_NOUNS.len())
        .flat_map(|n| (0..EVENT_VERBS.len()).map(move |v| (n, v)))
        .collect();
    all_pairs.shuffle(&mut pair_rng);
    let events: Vec<(String, String)> = all_pairs[..config.n_events]
        .iter()
        .map(|&(n, v)| (EVENT_NOUNS[n].to_string(), EVENT_VERBS[v].to_string()))
        .collect();

    // fixed random signature per event token
    let mut sig_rng = rng::stream(config.seed, &[LABEL_GEN, GEN_SIG]);
    let mut token_signatures: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (noun, verb) in &events {
        for tok in [noun, verb] {
            token_signatures.entry(tok.clone()).or_insert_with(|| {
                (0..config.d_v)
                    .map(|_| {
                        let z: f64 = sig_rng.sample(StandardNormal);
                        z * config.signature_scale
                    })
                    .collect()
            });
        }
    }

    // rank check: summed event signatures must be linearly independent
    let event_sigs: Vec<Vec<f64>> = events
        .iter()
        .map(|(n, v)| {
            let a = &token_signatures[n];
            let b = &token_signatures[v];
            a.iter().zip(b).map(|(x, y)| x + y).collect()
        })
        .collect();
    let rank = matrix_rank(&event_sigs);
    if rank < events.len() {
        return Err(Error::Invalid(format!(
            "event signature matrix has rank {rank} < {} events; increase d_v",
            events.len()
        )));
    }

    let t = config.clips;
    let mut samples = Vec::new();
    let mut next_group: u64 = 0;
    for i in 0..config.n_samples {
        let mut srng = rng::stream(config.seed, &[LABEL_GEN, GEN_SAMPLE, i as u64]);
        let event_idx = srng.gen_range(0..events.len());
        let (noun, verb) = events[event_idx].clone();

        // true span snapped to the clip grid so it is exactly recoverable
        // from the features
        let width: f64 = srng.gen_range(0.15..0.35);
        let lo = (width / 2.0).min(1.0 - width);
        let start = srng.gen_range(lo..=(1.0 - width));
        let snap = |x: f64| (x * t as f64).round() / t as f64;
        let s = snap(start);
        let mut e = snap(start + width);
        if e - s < 1.0 / t as f64 {
            e = (s + 1.0 / t as f64).min(1.0);
        }
        let true_span = TemporalSpan::sanitized(s, e);

        // clip features: noise + event signature on inside clips
        let sig: Vec<f64> = {
            let a = &token_signatures[&noun];
            let b = &token_signatures[&verb];
            a.iter().zip(b).map(|(x, y)| x + y).collect()
        };
        let mut features = Matrix::zeros(config.d_v, t);
        for clip in 0..t {
            let center = (clip as f64 + 0.5) / t as f64;
            let inside = center >= true_span.start() && center <= true_span.end();
            for row in 0..config.d_v {
                let z: f64 = srng.sample(StandardNormal);
                let mut v = z * config.noise_scale;
                if inside {
                    v += sig[row];
                }
                // features live on disk as f32; quantize now so write/ingest
                // round-trips are exact
                features.set(row, clip, (v as f32) as f64);
            }
        }

        // annotations: jittered true span, with an extended-left second mode
        let w = true_span.width();
        let mut spans = Vec::with_capacity(config.annotators);
        for _ in 0..config.annotators {
            let extended = srng.gen_range(0.0..1.0) < config.bimodal_prob;
            let (bs, be) = if extended {
                ((true_span.start() - 0.5 * w).max(0.0), true_span.end())
            } else {
                (true_span.start(), true_span.end())
            };
            let bw = be - bs;
            let js = srng.gen_range(-config.jitter..=config.jitter) * bw;
            let je = srng.gen_range(-config.jitter..=config.jitter) * bw;
            spans.push(TemporalSpan::sanitized(bs + js, be + je));
        }

        let make_query = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<String> {
            let det = DETERMINERS[rng.gen_range(0..DETERMINERS.len())];
            let aux = AUXILIARIES[rng.gen_range(0..AUXILIARIES.len())];
            let n_mods = rng.gen_range(1..=3);
            let mut tokens = vec![det.to_string(), noun.clone(), aux.to_string(), verb.clone()];
            for _ in 0..n_mods {
                tokens.push(MODIFIERS[rng.gen_range(0..MODIFIERS.len())].to_string());
            }
            tokens
        };

        let paraphrased = srng.gen_range(0.0..1.0) < config.paraphrase_prob;
        let group = if paraphrased {
            next_group += 1;
            Some(next_group)
        } else {
            None
        };

        let tokens = make_query(&mut srng);
        samples.push(GroundingSample {
            query_id: format!("q{i:05}"),
            clip_features: features.clone(),
            query: Query::from_tokens(tokens, &lexicon)?,
            annotations: AnnotationSet::new(spans.clone())?,
            primary_annotation_index: 0,
            paraphrase_group: group,
        });

        if paraphrased {
            let tokens = make_query(&mut srng);
            samples.push(GroundingSample {
                query_id: format!("q{i:05}p"),
                clip_features: features,
                query: Query::from_tokens(tokens, &lexicon)?,
                annotations: AnnotationSet::new(spans)?,
                primary_annotation_index: 0,
                paraphrase_group: group,
            });
        }
    }

    Ok(SyntheticDataset {
        samples,
        token_signatures,
        events,
    })
}

/// Localize by thresholding the per-clip projection onto the event
/// signature. Independent of the learned model; used as a recoverability
/// baseline.
pub fn signature_oracle_span(features: &Matrix, signature: &[f64]) -> TemporalSpan {
    let t = features.cols();
    let norm2: f64 = signature.iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return TemporalSpan::sanitized(0.0, 1.0);
    }
    let proj: Vec<f64> = (0..t)
        .map(|c| {
            (0..features.rows())
                .map(|r| features.get(r, c) * signature[r])
                .sum::<f64>()
                / norm2
        })
        .collect();
    let inside: Vec<usize> = proj
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= 0.5)
        .map(|(i, _)| i)
        .collect();
    let (first, last) = if inside.is_empty() {
        let best = proj
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        (best, best)
    } else {
        (inside[0], *inside.last().unwrap())
    };
    TemporalSpan::sanitized(first as f64 / t as f64, (last + 1) as f64 / t as f64)
}

/// Rank by Gaussian elimination with partial pivoting.
fn matrix_rank(rows: &[Vec<f64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let nrows = m.len();
    let ncols = m[0].len();
    let scale: f64 = m
        .iter()
        .flat_map(|r| r.iter().map(|v| v.abs()))
        .fold(0.0, f64::max)
        .max(1.0);
    let tol = 1e-9 * scale;
    let mut rank = 0;
    let mut row = 0;
    for col in 0..ncols {
        if row >= nrows {
            break;
        }
        let (pivot, pval) = (row..nrows)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if pval <= tol {
            continue;
        }
        m.swap(row, pivot);
        for r in (row + 1)..nrows {
            let f = m[r][col] / m[row][col];
            for c in col..ncols {
                m[r][c] -= f * m[row][c];
            }
        }
        row += 1;
        rank += 1;
    }
    rank
}
