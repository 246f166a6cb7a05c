//! Grounding samples and their on-disk formats.
//!
//! A dataset is a JSON-lines file whose rows reference raw clip-feature blobs
//! (flat little-endian f32 with a JSON sidecar giving the `[T, d_v]` shape;
//! blobs are time-major on disk and channel-major `[d_v x T]` in memory).
//! Annotation files are a leaner JSONL with just spans, used by evaluation.

use crate::error::Error;
use crate::pos::{PosTag, Query, TagLexicon};
use crate::rng::{self, LABEL_SPLIT};
use crate::span::{AnnotationSet, TemporalSpan};
use crate::tensor::Matrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

/// One training/evaluation record.
#[derive(Debug, Clone)]
pub struct GroundingSample {
    pub query_id: String,
    /// Raw clip features, `[d_v x T]`, variable `T`.
    pub clip_features: Matrix,
    pub query: Query,
    pub annotations: AnnotationSet,
    /// Which annotation plays the single-style training label.
    pub primary_annotation_index: usize,
    pub paraphrase_group: Option<u64>,
}

impl GroundingSample {
    pub fn primary_annotation(&self) -> TemporalSpan {
        self.annotations.get(self.primary_annotation_index)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub query_id: String,
    pub tokens: Vec<String>,
    pub spans: Vec<TemporalSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase_group: Option<u64>,
    pub feature_ref: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub query_id: String,
    pub tokens: Vec<String>,
    pub feature_ref: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub query_id: String,
    pub spans: Vec<TemporalSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase_group: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    /// `[T, d_v]`, matching the time-major blob layout.
    shape: [usize; 2],
}

fn sidecar_path(blob: &Path) -> PathBuf {
    blob.with_extension("json")
}

/// Write a `[d_v x T]` feature matrix as a time-major little-endian f32 blob
/// plus its shape sidecar.
pub fn write_feature_blob(blob_path: &Path, features: &Matrix) -> Result<(), Error> {
    let d_v = features.rows();
    let t = features.cols();
    let mut bytes = Vec::with_capacity(4 * d_v * t);
    for col in 0..t {
        for row in 0..d_v {
            bytes.extend_from_slice(&(features.get(row, col) as f32).to_le_bytes());
        }
    }
    if let Some(parent) = blob_path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    std::fs::write(blob_path, bytes).map_err(|e| Error::io(blob_path.display().to_string(), e))?;
    let sidecar = Sidecar { shape: [t, d_v] };
    std::fs::write(
        sidecar_path(blob_path),
        serde_json::to_string(&sidecar).expect("sidecar serializes"),
    )
    .map_err(|e| Error::io(sidecar_path(blob_path).display().to_string(), e))?;
    Ok(())
}

/// Read a feature blob back into channel-major `[d_v x T]`.
pub fn read_feature_blob(blob_path: &Path) -> Result<Matrix, Error> {
    if !blob_path.exists() {
        return Err(Error::MissingBlob(blob_path.display().to_string()));
    }
    let sc_path = sidecar_path(blob_path);
    let sc_text = std::fs::read_to_string(&sc_path)
        .map_err(|_| Error::MissingBlob(sc_path.display().to_string()))?;
    let sidecar: Sidecar = serde_json::from_str(&sc_text)
        .map_err(|e| Error::parse(sc_path.display().to_string(), e.to_string()))?;
    let [t, d_v] = sidecar.shape;
    let bytes =
        std::fs::read(blob_path).map_err(|e| Error::io(blob_path.display().to_string(), e))?;
    if bytes.len() != 4 * t * d_v {
        return Err(Error::Shape {
            what: format!("feature blob {}", blob_path.display()),
            expected: format!("{} f32 values ({} bytes)", t * d_v, 4 * t * d_v),
            got: format!("{} bytes", bytes.len()),
        });
    }
    let mut out = Matrix::zeros(d_v, t);
    for col in 0..t {
        for row in 0..d_v {
            let off = 4 * (col * d_v + row);
            let v = f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]);
            out.set(row, col, v as f64);
        }
    }
    Ok(out)
}

/// Write samples as `<name>.jsonl` next to a `features/` directory of blobs.
pub fn write_dataset(dir: &Path, name: &str, samples: &[GroundingSample]) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let path = dir.join(format!("{name}.jsonl"));
    let file =
        std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    for s in samples {
        let feature_ref = format!("features/{}.bin", s.query_id);
        write_feature_blob(&dir.join(&feature_ref), &s.clip_features)?;
        let rec = DatasetRecord {
            query_id: s.query_id.clone(),
            tokens: s.query.tokens.clone(),
            spans: s.annotations.spans().to_vec(),
            paraphrase_group: s.paraphrase_group,
            feature_ref,
        };
        serde_json::to_writer(&mut w, &rec)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(path)
}

/// Write the evaluation-side annotations file for a sample list.
pub fn write_annotations(path: &Path, samples: &[GroundingSample]) -> Result<(), Error> {
    let file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    for s in samples {
        let rec = AnnotationRecord {
            query_id: s.query_id.clone(),
            spans: s.annotations.spans().to_vec(),
            paraphrase_group: s.paraphrase_group,
        };
        serde_json::to_writer(&mut w, &rec)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, Error> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path.display().to_string(), format!("line {}: {e}", lineno + 1)))?;
        if !seen.insert(rec.query_id.clone()) {
            return Err(Error::DuplicateQueryId(rec.query_id));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Load a dataset JSONL plus its feature blobs. Tags come from the lexicon
/// unless an externally produced tag list (one entry per dataset row) is
/// supplied.
pub fn load_dataset(
    jsonl_path: &Path,
    lexicon: &TagLexicon,
    external_tags: Option<&[Vec<(String, PosTag)>]>,
) -> Result<Vec<GroundingSample>, Error> {
    let dir = jsonl_path.parent().unwrap_or_else(|| Path::new("."));
    let file =
        std::fs::File::open(jsonl_path).map_err(|e| Error::io(jsonl_path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(jsonl_path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| {
            Error::parse(
                jsonl_path.display().to_string(),
                format!("line {}: {e}", lineno + 1),
            )
        })?;
        if !seen.insert(rec.query_id.clone()) {
            return Err(Error::DuplicateQueryId(rec.query_id));
        }
        let features = read_feature_blob(&dir.join(&rec.feature_ref))?;
        let query = match external_tags {
            Some(tags) => {
                let row = tags.get(out.len()).ok_or_else(|| {
                    Error::Invalid(format!(
                        "tag file has fewer rows than dataset (needed row {})",
                        out.len() + 1
                    ))
                })?;
                if row.len() != rec.tokens.len() {
                    return Err(Error::Invalid(format!(
                        "tag row for `{}` has {} tags, query has {} tokens",
                        rec.query_id,
                        row.len(),
                        rec.tokens.len()
                    )));
                }
                Query::from_tagged(rec.tokens.clone(), row.iter().map(|(_, t)| *t).collect())
            }
            None => Query::from_tokens(rec.tokens.clone(), lexicon)?,
        };
        out.push(GroundingSample {
            query_id: rec.query_id,
            clip_features: features,
            query,
            annotations: AnnotationSet::new(rec.spans)?,
            primary_annotation_index: 0,
            paraphrase_group: rec.paraphrase_group,
        });
    }
    Ok(out)
}

/// Join a feature manifest against an annotations file to build samples from
/// externally precomputed clip features.
pub fn ingest_external(
    manifest_path: &Path,
    annotations_path: &Path,
    lexicon: &TagLexicon,
) -> Result<Vec<GroundingSample>, Error> {
    let annotations = read_annotations(annotations_path)?;
    let ann_by_id: std::collections::HashMap<&str, &AnnotationRecord> = annotations
        .iter()
        .map(|r| (r.query_id.as_str(), r))
        .collect();

    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let file = std::fs::File::open(manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| {
            Error::parse(
                manifest_path.display().to_string(),
                format!("line {}: {e}", lineno + 1),
            )
        })?;
        if !seen.insert(rec.query_id.clone()) {
            return Err(Error::DuplicateQueryId(rec.query_id));
        }
        let ann = ann_by_id.get(rec.query_id.as_str()).ok_or_else(|| {
            Error::Invalid(format!("no annotations for query_id `{}`", rec.query_id))
        })?;
        let features = read_feature_blob(&dir.join(&rec.feature_ref))?;
        let query = Query::from_tokens(rec.tokens.clone(), lexicon)?;
        out.push(GroundingSample {
            query_id: rec.query_id,
            clip_features: features,
            query,
            annotations: AnnotationSet::new(ann.spans.clone())?,
            primary_annotation_index: 0,
            paraphrase_group: ann.paraphrase_group,
        });
    }
    Ok(out)
}

/// Deterministic shuffled split. Paraphrase groups move as a unit and never
/// straddle the boundary.
pub fn split(
    samples: Vec<GroundingSample>,
    train_fraction: f64,
    seed: u64,
) -> (Vec<GroundingSample>, Vec<GroundingSample>) {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train fraction must be in (0, 1)"
    );
    let n = samples.len();
    let target = ((n as f64) * train_fraction).round() as usize;

    // group samples: paraphrase groups are single units
    let mut units: Vec<Vec<GroundingSample>> = Vec::new();
    let mut group_slot: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
    for s in samples {
        match s.paraphrase_group {
            Some(g) => {
                if let Some(&slot) = group_slot.get(&g) {
                    units[slot].push(s);
                } else {
                    group_slot.insert(g, units.len());
                    units.push(vec![s]);
                }
            }
            None => units.push(vec![s]),
        }
    }

    let mut rng = rng::stream(seed, &[LABEL_SPLIT]);
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.shuffle(&mut rng);

    let mut train = Vec::new();
    let mut test = Vec::new();
    for idx in order {
        let unit = std::mem::take(&mut units[idx]);
        if train.len() + unit.len() <= target {
            train.extend(unit);
        } else {
            test.extend(unit);
        }
    }
    (train, test)
}
