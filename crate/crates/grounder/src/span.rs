//! Normalized temporal intervals and the arithmetic shared by every stage:
//! IoU, center-width conversion, ground-truth clip masks, and fixed-length
//! clip resampling.

use crate::error::Error;
use crate::tensor::Matrix;
use serde::{Deserialize, Serialize};

/// A start-end interval in normalized video time, `0 <= start <= end <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct TemporalSpan {
    start: f64,
    end: f64,
}

impl TemporalSpan {
    pub fn new(start: f64, end: f64) -> Result<Self, Error> {
        if !(start.is_finite() && end.is_finite())
            || start < 0.0
            || end > 1.0
            || start > end
        {
            return Err(Error::InvalidSpan { start, end });
        }
        Ok(TemporalSpan { start, end })
    }

    /// Clamp both coordinates into `[0, 1]` and swap them when inverted.
    /// This is the sanitization applied to raw model outputs.
    pub fn sanitized(start: f64, end: f64) -> Self {
        let a = start.clamp(0.0, 1.0);
        let b = end.clamp(0.0, 1.0);
        if a <= b {
            TemporalSpan { start: a, end: b }
        } else {
            TemporalSpan { start: b, end: a }
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn width(&self) -> f64 {
        self.end - self.start
    }

    pub fn to_center_width(&self) -> CenterWidth {
        CenterWidth {
            center: (self.start + self.end) / 2.0,
            width: self.end - self.start,
        }
    }

    /// Squared Euclidean distance in (start, end) space.
    pub fn dist2(&self, other: &TemporalSpan) -> f64 {
        let ds = self.start - other.start;
        let de = self.end - other.end;
        ds * ds + de * de
    }
}

impl TryFrom<[f64; 2]> for TemporalSpan {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self, Error> {
        TemporalSpan::new(v[0], v[1])
    }
}

impl From<TemporalSpan> for [f64; 2] {
    fn from(s: TemporalSpan) -> [f64; 2] {
        [s.start, s.end]
    }
}

/// The (center, width) parameterization of a span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterWidth {
    pub center: f64,
    pub width: f64,
}

impl CenterWidth {
    pub fn to_span(&self) -> TemporalSpan {
        TemporalSpan {
            start: self.center - self.width / 2.0,
            end: self.center + self.width / 2.0,
        }
    }
}

/// The annotations attached to one query; always at least one span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TemporalSpan>", into = "Vec<TemporalSpan>")]
pub struct AnnotationSet {
    spans: Vec<TemporalSpan>,
}

impl AnnotationSet {
    pub fn new(spans: Vec<TemporalSpan>) -> Result<Self, Error> {
        if spans.is_empty() {
            return Err(Error::Invalid("annotation set must be non-empty".into()));
        }
        Ok(AnnotationSet { spans })
    }

    pub fn spans(&self) -> &[TemporalSpan] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, i: usize) -> TemporalSpan {
        self.spans[i]
    }
}

impl TryFrom<Vec<TemporalSpan>> for AnnotationSet {
    type Error = Error;
    fn try_from(v: Vec<TemporalSpan>) -> Result<Self, Error> {
        AnnotationSet::new(v)
    }
}

impl From<AnnotationSet> for Vec<TemporalSpan> {
    fn from(a: AnnotationSet) -> Vec<TemporalSpan> {
        a.spans
    }
}

/// Intersection over union of two intervals, with 0/0 -> 0.
pub fn temporal_iou(a: &TemporalSpan, b: &TemporalSpan) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.width() + b.width() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Binary membership of each of `t_m` clips in the ground-truth interval.
///
/// Clip `i` covers `[i/t_m, (i+1)/t_m)`; membership is decided by its center
/// `(i + 0.5)/t_m`. When the span is narrower than one clip and no center
/// falls inside, the clip whose center is nearest the span midpoint is forced
/// on, so the mask is never all-zero.
pub fn inside_mask(gt: &TemporalSpan, t_m: usize) -> Vec<bool> {
    assert!(t_m >= 1);
    let mut mask: Vec<bool> = (0..t_m)
        .map(|i| {
            let center = (i as f64 + 0.5) / t_m as f64;
            center >= gt.start && center <= gt.end
        })
        .collect();
    if !mask.iter().any(|&m| m) {
        let mid = (gt.start + gt.end) / 2.0;
        let nearest = (0..t_m)
            .min_by(|&a, &b| {
                let da = ((a as f64 + 0.5) / t_m as f64 - mid).abs();
                let db = ((b as f64 + 0.5) / t_m as f64 - mid).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        mask[nearest] = true;
    }
    mask
}

/// Resample a `[d_v x T]` clip-feature matrix to exactly `t_m` columns.
///
/// With `T >= t_m` clips are picked at `round(j*(T-1)/(t_m-1))`; with fewer
/// clips the columns are copied in order and the tail is zero-padded.
pub fn uniform_resample(features: &Matrix, t_m: usize) -> Matrix {
    assert!(t_m >= 1);
    let t = features.cols();
    assert!(t >= 1);
    let d = features.rows();
    let mut out = Matrix::zeros(d, t_m);
    if t >= t_m {
        for j in 0..t_m {
            let src = if t_m == 1 {
                0
            } else {
                ((j as f64) * (t as f64 - 1.0) / (t_m as f64 - 1.0)).round() as usize
            };
            for r in 0..d {
                out.set(r, j, features.get(r, src));
            }
        }
    } else {
        for j in 0..t {
            for r in 0..d {
                out.set(r, j, features.get(r, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn span(s: f64, e: f64) -> TemporalSpan {
        TemporalSpan::new(s, e).unwrap()
    }

    #[test]
    fn center_width_examples() {
        let cw = span(0.2, 0.6).to_center_width();
        assert!((cw.center - 0.4).abs() < 1e-15);
        assert!((cw.width - 0.4).abs() < 1e-15);
        let cw = span(0.0, 0.0).to_center_width();
        assert_eq!((cw.center, cw.width), (0.0, 0.0));
        let cw = span(0.0, 1.0).to_center_width();
        assert_eq!((cw.center, cw.width), (0.5, 1.0));
    }

    #[test]
    fn center_width_roundtrip_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let a: f64 = rng.gen_range(0.0..1.0);
            let b: f64 = rng.gen_range(0.0..1.0);
            let s = TemporalSpan::sanitized(a, b);
            let back = s.to_center_width().to_span();
            assert!((back.start() - s.start()).abs() < 1e-12);
            assert!((back.end() - s.end()).abs() < 1e-12);
        }
    }

    #[test]
    fn iou_examples() {
        assert_eq!(temporal_iou(&span(0.2, 0.6), &span(0.2, 0.6)), 1.0);
        assert_eq!(temporal_iou(&span(0.0, 0.3), &span(0.5, 0.9)), 0.0);
        let v = temporal_iou(&span(0.2, 0.6), &span(0.4, 0.8));
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_zero_over_zero_is_zero() {
        assert_eq!(temporal_iou(&span(0.3, 0.3), &span(0.7, 0.7)), 0.0);
        assert_eq!(temporal_iou(&span(0.3, 0.3), &span(0.3, 0.3)), 0.0);
    }

    #[test]
    fn iou_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let a = TemporalSpan::sanitized(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let b = TemporalSpan::sanitized(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let ab = temporal_iou(&a, &b);
            let ba = temporal_iou(&b, &a);
            assert_eq!(ab, ba);
            assert!((0.0..=1.0).contains(&ab));
        }
        // identity holds for non-degenerate spans
        let a = span(0.25, 0.5);
        assert_eq!(temporal_iou(&a, &a), 1.0);
    }

    #[test]
    fn inside_mask_examples() {
        assert_eq!(
            inside_mask(&span(0.0, 1.0), 4),
            vec![true, true, true, true]
        );
        assert_eq!(
            inside_mask(&span(0.5, 1.0), 4),
            vec![false, false, true, true]
        );
        // narrow-span fallback: centers are 0.125/0.375/0.625/0.875, none in
        // [0.26, 0.27]; midpoint 0.265 is nearest to 0.375
        assert_eq!(
            inside_mask(&span(0.26, 0.27), 4),
            vec![false, true, false, false]
        );
    }

    #[test]
    fn inside_mask_never_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let s = TemporalSpan::sanitized(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let t_m = rng.gen_range(1..40);
            assert!(inside_mask(&s, t_m).iter().any(|&m| m));
        }
    }

    #[test]
    fn resample_identity_and_padding() {
        let m = Matrix::from_fn(2, 128, |r, c| (r * 1000 + c) as f64);
        assert_eq!(uniform_resample(&m, 128), m);

        let m = Matrix::from_fn(2, 3, |r, c| (r * 10 + c + 1) as f64);
        let out = uniform_resample(&m, 5);
        assert_eq!(out.cols(), 5);
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(out.get(r, c), m.get(r, c));
            }
            assert_eq!(out.get(r, 3), 0.0);
            assert_eq!(out.get(r, 4), 0.0);
        }
    }

    #[test]
    fn resample_downsampling_index_formula() {
        let m = Matrix::from_fn(1, 5, |_, c| c as f64);
        let out = uniform_resample(&m, 3);
        assert_eq!(out.data(), &[0.0, 2.0, 4.0]);
    }

    #[test]
    fn resample_keeps_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let t = rng.gen_range(2..50);
            let t_m = rng.gen_range(2..=t);
            let m = Matrix::from_fn(1, t, |_, c| c as f64);
            let out = uniform_resample(&m, t_m);
            assert_eq!(out.get(0, 0), 0.0);
            assert_eq!(out.get(0, t_m - 1), (t - 1) as f64);
        }
    }

    #[test]
    fn span_validation_rejects_bad_inputs() {
        assert!(TemporalSpan::new(0.5, 0.4).is_err());
        assert!(TemporalSpan::new(-0.1, 0.4).is_err());
        assert!(TemporalSpan::new(0.1, 1.4).is_err());
        assert!(TemporalSpan::new(f64::NAN, 0.4).is_err());
        // degenerate point spans are accepted
        assert!(TemporalSpan::new(0.4, 0.4).is_ok());
    }

    #[test]
    fn sanitize_swaps_and_clamps() {
        let s = TemporalSpan::sanitized(0.7, 0.3);
        assert_eq!((s.start(), s.end()), (0.3, 0.7));
        let s = TemporalSpan::sanitized(-0.5, 1.5);
        assert_eq!((s.start(), s.end()), (0.0, 1.0));
    }

    #[test]
    fn span_json_shape() {
        let s = span(0.25, 0.75);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[0.25,0.75]");
        let back: TemporalSpan = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<TemporalSpan>("[0.75,0.25]").is_err());
    }
}
