//! Multi-scale detection-head grid geometry, anchor-free box decoding and
//! non-maximum suppression.
//!
//! The default layout is the five-head design: P3/P4/P5 at strides 8/16/32
//! plus the auxiliary small-target heads P2 (160x160, stride 4) and
//! P1 (320x320, stride 2) on a 640 input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::{iou, BBox, GeomError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeadError {
    #[error("unknown head `{0}`")]
    UnknownHead(String),
    #[error("head `{name}`: grid {grid} x stride {stride} != input size {input}")]
    GridStrideMismatch {
        name: String,
        grid: usize,
        stride: u32,
        input: u32,
    },
    #[error("strides must be strictly increasing (head `{0}`)")]
    StridesNotIncreasing(String),
    #[error("layout must contain at least one head")]
    EmptyLayout,
    #[error("cell ({row}, {col}) outside head `{name}` grid {grid_h} x {grid_w}")]
    CellOutOfRange {
        name: String,
        row: usize,
        col: usize,
        grid_h: usize,
        grid_w: usize,
    },
    #[error("class scores must be non-empty and within [0, 1]")]
    BadClassScores,
    #[error("size factors must be positive, got ({0}, {1})")]
    BadSizeFactor(f64, f64),
    #[error("iou threshold must lie in (0, 1), got {0}")]
    BadIouThreshold(f64),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Head {
    pub name: String,
    pub grid_h: usize,
    pub grid_w: usize,
    pub stride: u32,
}

/// Validated set of detection heads over a square input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayoutConfig")]
pub struct HeadLayout {
    pub input_size: u32,
    pub heads: Vec<Head>,
}

/// Raw deserialization target; `HeadLayout` construction re-validates.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutConfig {
    #[serde(default = "default_input_size")]
    input_size: u32,
    #[serde(default)]
    heads: Vec<Head>,
}

fn default_input_size() -> u32 {
    640
}

impl TryFrom<LayoutConfig> for HeadLayout {
    type Error = HeadError;
    fn try_from(cfg: LayoutConfig) -> Result<Self, HeadError> {
        if cfg.heads.is_empty() {
            return Ok(HeadLayout::five_head(cfg.input_size));
        }
        HeadLayout::new(cfg.input_size, cfg.heads)
    }
}

impl Default for HeadLayout {
    fn default() -> Self {
        Self::five_head(default_input_size())
    }
}

impl HeadLayout {
    pub fn new(input_size: u32, heads: Vec<Head>) -> Result<Self, HeadError> {
        if heads.is_empty() {
            return Err(HeadError::EmptyLayout);
        }
        let mut prev_stride = 0u32;
        for head in &heads {
            for grid in [head.grid_h, head.grid_w] {
                if grid as u64 * head.stride as u64 != input_size as u64 {
                    return Err(HeadError::GridStrideMismatch {
                        name: head.name.clone(),
                        grid,
                        stride: head.stride,
                        input: input_size,
                    });
                }
            }
            if head.stride <= prev_stride {
                return Err(HeadError::StridesNotIncreasing(head.name.clone()));
            }
            prev_stride = head.stride;
        }
        Ok(Self { input_size, heads })
    }

    /// The five-scale layout with auxiliary P1/P2 heads for a square input.
    /// `input_size` must be divisible by 32.
    pub fn five_head(input_size: u32) -> Self {
        let heads = [("P1", 2u32), ("P2", 4), ("P3", 8), ("P4", 16), ("P5", 32)]
            .into_iter()
            .map(|(name, stride)| Head {
                name: name.to_string(),
                grid_h: (input_size / stride) as usize,
                grid_w: (input_size / stride) as usize,
                stride,
            })
            .collect();
        Self::new(input_size, heads).expect("five-head layout is always consistent")
    }

    pub fn head(&self, name: &str) -> Result<&Head, HeadError> {
        self.heads
            .iter()
            .find(|h| h.name == name)
            .ok_or_else(|| HeadError::UnknownHead(name.to_string()))
    }
}

/// Cell centers of one head in input-pixel units, row-major:
/// `((col + 0.5) stride, (row + 0.5) stride)`.
pub fn grid_centers(layout: &HeadLayout, head_name: &str) -> Result<Vec<(f64, f64)>, HeadError> {
    let head = layout.head(head_name)?;
    let stride = head.stride as f64;
    let mut centers = Vec::with_capacity(head.grid_h * head.grid_w);
    for row in 0..head.grid_h {
        for col in 0..head.grid_w {
            centers.push(((col as f64 + 0.5) * stride, (row as f64 + 0.5) * stride));
        }
    }
    Ok(centers)
}

/// One cell's raw network output before decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub head: String,
    /// `(row, col)` within the head grid.
    pub cell: (usize, usize),
    /// Cell-relative center offsets, in cell units.
    pub offsets: (f64, f64),
    /// Positive width/height scale factors, in stride units.
    pub size: (f64, f64),
    pub class_scores: Vec<f64>,
}

/// A decoded (or externally supplied) detection in input-pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub class_id: u32,
    pub confidence: f64,
}

/// Anchor-free decode: center = cell center + offset * stride, size =
/// factor * stride, clipped to the frame with `w, h` floored at 1 pixel.
/// The class is the argmax score (lowest index on ties).
pub fn decode(pred: &RawPrediction, layout: &HeadLayout) -> Result<ScoredBox, HeadError> {
    let head = layout.head(&pred.head)?;
    let (row, col) = pred.cell;
    if row >= head.grid_h || col >= head.grid_w {
        return Err(HeadError::CellOutOfRange {
            name: head.name.clone(),
            row,
            col,
            grid_h: head.grid_h,
            grid_w: head.grid_w,
        });
    }
    if pred.size.0 <= 0.0 || pred.size.1 <= 0.0 {
        return Err(HeadError::BadSizeFactor(pred.size.0, pred.size.1));
    }
    if pred.class_scores.is_empty()
        || pred
            .class_scores
            .iter()
            .any(|s| !(0.0..=1.0).contains(s))
    {
        return Err(HeadError::BadClassScores);
    }

    let stride = head.stride as f64;
    let frame = layout.input_size as f64;
    let cx = (col as f64 + 0.5) * stride + pred.offsets.0 * stride;
    let cy = (row as f64 + 0.5) * stride + pred.offsets.1 * stride;
    let w = pred.size.0 * stride;
    let h = pred.size.1 * stride;

    // clip corners to the frame, then restore validity
    let x1 = (cx - w / 2.0).clamp(0.0, frame);
    let x2 = (cx + w / 2.0).clamp(0.0, frame);
    let y1 = (cy - h / 2.0).clamp(0.0, frame);
    let y2 = (cy + h / 2.0).clamp(0.0, frame);
    let w = (x2 - x1).max(1.0);
    let h = (y2 - y1).max(1.0);
    let half_w = w / 2.0;
    let half_h = h / 2.0;
    let cx = ((x1 + x2) / 2.0).clamp(half_w.min(frame - half_w), (frame - half_w).max(half_w));
    let cy = ((y1 + y2) / 2.0).clamp(half_h.min(frame - half_h), (frame - half_h).max(half_h));

    let (class_id, confidence) = pred
        .class_scores
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |(bi, bs), (i, &s)| {
            if s > bs {
                (i, s)
            } else {
                (bi, bs)
            }
        });

    Ok(ScoredBox {
        bbox: BBox::new(cx, cy, w, h)?,
        class_id: class_id as u32,
        confidence,
    })
}

/// Greedy NMS: walk detections by descending confidence (stable on ties)
/// and keep one iff its IoU with every already-kept detection of the same
/// class (any class when `class_agnostic`) is below the threshold.
pub fn nms(
    dets: &[ScoredBox],
    iou_threshold: f64,
    class_agnostic: bool,
) -> Result<Vec<ScoredBox>, HeadError> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(HeadError::BadIouThreshold(iou_threshold));
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .expect("confidences are finite")
    });
    let mut kept: Vec<ScoredBox> = Vec::new();
    for idx in order {
        let cand = &dets[idx];
        let suppressed = kept.iter().any(|k| {
            (class_agnostic || k.class_id == cand.class_id)
                && iou(&k.bbox, &cand.bbox) >= iou_threshold
        });
        if !suppressed {
            kept.push(cand.clone());
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sbox(cx: f64, cy: f64, w: f64, h: f64, class_id: u32, confidence: f64) -> ScoredBox {
        ScoredBox {
            bbox: BBox::new(cx, cy, w, h).unwrap(),
            class_id,
            confidence,
        }
    }

    #[test]
    fn default_layout_matches_five_scales() {
        let layout = HeadLayout::default();
        assert_eq!(layout.input_size, 640);
        let dims: Vec<_> = layout
            .heads
            .iter()
            .map(|h| (h.name.as_str(), h.grid_h, h.stride))
            .collect();
        assert_eq!(
            dims,
            vec![
                ("P1", 320, 2),
                ("P2", 160, 4),
                ("P3", 80, 8),
                ("P4", 40, 16),
                ("P5", 20, 32)
            ]
        );
    }

    #[test]
    fn layout_validation() {
        let bad = HeadLayout::new(
            640,
            vec![Head {
                name: "P9".into(),
                grid_h: 100,
                grid_w: 100,
                stride: 8,
            }],
        );
        assert!(matches!(bad, Err(HeadError::GridStrideMismatch { .. })));

        let not_increasing = HeadLayout::new(
            640,
            vec![
                Head {
                    name: "A".into(),
                    grid_h: 80,
                    grid_w: 80,
                    stride: 8,
                },
                Head {
                    name: "B".into(),
                    grid_h: 80,
                    grid_w: 80,
                    stride: 8,
                },
            ],
        );
        assert!(matches!(
            not_increasing,
            Err(HeadError::StridesNotIncreasing(_))
        ));
    }

    #[test]
    fn grid_centers_p5() {
        let layout = HeadLayout::default();
        let centers = grid_centers(&layout, "P5").unwrap();
        assert_eq!(centers.len(), 400);
        assert_eq!(centers[0], (16.0, 16.0));
        assert_eq!(centers[1], (48.0, 16.0)); // row-major: col moves first
        let max = centers
            .iter()
            .map(|c| c.0.max(c.1))
            .fold(f64::MIN, f64::max);
        assert_eq!(max, 640.0 - 32.0 / 2.0);
    }

    #[test]
    fn grid_centers_p1() {
        let layout = HeadLayout::default();
        let centers = grid_centers(&layout, "P1").unwrap();
        assert_eq!(centers.len(), 102_400);
        assert_eq!(centers[0], (1.0, 1.0));
        assert!(matches!(
            grid_centers(&layout, "P7"),
            Err(HeadError::UnknownHead(_))
        ));
    }

    #[test]
    fn every_head_centers_inside_frame() {
        let layout = HeadLayout::default();
        for head in &layout.heads {
            let centers = grid_centers(&layout, &head.name).unwrap();
            assert_eq!(centers.len(), head.grid_h * head.grid_w);
            let expect_max = 640.0 - head.stride as f64 / 2.0;
            for (x, y) in &centers {
                assert!(*x > 0.0 && *y > 0.0 && *x <= expect_max && *y <= expect_max);
            }
        }
    }

    #[test]
    fn decode_identity() {
        let layout = HeadLayout::default();
        let pred = RawPrediction {
            head: "P5".into(),
            cell: (0, 0),
            offsets: (0.0, 0.0),
            size: (1.0, 1.0),
            class_scores: vec![0.2, 0.9, 0.3],
        };
        let det = decode(&pred, &layout).unwrap();
        assert_eq!(det.bbox.cx(), 16.0);
        assert_eq!(det.bbox.cy(), 16.0);
        assert_eq!(det.bbox.w(), 32.0);
        assert_eq!(det.bbox.h(), 32.0);
        assert_eq!(det.class_id, 1);
        assert_eq!(det.confidence, 0.9);
    }

    #[test]
    fn decode_scales_size_linearly() {
        let layout = HeadLayout::default();
        let pred = RawPrediction {
            head: "P5".into(),
            cell: (10, 10),
            offsets: (0.0, 0.0),
            size: (2.0, 2.0),
            class_scores: vec![1.0],
        };
        let det = decode(&pred, &layout).unwrap();
        assert_eq!(det.bbox.w(), 64.0);
        assert_eq!(det.bbox.h(), 64.0);
    }

    #[test]
    fn decode_clips_to_frame() {
        let layout = HeadLayout::default();
        // center pushed well past the right edge: box clipped, stays valid
        let pred = RawPrediction {
            head: "P5".into(),
            cell: (19, 19),
            offsets: (3.0, 0.0),
            size: (4.0, 4.0),
            class_scores: vec![0.8],
        };
        let det = decode(&pred, &layout).unwrap();
        let c = det.bbox.corners();
        assert!(c.x2 <= 640.0 && c.y2 <= 640.0 && c.x1 >= 0.0 && c.y1 >= 0.0);
        assert!(det.bbox.w() >= 1.0 && det.bbox.h() >= 1.0);
        // raw center: (19.5 + 3) * 32 = 720, raw half-width 64 -> clipped to [656, 640] -> floor
        assert_eq!(c.x2, 640.0);
    }

    #[test]
    fn decode_cell_round_trip() {
        let layout = HeadLayout::default();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let head = &layout.heads[rng.gen_range(0..layout.heads.len())];
            let cell = (
                rng.gen_range(1..head.grid_h - 1),
                rng.gen_range(1..head.grid_w - 1),
            );
            let pred = RawPrediction {
                head: head.name.clone(),
                cell,
                offsets: (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
                size: (0.5, 0.5),
                class_scores: vec![0.5],
            };
            let det = decode(&pred, &layout).unwrap();
            let col = (det.bbox.cx() / head.stride as f64) as usize;
            let row = (det.bbox.cy() / head.stride as f64) as usize;
            assert_eq!((row, col), cell);
        }
    }

    #[test]
    fn decode_rejects_invalid_predictions() {
        let layout = HeadLayout::default();
        let base = RawPrediction {
            head: "P5".into(),
            cell: (0, 0),
            offsets: (0.0, 0.0),
            size: (1.0, 1.0),
            class_scores: vec![0.5],
        };
        let mut bad_cell = base.clone();
        bad_cell.cell = (20, 0);
        assert!(matches!(
            decode(&bad_cell, &layout),
            Err(HeadError::CellOutOfRange { .. })
        ));
        let mut bad_size = base.clone();
        bad_size.size = (0.0, 1.0);
        assert!(matches!(
            decode(&bad_size, &layout),
            Err(HeadError::BadSizeFactor(..))
        ));
        let mut bad_scores = base;
        bad_scores.class_scores = vec![1.4];
        assert!(matches!(
            decode(&bad_scores, &layout),
            Err(HeadError::BadClassScores)
        ));
    }

    #[test]
    fn nms_keeps_highest_of_duplicates() {
        let a = sbox(100.0, 100.0, 50.0, 50.0, 0, 0.9);
        let b = sbox(100.0, 100.0, 50.0, 50.0, 0, 0.8);
        let kept = nms(&[b, a.clone()], 0.5, false).unwrap();
        assert_eq!(kept, vec![a]);
    }

    #[test]
    fn nms_keeps_disjoint() {
        let a = sbox(100.0, 100.0, 50.0, 50.0, 0, 0.9);
        let b = sbox(400.0, 400.0, 50.0, 50.0, 0, 0.8);
        let kept = nms(&[a.clone(), b.clone()], 0.5, false).unwrap();
        assert_eq!(kept, vec![a, b]);
    }

    #[test]
    fn nms_class_aware_vs_agnostic() {
        let a = sbox(100.0, 100.0, 50.0, 50.0, 0, 0.9);
        let b = sbox(102.0, 100.0, 50.0, 50.0, 1, 0.8);
        assert_eq!(nms(&[a.clone(), b.clone()], 0.5, false).unwrap().len(), 2);
        assert_eq!(nms(&[a, b], 0.5, true).unwrap().len(), 1);
    }

    #[test]
    fn nms_threshold_validated() {
        assert!(matches!(
            nms(&[], 0.0, false),
            Err(HeadError::BadIouThreshold(_))
        ));
        assert!(matches!(
            nms(&[], 1.0, false),
            Err(HeadError::BadIouThreshold(_))
        ));
    }

    /// Independent route: repeatedly scan for the highest-confidence
    /// unsuppressed detection without sorting.
    fn nms_bruteforce(dets: &[ScoredBox], thr: f64, agnostic: bool) -> Vec<ScoredBox> {
        #[derive(PartialEq)]
        enum S {
            Open,
            Kept,
            Gone,
        }
        let mut state: Vec<S> = dets.iter().map(|_| S::Open).collect();
        loop {
            let mut best: Option<usize> = None;
            for (i, s) in state.iter().enumerate() {
                if *s == S::Open
                    && best.is_none_or(|b| dets[i].confidence > dets[b].confidence)
                {
                    best = Some(i);
                }
            }
            let Some(b) = best else { break };
            state[b] = S::Kept;
            for (i, s) in state.iter_mut().enumerate() {
                if *s == S::Open
                    && (agnostic || dets[i].class_id == dets[b].class_id)
                    && iou(&dets[i].bbox, &dets[b].bbox) >= thr
                {
                    *s = S::Gone;
                }
            }
        }
        let mut kept: Vec<(usize, ScoredBox)> = state
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == S::Kept)
            .map(|(i, _)| (i, dets[i].clone()))
            .collect();
        kept.sort_by(|a, b| b.1.confidence.partial_cmp(&a.1.confidence).unwrap());
        kept.into_iter().map(|(_, d)| d).collect()
    }

    fn random_scene(rng: &mut ChaCha8Rng, max_boxes: usize) -> Vec<ScoredBox> {
        let n = rng.gen_range(1..=max_boxes);
        (0..n)
            .map(|_| {
                sbox(
                    rng.gen_range(50.0..590.0),
                    rng.gen_range(50.0..590.0),
                    rng.gen_range(10.0..200.0),
                    rng.gen_range(10.0..200.0),
                    rng.gen_range(0..3),
                    rng.gen_range(0.01..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn nms_matches_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..100 {
            let scene = random_scene(&mut rng, 30);
            for agnostic in [false, true] {
                let fast = nms(&scene, 0.45, agnostic).unwrap();
                let slow = nms_bruteforce(&scene, 0.45, agnostic);
                assert_eq!(fast, slow);
            }
        }
    }

    #[test]
    fn nms_idempotent_and_conflict_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let scene = random_scene(&mut rng, 40);
            let once = nms(&scene, 0.45, false).unwrap();
            let twice = nms(&once, 0.45, false).unwrap();
            assert_eq!(once, twice);
            for (i, a) in once.iter().enumerate() {
                for b in &once[i + 1..] {
                    if a.class_id == b.class_id {
                        assert!(iou(&a.bbox, &b.bbox) < 0.45);
                    }
                }
                assert!(scene.contains(a));
            }
            // confidence-sorted output
            for pair in once.windows(2) {
                assert!(pair[0].confidence >= pair[1].confidence);
            }
        }
    }
}
