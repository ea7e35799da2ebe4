//! Detection evaluation: greedy matching, precision/recall, AP/mAP across
//! IoU thresholds, confidence-sweep curves and the confusion matrix.
//!
//! Matching is COCO-style greedy: detections are walked in descending
//! confidence (ties stable by input order) and each one claims the
//! highest-IoU unmatched truth of its class in its image, provided the IoU
//! reaches the threshold. Per-class count identities (`TP + FN = truths`,
//! `TP + FP = detections`) are asserted on every run.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::bbox::{iou, BBox};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("iou threshold must lie in (0, 1), got {0}")]
    BadIouThreshold(f64),
    #[error("confidence must lie in [0, 1], got {0}")]
    BadConfidence(f64),
    #[error("class id {class_id} outside the class-name table (len {names_len})")]
    ClassOutOfBounds { class_id: u32, names_len: usize },
    #[error("no ground-truth entries for class {0}; AP undefined")]
    NoTruthForClass(u32),
    #[error("ground truth contains no classes with entries")]
    NoTruths,
    #[error("threshold list is empty")]
    EmptyThresholds,
    #[error("n-point interpolation needs at least 2 points, got {0}")]
    BadInterpPoints(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GroundTruthSet {
    pub entries: Vec<GroundTruth>,
    pub class_names: Option<Vec<String>>,
}

impl GroundTruthSet {
    pub fn new(
        entries: Vec<GroundTruth>,
        class_names: Option<Vec<String>>,
    ) -> Result<Self, MetricsError> {
        if let Some(names) = &class_names {
            for e in &entries {
                if e.class_id as usize >= names.len() {
                    return Err(MetricsError::ClassOutOfBounds {
                        class_id: e.class_id,
                        names_len: names.len(),
                    });
                }
            }
        }
        Ok(Self {
            entries,
            class_names,
        })
    }

    /// Sorted class ids that have at least one truth.
    pub fn classes(&self) -> Vec<u32> {
        self.entries
            .iter()
            .map(|e| e.class_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn truths_of_class(&self, class_id: u32) -> usize {
        self.entries
            .iter()
            .filter(|e| e.class_id == class_id)
            .count()
    }
}

#[derive(Debug, Clone, Default)]
pub struct DetectionSet {
    pub entries: Vec<Detection>,
}

impl DetectionSet {
    pub fn new(entries: Vec<Detection>) -> Result<Self, MetricsError> {
        for e in &entries {
            if !(0.0..=1.0).contains(&e.confidence) || !e.confidence.is_finite() {
                return Err(MetricsError::BadConfidence(e.confidence));
            }
        }
        Ok(Self { entries })
    }
}

/// Per-detection TP/FP flags (input order) plus per-truth matched flags.
#[derive(Debug, Clone)]
pub struct MatchResult {
    pub det_is_tp: Vec<bool>,
    pub truth_matched: Vec<bool>,
}

fn check_threshold(t: f64) -> Result<(), MetricsError> {
    if !(t > 0.0 && t < 1.0) {
        return Err(MetricsError::BadIouThreshold(t));
    }
    Ok(())
}

/// Indices of `dets` in descending-confidence order, stable on ties.
fn rank_order(dets: &[&Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .expect("confidences are finite")
    });
    order
}

/// Greedy single-use matching over pre-filtered slices. When
/// `class_sensitive` a detection only sees truths of its own class.
fn greedy_match(
    truths: &[&GroundTruth],
    dets: &[&Detection],
    iou_threshold: f64,
    class_sensitive: bool,
) -> (Vec<bool>, Vec<Option<usize>>) {
    let mut truth_taken = vec![false; truths.len()];
    let mut det_match: Vec<Option<usize>> = vec![None; dets.len()];
    // truths grouped by image for the candidate scan
    let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (t_idx, t) in truths.iter().enumerate() {
        by_image.entry(t.image_id.as_str()).or_default().push(t_idx);
    }
    for d_idx in rank_order(dets) {
        let det = dets[d_idx];
        let Some(candidates) = by_image.get(det.image_id.as_str()) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for &t_idx in candidates {
            if truth_taken[t_idx] {
                continue;
            }
            let truth = truths[t_idx];
            if class_sensitive && truth.class_id != det.class_id {
                continue;
            }
            let overlap = iou(&truth.bbox, &det.bbox);
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((t_idx, overlap));
            }
        }
        if let Some((t_idx, overlap)) = best {
            if overlap >= iou_threshold {
                truth_taken[t_idx] = true;
                det_match[d_idx] = Some(t_idx);
            }
        }
    }
    (truth_taken, det_match)
}

/// COCO-style greedy matching across the whole sets (class-sensitive).
pub fn match_detections(
    gt: &GroundTruthSet,
    det: &DetectionSet,
    iou_threshold: f64,
) -> Result<MatchResult, MetricsError> {
    check_threshold(iou_threshold)?;
    let truths: Vec<&GroundTruth> = gt.entries.iter().collect();
    let dets: Vec<&Detection> = det.entries.iter().collect();
    let (truth_matched, det_match) = greedy_match(&truths, &dets, iou_threshold, true);
    let det_is_tp: Vec<bool> = det_match.iter().map(|m| m.is_some()).collect();

    let tp = det_is_tp.iter().filter(|&&x| x).count();
    let matched = truth_matched.iter().filter(|&&x| x).count();
    assert_eq!(tp, matched, "every TP claims exactly one truth");

    Ok(MatchResult {
        det_is_tp,
        truth_matched,
    })
}

/// Precision and recall from a match result.
///
/// Empty-denominator conventions: with no detections, precision is 1 when
/// there are also no truths and 0 otherwise; with no truths, recall is 1.
pub fn precision_recall(m: &MatchResult) -> (f64, f64) {
    let tp = m.det_is_tp.iter().filter(|&&x| x).count();
    let n_det = m.det_is_tp.len();
    let n_truth = m.truth_matched.len();
    let precision = if n_det == 0 {
        if n_truth == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / n_det as f64
    };
    let recall = if n_truth == 0 {
        1.0
    } else {
        tp as f64 / n_truth as f64
    };
    (precision, recall)
}

/// AP integration rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    /// Exact area under the monotone precision envelope over all recall
    /// increments.
    AllPoints,
    /// Mean of the envelope precision sampled at `n` evenly spaced recalls
    /// (COCO uses 101).
    NPoint(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Confidence-descending cumulative PR points with the AP summary.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub ap: f64,
}

/// Monotone envelope: `env[i] = max(precision[i..])`.
fn precision_envelope(points: &[PrPoint]) -> Vec<f64> {
    let mut env = vec![0.0; points.len()];
    let mut running = 0.0f64;
    for (i, p) in points.iter().enumerate().rev() {
        running = running.max(p.precision);
        env[i] = running;
    }
    env
}

/// Integrate a cumulative PR point list under the chosen rule. The
/// all-points sum walks recall increments in rank order; this exact
/// left-to-right order is part of the contract checked against the
/// exhaustive cut-point oracle.
pub fn integrate_ap(points: &[PrPoint], interp: Interp) -> Result<f64, MetricsError> {
    let env = precision_envelope(points);
    match interp {
        Interp::AllPoints => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (p, e) in points.iter().zip(&env) {
                ap += (p.recall - prev_recall) * e;
                prev_recall = p.recall;
            }
            Ok(ap)
        }
        Interp::NPoint(n) => {
            if n < 2 {
                return Err(MetricsError::BadInterpPoints(n));
            }
            let mut total = 0.0;
            for j in 0..n {
                let r = j as f64 / (n - 1) as f64;
                // envelope precision at the first point with recall >= r
                let p = points
                    .iter()
                    .zip(&env)
                    .find(|(pt, _)| pt.recall >= r)
                    .map(|(_, e)| *e)
                    .unwrap_or(0.0);
                total += p;
            }
            Ok(total / n as f64)
        }
    }
}

/// PR curve and AP for one class at one IoU threshold.
pub fn average_precision(
    gt: &GroundTruthSet,
    det: &DetectionSet,
    class_id: u32,
    iou_threshold: f64,
    interp: Interp,
) -> Result<PrCurve, MetricsError> {
    check_threshold(iou_threshold)?;
    let truths: Vec<&GroundTruth> = gt
        .entries
        .iter()
        .filter(|e| e.class_id == class_id)
        .collect();
    if truths.is_empty() {
        return Err(MetricsError::NoTruthForClass(class_id));
    }
    let dets: Vec<&Detection> = det
        .entries
        .iter()
        .filter(|e| e.class_id == class_id)
        .collect();
    let (truth_taken, det_match) = greedy_match(&truths, &dets, iou_threshold, true);

    // count identities, always on
    let tp_total = det_match.iter().filter(|m| m.is_some()).count();
    let fn_total = truth_taken.iter().filter(|&&x| !x).count();
    assert_eq!(
        tp_total + fn_total,
        truths.len(),
        "TP + FN must equal the class truth count"
    );
    assert_eq!(
        det_match.len(),
        dets.len(),
        "TP + FP must equal the class detection count"
    );

    let n_truths = truths.len() as f64;
    let mut points = Vec::with_capacity(dets.len());
    let mut tp = 0usize;
    let mut fp = 0usize;
    for d_idx in rank_order(&dets) {
        if det_match[d_idx].is_some() {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push(PrPoint {
            confidence: dets[d_idx].confidence,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / n_truths,
        });
    }
    let ap = integrate_ap(&points, interp)?;
    Ok(PrCurve { points, ap })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAp {
    pub class_id: u32,
    pub n_truths: usize,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdAp {
    pub iou_threshold: f64,
    pub per_class: Vec<ClassAp>,
    /// Mean AP over classes with at least one truth.
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanApReport {
    pub per_threshold: Vec<ThresholdAp>,
    /// Mean of the per-threshold mAPs.
    pub map: f64,
    /// Classes included in the mean (those with truths), sorted.
    pub classes: Vec<u32>,
    /// Detection-only classes excluded from the mean, sorted.
    pub skipped_classes: Vec<u32>,
}

/// The ten thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + i as f64 * 0.05).collect()
}

/// mAP over the given IoU thresholds: per threshold the mean AP over
/// classes with truths, then the mean over thresholds. Classes that only
/// appear in detections are reported as skipped, not counted as AP 0.
pub fn mean_ap(
    gt: &GroundTruthSet,
    det: &DetectionSet,
    thresholds: &[f64],
    interp: Interp,
) -> Result<MeanApReport, MetricsError> {
    if thresholds.is_empty() {
        return Err(MetricsError::EmptyThresholds);
    }
    let classes = gt.classes();
    if classes.is_empty() {
        return Err(MetricsError::NoTruths);
    }
    let truth_classes: BTreeSet<u32> = classes.iter().copied().collect();
    let skipped_classes: Vec<u32> = det
        .entries
        .iter()
        .map(|d| d.class_id)
        .filter(|c| !truth_classes.contains(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut per_threshold = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut per_class = Vec::with_capacity(classes.len());
        for &c in &classes {
            let curve = average_precision(gt, det, c, t, interp)?;
            per_class.push(ClassAp {
                class_id: c,
                n_truths: gt.truths_of_class(c),
                ap: curve.ap,
            });
        }
        let map = per_class.iter().map(|c| c.ap).sum::<f64>() / per_class.len() as f64;
        per_threshold.push(ThresholdAp {
            iou_threshold: t,
            per_class,
            map,
        });
    }
    let map = per_threshold.iter().map(|t| t.map).sum::<f64>() / per_threshold.len() as f64;
    Ok(MeanApReport {
        per_threshold,
        map,
        classes,
        skipped_classes,
    })
}

/// `(N+1) x (N+1)` confusion counts over `N` classes plus a background
/// row/column at index `N`. Rows are predicted classes, columns true ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; (n_classes + 1) * (n_classes + 1)],
        }
    }

    pub fn background_index(&self) -> usize {
        self.n_classes
    }

    pub fn count(&self, predicted: usize, actual: usize) -> u64 {
        self.counts[predicted * (self.n_classes + 1) + actual]
    }

    fn bump(&mut self, predicted: usize, actual: usize) {
        self.counts[predicted * (self.n_classes + 1) + actual] += 1;
    }

    /// Column-normalized view: each column divided by its total, so a cell
    /// reads as the fraction of that true class predicted as the row class.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        let n = self.n_classes + 1;
        let mut col_sums = vec![0u64; n];
        for (tru, slot) in col_sums.iter_mut().enumerate() {
            for pred in 0..n {
                *slot += self.count(pred, tru);
            }
        }
        (0..n)
            .map(|pred| {
                (0..n)
                    .map(|tru| {
                        if col_sums[tru] == 0 {
                            0.0
                        } else {
                            self.count(pred, tru) as f64 / col_sums[tru] as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Number of classes implied by the data: the name-table length when
/// present, else one past the largest class id seen.
pub fn class_count(gt: &GroundTruthSet, det: &DetectionSet) -> usize {
    if let Some(names) = &gt.class_names {
        return names.len();
    }
    gt.entries
        .iter()
        .map(|e| e.class_id)
        .chain(det.entries.iter().map(|e| e.class_id))
        .map(|c| c as usize + 1)
        .max()
        .unwrap_or(0)
}

/// Confusion matrix with class-agnostic greedy matching, so cross-class
/// mistakes land in off-diagonal cells. Detections below `conf_threshold`
/// are dropped; unmatched detections count against the background column,
/// unmatched truths against the background row.
pub fn confusion(
    gt: &GroundTruthSet,
    det: &DetectionSet,
    iou_threshold: f64,
    conf_threshold: f64,
) -> Result<ConfusionMatrix, MetricsError> {
    check_threshold(iou_threshold)?;
    if !(0.0..1.0).contains(&conf_threshold) {
        return Err(MetricsError::BadConfidence(conf_threshold));
    }
    let n_classes = class_count(gt, det);
    let mut matrix = ConfusionMatrix::new(n_classes);
    let truths: Vec<&GroundTruth> = gt.entries.iter().collect();
    let dets: Vec<&Detection> = det
        .entries
        .iter()
        .filter(|d| d.confidence >= conf_threshold)
        .collect();
    let (truth_taken, det_match) = greedy_match(&truths, &dets, iou_threshold, false);
    for (d_idx, m) in det_match.iter().enumerate() {
        match m {
            Some(t_idx) => matrix.bump(
                dets[d_idx].class_id as usize,
                truths[*t_idx].class_id as usize,
            ),
            None => matrix.bump(dets[d_idx].class_id as usize, matrix.background_index()),
        }
    }
    for (t_idx, taken) in truth_taken.iter().enumerate() {
        if !taken {
            matrix.bump(matrix.background_index(), truths[t_idx].class_id as usize);
        }
    }
    Ok(matrix)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Confidence-sweep curves per class plus the macro aggregate, and the
/// per-class PR curves.
#[derive(Debug, Clone)]
pub struct CurveBundle {
    pub per_class: Vec<(u32, Vec<CurvePoint>)>,
    /// Macro average over classes with truths; F1 recomputed from the
    /// averaged precision and recall.
    pub aggregate: Vec<CurvePoint>,
    pub pr_per_class: Vec<(u32, PrCurve)>,
    /// Macro-averaged envelope precision on a 101-point recall grid.
    pub pr_aggregate: Vec<(f64, f64)>,
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// F1/P/R-vs-confidence and PR curves, per class and aggregate. The sweep
/// runs over the descending unique confidences plus the endpoints 1 and 0;
/// at cut `c` the detections with confidence >= `c` count.
pub fn curve_bundle(
    gt: &GroundTruthSet,
    det: &DetectionSet,
    iou_threshold: f64,
) -> Result<CurveBundle, MetricsError> {
    check_threshold(iou_threshold)?;
    let classes = gt.classes();
    if classes.is_empty() {
        return Err(MetricsError::NoTruths);
    }

    // global sweep grid: 1.0, unique confidences descending, 0.0
    let mut cuts: Vec<f64> = vec![1.0];
    let mut unique: Vec<f64> = det.entries.iter().map(|d| d.confidence).collect();
    unique.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    unique.dedup();
    for c in unique {
        if c != 1.0 && c != 0.0 {
            cuts.push(c);
        }
    }
    cuts.push(0.0);

    let mut per_class = Vec::with_capacity(classes.len());
    let mut pr_per_class = Vec::with_capacity(classes.len());
    for &class_id in &classes {
        let curve = average_precision(gt, det, class_id, iou_threshold, Interp::AllPoints)?;
        let n_truths = gt.truths_of_class(class_id) as f64;
        let mut points = Vec::with_capacity(cuts.len());
        for &cut in &cuts {
            // cumulative points are rank-ordered, so the cut is a prefix
            let prefix: Vec<&PrPoint> = curve
                .points
                .iter()
                .take_while(|p| p.confidence >= cut)
                .collect();
            let (p, r) = match prefix.last() {
                Some(last) => (last.precision, last.recall),
                None => (0.0, 0.0),
            };
            debug_assert!(r <= 1.0 && n_truths > 0.0);
            points.push(CurvePoint {
                confidence: cut,
                precision: p,
                recall: r,
                f1: f1_of(p, r),
            });
        }
        per_class.push((class_id, points));
        pr_per_class.push((class_id, curve));
    }

    let aggregate: Vec<CurvePoint> = cuts
        .iter()
        .enumerate()
        .map(|(i, &cut)| {
            let n = per_class.len() as f64;
            let p = per_class.iter().map(|(_, pts)| pts[i].precision).sum::<f64>() / n;
            let r = per_class.iter().map(|(_, pts)| pts[i].recall).sum::<f64>() / n;
            CurvePoint {
                confidence: cut,
                precision: p,
                recall: r,
                f1: f1_of(p, r),
            }
        })
        .collect();

    let pr_aggregate: Vec<(f64, f64)> = (0..=100)
        .map(|j| {
            let r = j as f64 / 100.0;
            let mean_p = pr_per_class
                .iter()
                .map(|(_, curve)| {
                    let env = precision_envelope(&curve.points);
                    curve
                        .points
                        .iter()
                        .zip(&env)
                        .find(|(pt, _)| pt.recall >= r)
                        .map(|(_, e)| *e)
                        .unwrap_or(0.0)
                })
                .sum::<f64>()
                / pr_per_class.len() as f64;
            (r, mean_p)
        })
        .collect();

    Ok(CurveBundle {
        per_class,
        aggregate,
        pr_per_class,
        pr_aggregate,
    })
}
