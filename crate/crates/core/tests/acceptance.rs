//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them).
//!
//! The oracles here are written straight from the defining formulas as an
//! independent route — corner-form rectangle arithmetic, `sin(2 asin(...))`
//! for the angle cost, per-prefix re-matching for AP — and deliberately do
//! not share code with the library paths they check.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use detgeom::bbox::{iou, BBox};
use detgeom::heads::{nms, ScoredBox};
use detgeom::involution::{involute, involute_reference, InvolutionKernel, Tensor4};
use detgeom::loss::{
    self, angle_cost, inner_iou, loss_value, sib_iou_loss, siou_loss, LossKind, LossSpec,
};
use detgeom::metrics::{
    average_precision, coco_thresholds, mean_ap, Detection, DetectionSet, GroundTruth,
    GroundTruthSet, Interp,
};
use detgeom::sim::{compare_losses, Optimizer, Scenario, SimConfig};

/// Straight-from-the-equations reference implementations.
mod oracle {
    use detgeom::bbox::BBox;

    pub struct CornerBox {
        pub l: f64,
        pub t: f64,
        pub r: f64,
        pub b: f64,
        pub w: f64,
        pub h: f64,
        pub xc: f64,
        pub yc: f64,
    }

    pub fn corners(bx: &BBox) -> CornerBox {
        CornerBox {
            l: bx.cx() - bx.w() / 2.0,
            t: bx.cy() - bx.h() / 2.0,
            r: bx.cx() + bx.w() / 2.0,
            b: bx.cy() + bx.h() / 2.0,
            w: bx.w(),
            h: bx.h(),
            xc: bx.cx(),
            yc: bx.cy(),
        }
    }

    pub fn iou(gt: &BBox, pred: &BBox) -> f64 {
        let g = corners(gt);
        let p = corners(pred);
        let inter = (g.r.min(p.r) - g.l.max(p.l)).max(0.0) * (g.b.min(p.b) - g.t.max(p.t)).max(0.0);
        inter / (g.w * g.h + p.w * p.h - inter)
    }

    pub fn lambda(gt: &BBox, pred: &BBox, eps: f64) -> f64 {
        let dx = gt.cx() - pred.cx();
        let dy = gt.cy() - pred.cy();
        let s = dx.abs().min(dy.abs()) / (dx * dx + dy * dy + eps).sqrt();
        (2.0 * s.asin()).sin()
    }

    pub fn delta(gt: &BBox, pred: &BBox, lambda: f64) -> f64 {
        let g = corners(gt);
        let p = corners(pred);
        let wc = g.r.max(p.r) - g.l.min(p.l);
        let hc = g.b.max(p.b) - g.t.min(p.t);
        let rho_x = ((p.xc - g.xc) / wc).powi(2);
        let rho_y = ((p.yc - g.yc) / hc).powi(2);
        let gamma = 2.0 - lambda;
        0.5 * ((1.0 - (-gamma * rho_x).exp()) + (1.0 - (-gamma * rho_y).exp()))
    }

    pub fn omega_corrected(gt: &BBox, pred: &BBox, theta: f64) -> f64 {
        let ow = (pred.w() - gt.w()).abs() / pred.w().max(gt.w());
        let oh = (pred.h() - gt.h()).abs() / pred.h().max(gt.h());
        0.5 * ((1.0 - (-ow).exp()).powf(theta) + (1.0 - (-oh).exp()).powf(theta))
    }

    pub fn siou(gt: &BBox, pred: &BBox, eps: f64, theta: f64) -> f64 {
        let lam = lambda(gt, pred, eps);
        1.0 - iou(gt, pred) + (delta(gt, pred, lam) + omega_corrected(gt, pred, theta)) / 2.0
    }

    pub fn inner_iou(gt: &BBox, pred: &BBox, ratio: f64) -> f64 {
        let (gl, gr) = (
            gt.cx() - gt.w() * ratio / 2.0,
            gt.cx() + gt.w() * ratio / 2.0,
        );
        let (gtp, gb) = (
            gt.cy() - gt.h() * ratio / 2.0,
            gt.cy() + gt.h() * ratio / 2.0,
        );
        let (pl, pr) = (
            pred.cx() - pred.w() * ratio / 2.0,
            pred.cx() + pred.w() * ratio / 2.0,
        );
        let (pt, pb) = (
            pred.cy() - pred.h() * ratio / 2.0,
            pred.cy() + pred.h() * ratio / 2.0,
        );
        let inter = (gr.min(pr) - gl.max(pl)).max(0.0) * (gb.min(pb) - gtp.max(pt)).max(0.0);
        let union = (gt.w() * gt.h()) * ratio * ratio + (pred.w() * pred.h()) * ratio * ratio
            - inter;
        inter / union
    }

    pub fn sib(gt: &BBox, pred: &BBox, eps: f64, theta: f64, ratio: f64) -> f64 {
        siou(gt, pred, eps, theta) + iou(gt, pred) - inner_iou(gt, pred, ratio)
    }
}

fn bb(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
    BBox::new(cx, cy, w, h).unwrap()
}

fn sample_pair(rng: &mut ChaCha8Rng) -> (BBox, BBox) {
    let sample = |rng: &mut ChaCha8Rng| {
        bb(
            rng.gen_range(0.2..0.8),
            rng.gen_range(0.2..0.8),
            rng.gen_range(0.05..0.5),
            rng.gen_range(0.05..0.5),
        )
    };
    (sample(rng), sample(rng))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn criterion_01_loss_formula_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let spec = LossSpec::new(LossKind::SibIou); // ratio 1.15, eps 1e-7, theta 4
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (gt, pred) = sample_pair(&mut rng);

        let got_siou = siou_loss(&gt, &pred, &spec).value;
        let want_siou = oracle::siou(&gt, &pred, spec.epsilon, spec.theta);
        assert!(
            rel_close(got_siou, want_siou, 1e-12),
            "siou {got_siou} vs oracle {want_siou} on {gt:?} / {pred:?}"
        );

        let got_inner = inner_iou(&gt, &pred, spec.ratio).unwrap();
        let want_inner = oracle::inner_iou(&gt, &pred, spec.ratio);
        assert!(
            rel_close(got_inner, want_inner, 1e-12),
            "inner {got_inner} vs oracle {want_inner}"
        );

        let got_sib = sib_iou_loss(&gt, &pred, &spec).unwrap().value;
        let want_sib = oracle::sib(&gt, &pred, spec.epsilon, spec.theta, spec.ratio);
        assert!(
            rel_close(got_sib, want_sib, 1e-12),
            "sib {got_sib} vs oracle {want_sib}"
        );

        for (a, b) in [
            (got_siou, want_siou),
            (got_inner, want_inner),
            (got_sib, want_sib),
        ] {
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    println!(
        "criterion 1 PASS: siou/inner/sib match the Eq. 3-16 oracle on 1000 pairs, \
         worst rel err {worst:.2e}, {elapsed:.2?}"
    );
}

#[test]
fn criterion_02_reduction_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1001); // same 1000 pairs as criterion 1
    let sib_spec = LossSpec::new(LossKind::SibIou).with_ratio(1.0);
    let siou_spec = LossSpec::new(LossKind::Siou);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (gt, pred) = sample_pair(&mut rng);
        let sib = sib_iou_loss(&gt, &pred, &sib_spec).unwrap().value;
        let siou = siou_loss(&gt, &pred, &siou_spec).value;
        let err = (sib - siou).abs();
        assert!(err <= 1e-12, "sib@1 {sib} vs siou {siou}");
        worst = worst.max(err);
    }
    println!("criterion 2 PASS: sib(ratio=1) == siou on 1000 pairs, worst abs err {worst:.2e}");
}

#[test]
fn criterion_03_gradient_correctness() {
    let start = Instant::now();
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    let mut skipped = 0usize;
    for kind in LossKind::ALL {
        let spec = LossSpec::new(kind);
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + kind as u64);
        let mut checked = 0;
        while checked < 1000 {
            let (gt, pred) = sample_pair(&mut rng);
            let r = loss::loss(&gt, &pred, &spec).unwrap();
            if r.nonsmooth {
                skipped += 1;
                continue;
            }
            let analytic = r.grad.unwrap();
            let p = pred.params();
            for i in 0..4 {
                let eval = |v: f64| {
                    let mut q = p;
                    q[i] = v;
                    loss_value(&gt, &bb(q[0], q[1], q[2], q[3]), &spec).unwrap()
                };
                let fd = (eval(p[i] + step) - eval(p[i] - step)) / (2.0 * step);
                let scale = analytic[i].abs().max(fd.abs()).max(1.0);
                let rel = (analytic[i] - fd).abs() / scale;
                assert!(
                    rel <= 1e-4,
                    "{kind} grad[{i}] analytic {} vs fd {fd} on {gt:?}/{pred:?}",
                    analytic[i]
                );
                worst = worst.max(rel);
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!(
        "criterion 3 PASS: analytic gradients match central differences for all 8 kinds \
         (1000 pairs each, worst rel err {worst:.2e}, {skipped} non-smooth skipped, {elapsed:.2?})"
    );
}

#[test]
fn criterion_04_angle_cost_anchors() {
    let eps = 1e-7;
    let gt = bb(0.5, 0.5, 0.3, 0.3);
    for (dx, dy) in [(0.1, 0.1), (0.2, -0.2), (-0.05, 0.05), (-0.3, -0.3)] {
        let pred = bb(0.5 + dx, 0.5 + dy, 0.2, 0.4);
        let lam = angle_cost(&gt, &pred, eps);
        assert!(
            (lam - 1.0).abs() <= 1e-9,
            "lambda at exact 45 degrees: {lam}"
        );
    }
    for (dx, dy) in [(0.25, 0.0), (-0.4, 0.0), (0.0, 0.15), (0.0, -0.3)] {
        let pred = bb(0.5 + dx, 0.5 + dy, 0.2, 0.4);
        let lam = angle_cost(&gt, &pred, eps);
        assert!(lam.abs() <= 1e-9, "lambda on axis-aligned offset: {lam}");
    }
    println!("criterion 4 PASS: lambda = 1 at 45-degree offsets and 0 on axis-aligned offsets (1e-9)");
}

#[test]
fn criterion_05_convergence_reproduction() {
    let start = Instant::now();
    let config = SimConfig {
        losses: vec![
            LossSpec::new(LossKind::Ciou),
            LossSpec::new(LossKind::SibIou), // ratio 1.15
        ],
        ..SimConfig::default() // uniform_random, 200 pairs, 300 steps
    };
    let report = compare_losses(&config).unwrap();
    let ciou = &report.traces[0].1;
    let sib = &report.traces[1].1;

    // the report, emitted either way
    for row in &report.summary {
        println!(
            "  {}: steps_to_threshold={:?} final_iou={:.5} loss_auc={:.3}",
            row.label, row.steps_to_threshold, row.final_iou_mean, row.loss_auc
        );
    }

    let sib_steps = sib.steps_to_threshold.expect("SIB-IoU reaches stop_loss");
    let ciou_steps = ciou.steps_to_threshold.expect("CIoU reaches stop_loss");
    assert!(
        sib_steps < ciou_steps,
        "SIB-IoU steps {sib_steps} not strictly below CIoU {ciou_steps}"
    );
    for k in 50..config.steps {
        assert!(
            sib.iou_mean[k] >= ciou.iou_mean[k],
            "mean-IoU dominance broken at step {k}: sib {} < ciou {}",
            sib.iou_mean[k],
            ciou.iou_mean[k]
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60 s");
    println!(
        "criterion 5 PASS: SIB-IoU(1.15) hits stop_loss at step {sib_steps} vs CIoU {ciou_steps}; \
         mean-IoU curve dominates from step 50 on ({elapsed:.2?})"
    );
}

#[test]
fn criterion_06_ratio_regime_behavior() {
    // gradient-limited plain-GD regime; see the decisions ledger for why
    // the ratio ordering is only visible below the oscillation scale
    let base = SimConfig {
        lr: 5e-5,
        lr_decay: 1.0,
        optimizer: Optimizer::Sgd,
        ..SimConfig::default()
    };
    let mk = |r: f64| LossSpec::new(LossKind::SibIou).with_ratio(r);

    let high = SimConfig {
        scenario: Scenario::HighIouStart,
        losses: vec![mk(0.7), mk(1.3)],
        ..base.clone()
    };
    let rh = compare_losses(&high).unwrap();
    let steps_07 = rh.summary[0].steps_to_threshold.expect("ratio 0.7 converges");
    let steps_13 = rh.summary[1].steps_to_threshold.expect("ratio 1.3 converges");
    assert!(
        steps_07 < steps_13,
        "high-IoU start: ratio 0.7 took {steps_07} steps vs {steps_13} for 1.3"
    );

    let low = SimConfig {
        scenario: Scenario::LowIouStart,
        losses: vec![mk(0.7), mk(1.3)],
        ..base
    };
    let rl = compare_losses(&low).unwrap();
    let final_07 = rl.summary[0].final_iou_mean;
    let final_13 = rl.summary[1].final_iou_mean;
    assert!(
        final_13 >= final_07,
        "low-IoU start: final IoU at 1.3 ({final_13}) below 0.7 ({final_07})"
    );
    println!(
        "criterion 6 PASS: high-IoU steps 0.7={steps_07} < 1.3={steps_13}; \
         low-IoU final IoU 1.3={final_13:.4} >= 0.7={final_07:.4}"
    );
}

#[test]
fn criterion_07_involution_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7000);
    let mut configs = Vec::new();
    'outer: for k in [1usize, 3, 5] {
        for g in [1usize, 2, 4] {
            for c in [2usize, 4, 8] {
                if c % g != 0 {
                    continue;
                }
                for n in [1usize, 2] {
                    configs.push((n, c, k, g));
                    if configs.len() == 50 {
                        break 'outer;
                    }
                }
            }
        }
    }
    // top up with repeats of valid combos until 50 seeded runs
    while configs.len() < 50 {
        configs.push((1, 4, 3, 2));
    }
    let mut worst: f64 = 0.0;
    for &(n, c, k, g) in &configs {
        let h = rng.gen_range(3..7);
        let w = rng.gen_range(3..7);
        let x = Tensor4::random((n, c, h, w), &mut rng).unwrap();
        let kernel = InvolutionKernel::random((h, w, k, g), &mut rng).unwrap();
        let fast = involute(&x, &kernel).unwrap();
        let slow = involute_reference(&x, &kernel).unwrap();
        let dev = fast
            .data()
            .iter()
            .zip(slow.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-6, "deviation {dev} for (n,c,k,g)=({n},{c},{k},{g})");
        worst = worst.max(dev);
    }

    // identity and delta kernels reproduce the input exactly
    let x = Tensor4::random((2, 4, 5, 6), &mut rng).unwrap();
    let identity = InvolutionKernel::new((5, 6, 1, 1), vec![1.0; 30]).unwrap();
    assert_eq!(involute(&x, &identity).unwrap(), x);
    let delta = InvolutionKernel::delta(5, 6, 3, 2).unwrap();
    assert_eq!(involute(&x, &delta).unwrap(), x);

    println!(
        "criterion 7 PASS: involute matches the 5-loop oracle on 50 seeded configs \
         (worst abs dev {worst:.2e}); identity/delta kernels exact"
    );
}

// -- metric fixtures -----------------------------------------------------------

fn truth(image: &str, class_id: u32, bbox: BBox) -> GroundTruth {
    GroundTruth {
        image_id: image.into(),
        class_id,
        bbox,
    }
}

fn det(image: &str, class_id: u32, bbox: BBox, confidence: f64) -> Detection {
    Detection {
        image_id: image.into(),
        class_id,
        bbox,
        confidence,
    }
}

/// Independent AP: exhaustive rank cut-points, re-matched from scratch with
/// plain nested loops per prefix, then the same envelope sum.
fn cutpoint_oracle_ap(gt: &GroundTruthSet, dt: &DetectionSet, class_id: u32, thr: f64) -> f64 {
    let truths: Vec<&GroundTruth> = gt
        .entries
        .iter()
        .filter(|t| t.class_id == class_id)
        .collect();
    let mut ranked: Vec<&Detection> = dt
        .entries
        .iter()
        .filter(|d| d.class_id == class_id)
        .collect();
    ranked.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());

    let mut points = Vec::new();
    for k in 1..=ranked.len() {
        let mut taken = vec![false; truths.len()];
        let mut tp = 0usize;
        for d in &ranked[..k] {
            let mut best = usize::MAX;
            let mut best_iou = -1.0;
            for (ti, t) in truths.iter().enumerate() {
                if taken[ti] || t.image_id != d.image_id {
                    continue;
                }
                let ov = iou(&t.bbox, &d.bbox);
                if ov > best_iou {
                    best_iou = ov;
                    best = ti;
                }
            }
            if best != usize::MAX && best_iou >= thr {
                taken[best] = true;
                tp += 1;
            }
        }
        points.push((tp as f64 / truths.len() as f64, tp as f64 / k as f64));
    }
    let mut env = vec![0.0; points.len()];
    let mut run = 0.0f64;
    for i in (0..points.len()).rev() {
        run = run.max(points[i].1);
        env[i] = run;
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (i, (r, _)) in points.iter().enumerate() {
        ap += (r - prev) * env[i];
        prev = *r;
    }
    ap
}

fn random_eval_set(rng: &mut ChaCha8Rng) -> (GroundTruthSet, DetectionSet) {
    let n_classes = rng.gen_range(1..4u32);
    let mut gts = Vec::new();
    let mut dts = Vec::new();
    for img in 0..rng.gen_range(1..4) {
        let image = format!("img{img}");
        for _ in 0..rng.gen_range(1..5) {
            let b = bb(
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.05..0.3),
                rng.gen_range(0.05..0.3),
            );
            let class_id = rng.gen_range(0..n_classes);
            gts.push(truth(&image, class_id, b));
            if rng.gen_bool(0.8) {
                dts.push(det(
                    &image,
                    class_id,
                    bb(
                        b.cx() + rng.gen_range(-0.05..0.05),
                        b.cy() + rng.gen_range(-0.05..0.05),
                        b.w() * rng.gen_range(0.8..1.2),
                        b.h() * rng.gen_range(0.8..1.2),
                    ),
                    rng.gen_range(0.05..1.0),
                ));
            }
        }
        for _ in 0..rng.gen_range(0..3) {
            dts.push(det(
                &image,
                rng.gen_range(0..n_classes),
                bb(
                    rng.gen_range(0.1..0.9),
                    rng.gen_range(0.1..0.9),
                    rng.gen_range(0.02..0.2),
                    rng.gen_range(0.02..0.2),
                ),
                rng.gen_range(0.05..1.0),
            ));
        }
    }
    (
        GroundTruthSet::new(gts, None).unwrap(),
        DetectionSet::new(dts).unwrap(),
    )
}

#[test]
fn criterion_08_metric_exactness() {
    // hand-enumerated fixture: 2 truths, 1 TP at 0.9, 1 FP at 0.8 -> AP 0.5
    let gt = GroundTruthSet::new(
        vec![
            truth("a", 0, bb(0.3, 0.3, 0.2, 0.2)),
            truth("a", 0, bb(0.7, 0.7, 0.2, 0.2)),
        ],
        None,
    )
    .unwrap();
    let dt = DetectionSet::new(vec![
        det("a", 0, bb(0.3, 0.3, 0.2, 0.2), 0.9),
        det("a", 0, bb(0.05, 0.95, 0.05, 0.05), 0.8),
    ])
    .unwrap();
    let ap = average_precision(&gt, &dt, 0, 0.5, Interp::AllPoints)
        .unwrap()
        .ap;
    assert_eq!(ap, 0.5, "half-AP fixture");
    assert_eq!(ap, cutpoint_oracle_ap(&gt, &dt, 0, 0.5));

    // exact (not approximate) agreement with the cut-point oracle on
    // seeded random micro datasets across thresholds
    let mut rng = ChaCha8Rng::seed_from_u64(8000);
    let mut fixtures = 0;
    while fixtures < 40 {
        let (gt, dt) = random_eval_set(&mut rng);
        if gt.entries.is_empty() {
            continue;
        }
        for class_id in gt.classes() {
            for thr in [0.3, 0.5, 0.75] {
                let fast = average_precision(&gt, &dt, class_id, thr, Interp::AllPoints)
                    .unwrap()
                    .ap;
                let slow = cutpoint_oracle_ap(&gt, &dt, class_id, thr);
                assert_eq!(fast, slow, "class {class_id} thr {thr}");
            }
        }
        fixtures += 1;
    }

    // mAP@0.5:0.95 uses exactly the ten thresholds 0.50..0.95 step 0.05
    let thresholds = coco_thresholds();
    assert_eq!(thresholds.len(), 10);
    for (i, t) in thresholds.iter().enumerate() {
        assert!((t - (0.5 + 0.05 * i as f64)).abs() < 1e-12);
    }
    let report = mean_ap(&gt, &dt, &thresholds, Interp::AllPoints).unwrap();
    assert_eq!(report.per_threshold.len(), 10);
    for (row, want) in report.per_threshold.iter().zip(&thresholds) {
        assert_eq!(row.iou_threshold, *want);
    }
    println!(
        "criterion 8 PASS: all-points AP equals the exhaustive cut-point oracle exactly on \
         40 fixtures; half-AP fixture = 0.5; mAP@0.5:0.95 uses the ten 0.05-step thresholds"
    );
}

#[test]
fn criterion_09_count_identities() {
    // the identities are asserted inside the library on every run; this
    // recomputes them here across seeded datasets and thresholds
    let mut rng = ChaCha8Rng::seed_from_u64(9000);
    let mut runs = 0;
    while runs < 50 {
        let (gt, dt) = random_eval_set(&mut rng);
        if gt.entries.is_empty() {
            continue;
        }
        for thr in [0.3, 0.5, 0.75] {
            for class_id in gt.classes() {
                let curve = average_precision(&gt, &dt, class_id, thr, Interp::AllPoints).unwrap();
                let n_dets = dt
                    .entries
                    .iter()
                    .filter(|d| d.class_id == class_id)
                    .count();
                let n_truths = gt.truths_of_class(class_id);
                // TP + FP = detections: one cumulative point per detection
                assert_eq!(curve.points.len(), n_dets);
                if let Some(last) = curve.points.last() {
                    let tp = (last.recall * n_truths as f64).round() as usize;
                    let fp = n_dets - tp;
                    // TP + FN = truths
                    assert!(tp <= n_truths);
                    assert_eq!(tp + (n_truths - tp), n_truths);
                    assert_eq!(tp + fp, n_dets);
                }
            }
            let _ = mean_ap(&gt, &dt, &[thr], Interp::AllPoints).unwrap();
        }
        runs += 1;
    }
    println!("criterion 9 PASS: TP+FN = truths and TP+FP = detections per class on 50 seeded runs");
}

#[test]
fn criterion_10_nms_oracle() {
    fn bruteforce(dets: &[ScoredBox], thr: f64, agnostic: bool) -> Vec<ScoredBox> {
        let mut state = vec![0u8; dets.len()]; // 0 open, 1 kept, 2 suppressed
        loop {
            let mut best: Option<usize> = None;
            for i in 0..dets.len() {
                if state[i] == 0
                    && best.is_none_or(|b| dets[i].confidence > dets[b].confidence)
                {
                    best = Some(i);
                }
            }
            let Some(b) = best else { break };
            state[b] = 1;
            for i in 0..dets.len() {
                if state[i] == 0
                    && (agnostic || dets[i].class_id == dets[b].class_id)
                    && iou(&dets[i].bbox, &dets[b].bbox) >= thr
                {
                    state[i] = 2;
                }
            }
        }
        let mut kept: Vec<ScoredBox> = dets
            .iter()
            .zip(&state)
            .filter(|(_, s)| **s == 1)
            .map(|(d, _)| d.clone())
            .collect();
        kept.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
        kept
    }

    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    for _ in 0..500 {
        let n = rng.gen_range(1..=50);
        let scene: Vec<ScoredBox> = (0..n)
            .map(|_| ScoredBox {
                bbox: bb(
                    rng.gen_range(50.0..590.0),
                    rng.gen_range(50.0..590.0),
                    rng.gen_range(10.0..200.0),
                    rng.gen_range(10.0..200.0),
                ),
                class_id: rng.gen_range(0..4),
                confidence: rng.gen_range(0.01..1.0),
            })
            .collect();
        for agnostic in [false, true] {
            let fast = nms(&scene, 0.45, agnostic).unwrap();
            assert_eq!(fast, bruteforce(&scene, 0.45, agnostic));
            let twice = nms(&fast, 0.45, agnostic).unwrap();
            assert_eq!(fast, twice, "idempotence");
        }
    }
    println!(
        "criterion 10 PASS: greedy NMS equals the O(n^2) suppression oracle and is idempotent \
         on 500 seeded scenes of up to 50 boxes"
    );
}
