//! Bounding-box regression losses with analytic gradients.
//!
//! Implements the SIoU components (angle, distance and shape costs), the
//! Inner-IoU auxiliary-box overlap, the combined SIB-IoU loss, and the
//! IoU/GIoU/DIoU/CIoU/EIoU baselines. Every loss is evaluated through a
//! forward-mode pass (the `dual` module) that produces the exact gradient
//! with respect to the predicted box's `(cx, cy, w, h)` together with a
//! flag marking evaluations that crossed a non-differentiable seam.

mod dual;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::{BBox, Corners};
use dual::Dual;

/// Guard added to the CIoU trade-off denominator `(1 - IoU) + v` so the
/// aspect term stays defined when both vanish on identical boxes.
const CIOU_ALPHA_GUARD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("ratio out of [0.5, 1.5]: {0}")]
    RatioOutOfRange(f64),
    #[error("theta must be > 0, got {0}")]
    ThetaNotPositive(f64),
    #[error("epsilon must be > 0, got {0}")]
    EpsilonNotPositive(f64),
    #[error("as-printed shape sign requires an integral theta, got {0}")]
    NonIntegralTheta(f64),
    #[error("{0} is not a baseline loss kind")]
    NotABaseline(LossKind),
    #[error("unknown loss kind `{0}`")]
    UnknownKind(String),
}

/// The loss family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Iou,
    Giou,
    Diou,
    Ciou,
    Eiou,
    Siou,
    InnerIou,
    SibIou,
}

impl LossKind {
    pub const ALL: [LossKind; 8] = [
        LossKind::Iou,
        LossKind::Giou,
        LossKind::Diou,
        LossKind::Ciou,
        LossKind::Eiou,
        LossKind::Siou,
        LossKind::InnerIou,
        LossKind::SibIou,
    ];

    /// Stable lowercase label, used in filenames and CSV headers.
    pub fn label(&self) -> &'static str {
        match self {
            LossKind::Iou => "iou",
            LossKind::Giou => "giou",
            LossKind::Diou => "diou",
            LossKind::Ciou => "ciou",
            LossKind::Eiou => "eiou",
            LossKind::Siou => "siou",
            LossKind::InnerIou => "inner_iou",
            LossKind::SibIou => "sib_iou",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LossKind {
    type Err = LossError;
    fn from_str(s: &str) -> Result<Self, LossError> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "iou" => Ok(LossKind::Iou),
            "giou" => Ok(LossKind::Giou),
            "diou" => Ok(LossKind::Diou),
            "ciou" => Ok(LossKind::Ciou),
            "eiou" => Ok(LossKind::Eiou),
            "siou" => Ok(LossKind::Siou),
            "inner_iou" => Ok(LossKind::InnerIou),
            "sib_iou" => Ok(LossKind::SibIou),
            other => Err(LossError::UnknownKind(other.to_string())),
        }
    }
}

/// Sign convention for the shape-cost exponent.
///
/// The printed formula uses `(1 - e^{+omega})^theta`, which grows without
/// bound for large shape mismatch; the original SIoU formulation uses
/// `e^{-omega}`, keeping each half-term in `[0, 1)`. `Corrected` is the
/// default; `AsPrinted` reproduces the printed form literally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeSign {
    AsPrinted,
    #[default]
    Corrected,
}

/// Fully specified loss: kind plus the shared family parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Inner-IoU auxiliary-box scaling factor, valid in [0.5, 1.5].
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Shape-cost exponent.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Denominator guard for the angle cost.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub shape_sign: ShapeSign,
}

fn default_ratio() -> f64 {
    1.15
}

fn default_theta() -> f64 {
    4.0
}

fn default_epsilon() -> f64 {
    1e-7
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            ratio: default_ratio(),
            theta: default_theta(),
            epsilon: default_epsilon(),
            shape_sign: ShapeSign::default(),
        }
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.ratio = ratio;
        self
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(0.5..=1.5).contains(&self.ratio) || !self.ratio.is_finite() {
            return Err(LossError::RatioOutOfRange(self.ratio));
        }
        if self.theta <= 0.0 || !self.theta.is_finite() {
            return Err(LossError::ThetaNotPositive(self.theta));
        }
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(LossError::EpsilonNotPositive(self.epsilon));
        }
        if self.shape_sign == ShapeSign::AsPrinted && self.theta.fract() != 0.0 {
            return Err(LossError::NonIntegralTheta(self.theta));
        }
        Ok(())
    }

    /// Label including the ratio when the kind uses it, e.g. `sib_iou@1.15`.
    pub fn label(&self) -> String {
        match self.kind {
            LossKind::InnerIou | LossKind::SibIou => format!("{}@{}", self.kind, self.ratio),
            _ => self.kind.to_string(),
        }
    }
}

/// The SIoU penalty terms for one box pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiouComponents {
    /// Angle cost, in [0, 1].
    pub lambda: f64,
    /// Distance-cost sharpness `2 - lambda`, in [1, 2].
    pub gamma: f64,
    /// Distance cost.
    pub delta: f64,
    /// Shape cost.
    pub omega: f64,
}

/// Scalar loss plus the gradient with respect to the predicted box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// `dL/d(cx, cy, w, h)` of the predicted box. Every evaluator in this
    /// crate fills it; it is optional so value-only results can be carried
    /// by the same type.
    pub grad: Option<[f64; 4]>,
    /// True when the evaluation sat exactly on a non-differentiable seam
    /// and `grad` is the flagged (tie-averaged) subgradient.
    pub nonsmooth: bool,
}

/// Component breakdown used by the interactive loss inspector.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub iou: f64,
    pub components: SiouComponents,
    pub inner_iou: f64,
    pub result: LossResult,
}

// ---------------------------------------------------------------------------
// dual-number evaluation core
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
struct DBox {
    x: Dual,
    y: Dual,
    w: Dual,
    h: Dual,
}

impl DBox {
    fn con(b: &BBox) -> Self {
        Self {
            x: Dual::con(b.cx()),
            y: Dual::con(b.cy()),
            w: Dual::con(b.w()),
            h: Dual::con(b.h()),
        }
    }

    fn var(b: &BBox) -> Self {
        Self {
            x: Dual::var(b.cx(), 0),
            y: Dual::var(b.cy(), 1),
            w: Dual::var(b.w(), 2),
            h: Dual::var(b.h(), 3),
        }
    }

    fn corners(&self) -> (Dual, Dual, Dual, Dual) {
        (
            self.x - self.w * 0.5,
            self.y - self.h * 0.5,
            self.x + self.w * 0.5,
            self.y + self.h * 0.5,
        )
    }
}

/// Per-axis overlap in center form, `min(wa, wb, (wa + wb)/2 - |dc|)`
/// clamped at 0; bit-exact with [`crate::bbox::intersection_area`].
fn d_overlap(wa: Dual, wb: Dual, ca: Dual, cb: Dual) -> Dual {
    let spanned = (wa + wb) * 0.5 - (ca - cb).abs();
    dual::min_multi(&[spanned, wa, wb]).clamp_min0()
}

fn d_inter_union(g: DBox, p: DBox) -> (Dual, Dual) {
    let inter = d_overlap(g.w, p.w, g.x, p.x) * d_overlap(g.h, p.h, g.y, p.y);
    let union = g.w * g.h + p.w * p.h - inter;
    (inter, union)
}

fn d_iou(g: DBox, p: DBox) -> Dual {
    let (inter, union) = d_inter_union(g, p);
    inter / union
}

/// Enclosing width and height of the minimum covering box.
fn d_enclose(g: DBox, p: DBox) -> (Dual, Dual) {
    let (gx1, gy1, gx2, gy2) = g.corners();
    let (px1, py1, px2, py2) = p.corners();
    (
        px2.max(gx2) - px1.min(gx1),
        py2.max(gy2) - py1.min(gy1),
    )
}

/// Angle cost: `sin(2 asin(min(|dx|,|dy|) / sqrt(dx^2 + dy^2 + eps)))`,
/// computed as `2 s sqrt(1 - s^2)`. On an exact `|dx| == |dy|` tie the
/// `|dx|` branch is taken and the result is flagged non-smooth.
fn d_angle(g: DBox, p: DBox, eps: f64) -> Dual {
    let dx = g.x - p.x;
    let dy = g.y - p.y;
    let ax = dx.abs();
    let ay = dy.abs();
    let a = if ax.v < ay.v {
        ax
    } else if ay.v < ax.v {
        ay
    } else {
        Dual { ns: true, ..ax }
    };
    let r = (dx.sq() + dy.sq() + eps).sqrt();
    let s = a / r;
    // s <= 1/sqrt(2), so 1 - s^2 stays away from zero.
    s * (1.0 - s.sq()).sqrt() * 2.0
}

fn d_distance(g: DBox, p: DBox, lambda: Dual) -> Dual {
    let (wc, hc) = d_enclose(g, p);
    let rho_x = ((p.x - g.x) / wc).sq();
    let rho_y = ((p.y - g.y) / hc).sq();
    let gamma = 2.0 - lambda;
    ((1.0 - (-(gamma * rho_x)).exp()) + (1.0 - (-(gamma * rho_y)).exp())) * 0.5
}

fn d_shape(g: DBox, p: DBox, theta: f64, sign: ShapeSign) -> Dual {
    let omega_w = (p.w - g.w).abs() / p.w.max(g.w);
    let omega_h = (p.h - g.h).abs() / p.h.max(g.h);
    let term = |omega: Dual| match sign {
        ShapeSign::Corrected => (1.0 - (-omega).exp()).powf(theta),
        ShapeSign::AsPrinted => (1.0 - omega.exp()).powf(theta),
    };
    (term(omega_w) + term(omega_h)) * 0.5
}

fn d_siou(g: DBox, p: DBox, spec: &LossSpec) -> Dual {
    let lambda = d_angle(g, p, spec.epsilon);
    let delta = d_distance(g, p, lambda);
    let omega = d_shape(g, p, spec.theta, spec.shape_sign);
    (1.0 - d_iou(g, p)) + (delta + omega) * 0.5
}

/// Inner-IoU: overlap of the two boxes scaled about their own centers by
/// `ratio`, with the union expanded as `A_gt ratio^2 + A_pred ratio^2 - inter`.
/// At `ratio == 1` every scaled quantity equals its unscaled counterpart
/// bit-exactly, so this reduces to [`d_iou`] exactly.
fn d_inner_iou(g: DBox, p: DBox, ratio: f64) -> Dual {
    let r_sq = ratio * ratio;
    let iw = d_overlap(g.w * ratio, p.w * ratio, g.x, p.x);
    let ih = d_overlap(g.h * ratio, p.h * ratio, g.y, p.y);
    let inter = iw * ih;
    let union = g.w * g.h * r_sq + p.w * p.h * r_sq - inter;
    inter / union
}

fn d_center_dist_sq(g: DBox, p: DBox) -> Dual {
    (p.x - g.x).sq() + (p.y - g.y).sq()
}

fn d_diou(g: DBox, p: DBox) -> Dual {
    let (wc, hc) = d_enclose(g, p);
    let c_sq = wc.sq() + hc.sq();
    (1.0 - d_iou(g, p)) + d_center_dist_sq(g, p) / c_sq
}

fn d_giou(g: DBox, p: DBox) -> Dual {
    let (inter, union) = d_inter_union(g, p);
    let (wc, hc) = d_enclose(g, p);
    let c = wc * hc;
    (1.0 - inter / union) + (c - union) / c
}

fn d_loss(g: DBox, p: DBox, spec: &LossSpec) -> Dual {
    match spec.kind {
        LossKind::Iou => 1.0 - d_iou(g, p),
        LossKind::Giou => d_giou(g, p),
        LossKind::Diou => d_diou(g, p),
        LossKind::Ciou => {
            let iou = d_iou(g, p);
            let q = Dual::con((g.w.v / g.h.v).atan()) - (p.w / p.h).atan();
            let v = q.sq() * (4.0 / (std::f64::consts::PI * std::f64::consts::PI));
            let alpha_den = (1.0 - iou) + v + CIOU_ALPHA_GUARD;
            d_diou(g, p) + v.sq() / alpha_den
        }
        LossKind::Eiou => {
            let (wc, hc) = d_enclose(g, p);
            let c_sq = wc.sq() + hc.sq();
            (1.0 - d_iou(g, p))
                + d_center_dist_sq(g, p) / c_sq
                + (p.w - g.w).sq() / wc.sq()
                + (p.h - g.h).sq() / hc.sq()
        }
        LossKind::Siou => d_siou(g, p, spec),
        LossKind::InnerIou => 1.0 - d_inner_iou(g, p, spec.ratio),
        // grouped so the IoU terms cancel bit-exactly at ratio 1
        LossKind::SibIou => {
            d_siou(g, p, spec) + (d_iou(g, p) - d_inner_iou(g, p, spec.ratio))
        }
    }
}

fn result_from(dual: Dual) -> LossResult {
    LossResult {
        value: dual.v,
        grad: Some(dual.d),
        nonsmooth: dual.ns,
    }
}

// ---------------------------------------------------------------------------
// public surface
// ---------------------------------------------------------------------------

/// Angle cost Λ of Eq. 4; `0` for axis-aligned centers (and coincident
/// centers, via the epsilon guard), `1` at a 45° offset.
pub fn angle_cost(gt: &BBox, pred: &BBox, epsilon: f64) -> f64 {
    d_angle(DBox::con(gt), DBox::con(pred), epsilon).v
}

/// Distance cost Δ given the angle cost `lambda`.
pub fn distance_cost(gt: &BBox, pred: &BBox, lambda: f64) -> f64 {
    d_distance(DBox::con(gt), DBox::con(pred), Dual::con(lambda)).v
}

/// Shape cost Ω under the requested exponent sign convention.
pub fn shape_cost(gt: &BBox, pred: &BBox, theta: f64, sign: ShapeSign) -> f64 {
    d_shape(DBox::con(gt), DBox::con(pred), theta, sign).v
}

/// All four SIoU penalty terms at once.
pub fn siou_components(gt: &BBox, pred: &BBox, spec: &LossSpec) -> SiouComponents {
    let g = DBox::con(gt);
    let p = DBox::con(pred);
    let lambda = d_angle(g, p, spec.epsilon);
    SiouComponents {
        lambda: lambda.v,
        gamma: 2.0 - lambda.v,
        delta: d_distance(g, p, lambda).v,
        omega: d_shape(g, p, spec.theta, spec.shape_sign).v,
    }
}

/// SIoU loss `1 - IoU + (Δ + Ω) / 2` with gradient.
pub fn siou_loss(gt: &BBox, pred: &BBox, spec: &LossSpec) -> LossResult {
    result_from(d_siou(DBox::con(gt), DBox::var(pred), spec))
}

/// Corner forms of both boxes scaled about their own centers by `ratio`.
pub fn inner_boxes(
    gt: &BBox,
    pred: &BBox,
    ratio: f64,
) -> Result<(Corners, Corners), LossError> {
    check_ratio(ratio)?;
    let scale = |b: &BBox| Corners {
        x1: b.cx() - b.w() * ratio / 2.0,
        y1: b.cy() - b.h() * ratio / 2.0,
        x2: b.cx() + b.w() * ratio / 2.0,
        y2: b.cy() + b.h() * ratio / 2.0,
    };
    Ok((scale(gt), scale(pred)))
}

/// IoU of the ratio-scaled auxiliary boxes; equals plain [`crate::bbox::iou`]
/// when `ratio == 1`.
pub fn inner_iou(gt: &BBox, pred: &BBox, ratio: f64) -> Result<f64, LossError> {
    check_ratio(ratio)?;
    Ok(d_inner_iou(DBox::con(gt), DBox::con(pred), ratio).v)
}

/// SIB-IoU loss `L_SIoU + IoU - IoU_inner`; reduces to [`siou_loss`] exactly
/// when `ratio == 1`.
pub fn sib_iou_loss(gt: &BBox, pred: &BBox, spec: &LossSpec) -> Result<LossResult, LossError> {
    check_ratio(spec.ratio)?;
    let g = DBox::con(gt);
    let p = DBox::var(pred);
    Ok(result_from(
        d_siou(g, p, spec) + (d_iou(g, p) - d_inner_iou(g, p, spec.ratio)),
    ))
}

/// One of the named baseline losses (IoU, GIoU, DIoU, CIoU, EIoU).
pub fn baseline_loss(gt: &BBox, pred: &BBox, spec: &LossSpec) -> Result<LossResult, LossError> {
    match spec.kind {
        LossKind::Iou | LossKind::Giou | LossKind::Diou | LossKind::Ciou | LossKind::Eiou => {
            loss(gt, pred, spec)
        }
        other => Err(LossError::NotABaseline(other)),
    }
}

/// Evaluate any loss kind: value, gradient and non-smoothness flag.
pub fn loss(gt: &BBox, pred: &BBox, spec: &LossSpec) -> Result<LossResult, LossError> {
    spec.validate()?;
    Ok(result_from(d_loss(DBox::con(gt), DBox::var(pred), spec)))
}

/// Value-only evaluation; this is the scalar function the finite-difference
/// oracles differentiate.
pub fn loss_value(gt: &BBox, pred: &BBox, spec: &LossSpec) -> Result<f64, LossError> {
    loss(gt, pred, spec).map(|r| r.value)
}

/// Analytic `dL/d(cx, cy, w, h)` of the predicted box plus the
/// non-smoothness flag.
pub fn loss_gradient(gt: &BBox, pred: &BBox, spec: &LossSpec) -> Result<([f64; 4], bool), LossError> {
    let r = loss(gt, pred, spec)?;
    Ok((r.grad.expect("gradient always computed"), r.nonsmooth))
}

/// Full component breakdown for one pair under one spec.
pub fn breakdown(gt: &BBox, pred: &BBox, spec: &LossSpec) -> Result<LossBreakdown, LossError> {
    spec.validate()?;
    Ok(LossBreakdown {
        iou: crate::bbox::iou(gt, pred),
        components: siou_components(gt, pred, spec),
        inner_iou: inner_iou(gt, pred, spec.ratio)?,
        result: loss(gt, pred, spec)?,
    })
}

fn check_ratio(ratio: f64) -> Result<(), LossError> {
    if !(0.5..=1.5).contains(&ratio) || !ratio.is_finite() {
        return Err(LossError::RatioOutOfRange(ratio));
    }
    Ok(())
}
