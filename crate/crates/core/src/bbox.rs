//! Center-form bounding boxes and elementary rectangle geometry.
//!
//! Coordinates are continuous and unit-agnostic: everything downstream is
//! homogeneous in the coordinate scale, so the same box type serves
//! normalized label files and pixel-space decoded detections.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("box width must be > 0, got {0}")]
    NonPositiveWidth(f64),
    #[error("box height must be > 0, got {0}")]
    NonPositiveHeight(f64),
    #[error("box field `{0}` is not finite")]
    NonFinite(&'static str),
}

/// Axis-aligned box in center form `(cx, cy, w, h)` with `w, h > 0`.
///
/// Degenerate boxes are rejected at construction: every loss formula
/// downstream divides by `w`, `h` or `max(w, w_gt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

/// Corner view of a box: `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corners {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeomError> {
        for (v, name) in [(cx, "cx"), (cy, "cy"), (w, "w"), (h, "h")] {
            if !v.is_finite() {
                return Err(GeomError::NonFinite(name));
            }
        }
        if w <= 0.0 {
            return Err(GeomError::NonPositiveWidth(w));
        }
        if h <= 0.0 {
            return Err(GeomError::NonPositiveHeight(h));
        }
        Ok(Self { cx, cy, w, h })
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeomError> {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Center form as a `[cx, cy, w, h]` array, the parameter order used by
    /// the loss gradients.
    pub fn params(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn corners(&self) -> Corners {
        Corners {
            x1: self.cx - self.w / 2.0,
            y1: self.cy - self.h / 2.0,
            x2: self.cx + self.w / 2.0,
            y2: self.cy + self.h / 2.0,
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self, GeomError> {
        Self::new(self.cx + dx, self.cy + dy, self.w, self.h)
    }
}

/// Minimum axis-aligned box covering two input boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncloseBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    /// Enclosing width `w^c`.
    pub wc: f64,
    /// Enclosing height `h^c`.
    pub hc: f64,
}

/// Overlap area of two boxes, `0` when disjoint or merely touching.
///
/// Each per-axis overlap factor is clamped at `0` before multiplying so two
/// negative factors never produce a positive area. The overlap width
/// `min(x2, x2') - max(x1, x1')` is computed in the algebraically equal
/// center form `min(w, w', (w + w')/2 - |cx - cx'|)`, which makes the
/// self-overlap of a box reproduce its area bit-exactly.
pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let iw = ((a.w + b.w) / 2.0 - (a.cx - b.cx).abs())
        .min(a.w)
        .min(b.w)
        .max(0.0);
    let ih = ((a.h + b.h) / 2.0 - (a.cy - b.cy).abs())
        .min(a.h)
        .min(b.h)
        .max(0.0);
    iw * ih
}

/// Intersection over union, exactly `1` for identical boxes and `0` for
/// disjoint ones. Union is strictly positive for valid boxes, so no guard
/// is needed.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    inter / (a.area() + b.area() - inter)
}

/// Smallest axis-aligned box containing both inputs.
pub fn enclose(a: &BBox, b: &BBox) -> EncloseBox {
    let ca = a.corners();
    let cb = b.corners();
    let x1 = ca.x1.min(cb.x1);
    let y1 = ca.y1.min(cb.y1);
    let x2 = ca.x2.max(cb.x2);
    let y2 = ca.y2.max(cb.y2);
    EncloseBox {
        x1,
        y1,
        x2,
        y2,
        wc: x2 - x1,
        hc: y2 - y1,
    }
}
