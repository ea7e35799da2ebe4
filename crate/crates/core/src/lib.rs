//! Bounding-box loss geometry and detection evaluation.
//!
//! The crate is organized around a small set of pure, deterministic modules:
//!
//! - [`bbox`] — center-form boxes and elementary rectangle geometry,
//! - [`loss`] — the IoU-family regression losses (IoU, GIoU, DIoU, CIoU,
//!   EIoU, SIoU, Inner-IoU, SIB-IoU) with analytic gradients,
//! - [`involution`] — the involution operator on small dense 4-D tensors,
//! - [`sim`] — a synthetic box-regression benchmark comparing loss
//!   convergence under gradient descent,
//! - [`metrics`] — detection evaluation (matching, PR curves, AP/mAP,
//!   confusion matrices),
//! - [`heads`] — multi-scale detection-head grid geometry, anchor-free
//!   decoding and non-maximum suppression.
//!
//! Everything operates on `f64` and is safe for parallel use; all
//! randomized entry points take explicit seeds.

pub mod bbox;
pub mod heads;
pub mod involution;
pub mod loss;
pub mod metrics;
pub mod sim;

pub use bbox::{enclose, intersection_area, iou, BBox, Corners, EncloseBox, GeomError};
pub use loss::{LossKind, LossResult, LossSpec, ShapeSign};
