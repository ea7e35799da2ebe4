//! `detgeom loss-eval`: one pair, one spec, full component breakdown.

use detgeom::loss::{breakdown, LossKind, ShapeSign};

use crate::config::RunConfig;
use crate::emit::fmt_f64;
use crate::formats::parse_cli_box;
use crate::CliError;

#[allow(clippy::too_many_arguments)]
pub fn run(
    config: &RunConfig,
    _quiet: bool,
    gt: &str,
    pred: &str,
    kind: Option<&str>,
    ratio: Option<f64>,
    theta: Option<f64>,
    epsilon: Option<f64>,
    shape_sign: Option<&str>,
) -> Result<(), CliError> {
    let gt = parse_cli_box(gt, "gt")?;
    let pred = parse_cli_box(pred, "pred")?;

    let mut spec = config.loss;
    if let Some(kind) = kind {
        spec.kind = kind
            .parse::<LossKind>()
            .map_err(|e| CliError::usage(format!("--kind: {e}")))?;
    }
    if let Some(ratio) = ratio {
        spec.ratio = ratio;
    }
    if let Some(theta) = theta {
        spec.theta = theta;
    }
    if let Some(epsilon) = epsilon {
        spec.epsilon = epsilon;
    }
    if let Some(sign) = shape_sign {
        spec.shape_sign = match sign.to_ascii_lowercase().replace('-', "_").as_str() {
            "corrected" => ShapeSign::Corrected,
            "as_printed" => ShapeSign::AsPrinted,
            other => {
                return Err(CliError::usage(format!(
                    "--shape-sign: expected corrected|as_printed, got `{other}`"
                )))
            }
        };
    }
    spec.validate()
        .map_err(|e| CliError::usage(e.to_string()))?;

    let b = breakdown(&gt, &pred, &spec).map_err(|e| CliError::usage(e.to_string()))?;
    let grad = b.result.grad.expect("breakdown carries the gradient");

    println!("kind       {}", spec.label());
    println!("iou        {}", fmt_f64(b.iou));
    println!("lambda     {}", fmt_f64(b.components.lambda));
    println!("gamma      {}", fmt_f64(b.components.gamma));
    println!("delta      {}", fmt_f64(b.components.delta));
    println!("omega      {}", fmt_f64(b.components.omega));
    println!("inner_iou  {}", fmt_f64(b.inner_iou));
    println!("loss       {}", fmt_f64(b.result.value));
    println!(
        "grad       {} {} {} {}",
        fmt_f64(grad[0]),
        fmt_f64(grad[1]),
        fmt_f64(grad[2]),
        fmt_f64(grad[3])
    );
    println!("nonsmooth  {}", b.result.nonsmooth);
    Ok(())
}
