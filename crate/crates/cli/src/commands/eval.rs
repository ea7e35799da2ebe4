//! `detgeom eval`: metric artifacts for a label directory and a prediction
//! file — per-class AP table, mAP summary, curve CSVs, confusion matrix.

use std::path::Path;

use serde::Serialize;

use detgeom::metrics::{
    class_count, confusion, curve_bundle, mean_ap, Interp, MeanApReport, MetricsError,
};

use crate::config::RunConfig;
use crate::emit::{fmt_f64, write_atomic, Csv};
use crate::formats::{read_class_names, read_label_dir, read_predictions};
use crate::CliError;

#[derive(Serialize)]
struct ClassRow {
    class_id: u32,
    name: Option<String>,
    n_truths: usize,
    ap_50: f64,
}

#[derive(Serialize)]
struct MapSummary {
    map_50: f64,
    map_75: f64,
    map_50_95: f64,
    classes: Vec<ClassRow>,
    skipped_classes: Vec<u32>,
}

fn map_metrics_error(e: MetricsError) -> CliError {
    CliError::usage(e.to_string())
}

fn class_label(names: &Option<Vec<String>>, class_id: u32) -> String {
    names
        .as_ref()
        .and_then(|n| n.get(class_id as usize))
        .cloned()
        .unwrap_or_else(|| class_id.to_string())
}

pub fn run(
    config: &RunConfig,
    quiet: bool,
    gt_dir: &Path,
    pred_path: &Path,
    class_names_path: Option<&Path>,
) -> Result<(), CliError> {
    let out_dir = config
        .out_dir
        .clone()
        .unwrap_or_else(|| Path::new("runs/eval").to_path_buf());
    let names = class_names_path.map(read_class_names).transpose()?;
    let gt = read_label_dir(gt_dir, names)?;
    let dt = read_predictions(pred_path)?;
    let interp: Interp = config.metrics.interp.into();

    // the per-class table follows the configured thresholds; the summary's
    // headline numbers stay pinned to 0.5 / 0.75 / the 0.5:0.95 sweep
    let sweep: MeanApReport =
        mean_ap(&gt, &dt, &config.metrics.iou_thresholds, interp).map_err(map_metrics_error)?;
    let at_50 = mean_ap(&gt, &dt, &[0.5], interp).map_err(map_metrics_error)?;
    let at_75 = mean_ap(&gt, &dt, &[0.75], interp).map_err(map_metrics_error)?;
    let coco = mean_ap(&gt, &dt, &detgeom::metrics::coco_thresholds(), interp)
        .map_err(map_metrics_error)?;

    // per-class AP table: one row per class, one AP column per threshold
    let mut header: Vec<String> = vec!["class_id".into(), "name".into(), "n_truths".into()];
    for t in &config.metrics.iou_thresholds {
        header.push(format!("ap_{}", fmt_f64(*t)));
    }
    header.push("ap_mean".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Csv::new(&header_refs);
    for (ci, &class_id) in sweep.classes.iter().enumerate() {
        let mut row = vec![
            class_id.to_string(),
            class_label(&gt.class_names, class_id),
            sweep.per_threshold[0].per_class[ci].n_truths.to_string(),
        ];
        let mut sum = 0.0;
        for t in &sweep.per_threshold {
            let ap = t.per_class[ci].ap;
            sum += ap;
            row.push(fmt_f64(ap));
        }
        row.push(fmt_f64(sum / sweep.per_threshold.len() as f64));
        table.row(&row);
    }
    table.write(&out_dir.join("per_class_ap.csv"))?;

    let summary = MapSummary {
        map_50: at_50.map,
        map_75: at_75.map,
        map_50_95: coco.map,
        classes: at_50.per_threshold[0]
            .per_class
            .iter()
            .map(|c| ClassRow {
                class_id: c.class_id,
                name: gt
                    .class_names
                    .as_ref()
                    .and_then(|n| n.get(c.class_id as usize).cloned()),
                n_truths: c.n_truths,
                ap_50: c.ap,
            })
            .collect(),
        skipped_classes: sweep.skipped_classes.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&out_dir.join("map_summary.json"), json.as_bytes())?;

    // confidence-sweep curves, per class plus the aggregate
    let bundle = curve_bundle(&gt, &dt, config.metrics.primary_iou).map_err(map_metrics_error)?;
    let mut curves = Csv::new(&["class", "confidence", "precision", "recall", "f1"]);
    for (class_id, points) in &bundle.per_class {
        let label = class_label(&gt.class_names, *class_id);
        for p in points {
            curves.row(&[
                label.clone(),
                fmt_f64(p.confidence),
                fmt_f64(p.precision),
                fmt_f64(p.recall),
                fmt_f64(p.f1),
            ]);
        }
    }
    for p in &bundle.aggregate {
        curves.row(&[
            "all".into(),
            fmt_f64(p.confidence),
            fmt_f64(p.precision),
            fmt_f64(p.recall),
            fmt_f64(p.f1),
        ]);
    }
    curves.write(&out_dir.join("curves.csv"))?;

    let mut pr = Csv::new(&["class", "confidence", "precision", "recall"]);
    for (class_id, curve) in &bundle.pr_per_class {
        let label = class_label(&gt.class_names, *class_id);
        for p in &curve.points {
            pr.row(&[
                label.clone(),
                fmt_f64(p.confidence),
                fmt_f64(p.precision),
                fmt_f64(p.recall),
            ]);
        }
    }
    pr.write(&out_dir.join("pr_curves.csv"))?;

    let mut pr_agg = Csv::new(&["recall", "precision"]);
    for (r, p) in &bundle.pr_aggregate {
        pr_agg.row(&[fmt_f64(*r), fmt_f64(*p)]);
    }
    pr_agg.write(&out_dir.join("pr_aggregate.csv"))?;

    // confusion matrix: rows predicted, columns true, background last
    let matrix = confusion(
        &gt,
        &dt,
        config.metrics.primary_iou,
        config.metrics.conf_threshold,
    )
    .map_err(map_metrics_error)?;
    let n = class_count(&gt, &dt);
    let col_name = |i: usize| -> String {
        if i == n {
            "background".into()
        } else {
            class_label(&gt.class_names, i as u32)
        }
    };
    let mut header: Vec<String> = vec!["predicted".into()];
    for i in 0..=n {
        header.push(format!("true_{}", col_name(i)));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut cm = Csv::new(&header_refs);
    let mut cm_norm = Csv::new(&header_refs);
    let normalized = matrix.normalized();
    for (pred, norm_row) in normalized.iter().enumerate() {
        let mut raw = vec![col_name(pred)];
        let mut nrm = vec![col_name(pred)];
        for (tru, nv) in norm_row.iter().enumerate() {
            raw.push(matrix.count(pred, tru).to_string());
            nrm.push(fmt_f64(*nv));
        }
        cm.row(&raw);
        cm_norm.row(&nrm);
    }
    cm.write(&out_dir.join("confusion.csv"))?;
    cm_norm.write(&out_dir.join("confusion_normalized.csv"))?;

    write_atomic(
        &out_dir.join("config.resolved.toml"),
        config.resolved_toml().as_bytes(),
    )?;

    if !quiet {
        println!(
            "mAP@0.5 {}  mAP@0.75 {}  mAP@0.5:0.95 {}",
            fmt_f64(summary.map_50),
            fmt_f64(summary.map_75),
            fmt_f64(summary.map_50_95)
        );
        if !sweep.skipped_classes.is_empty() {
            println!(
                "note: classes {:?} have detections but no truths; excluded from the mean",
                sweep.skipped_classes
            );
        }
        println!("wrote metric artifacts to {}", out_dir.display());
    }
    Ok(())
}
