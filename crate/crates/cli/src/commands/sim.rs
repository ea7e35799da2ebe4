//! `detgeom sim`: run the configured loss comparison and write the traces.

use std::path::Path;

use serde::Serialize;

use detgeom::sim::{compare_losses, LossSummary, SimConfig, SimError};

use crate::config::RunConfig;
use crate::emit::{fmt_f64, write_atomic, Csv};
use crate::CliError;

#[derive(Serialize)]
struct SimSummary<'a> {
    config: &'a SimConfig,
    losses: &'a [LossSummary],
}

fn map_sim_error(e: SimError) -> CliError {
    match e {
        SimError::InvalidConfig(_) | SimError::Loss(_) => CliError::usage(e.to_string()),
        SimError::ScenarioUnsatisfiable { .. } | SimError::NanGradient { .. } => {
            CliError::runtime(e.to_string())
        }
    }
}

pub fn run(config: &RunConfig, quiet: bool) -> Result<(), CliError> {
    let out_dir = config
        .out_dir
        .clone()
        .unwrap_or_else(|| Path::new("runs/sim").to_path_buf());
    let report = compare_losses(&config.sim).map_err(map_sim_error)?;

    for (idx, (spec, trace)) in report.traces.iter().enumerate() {
        let mut csv = Csv::new(&["step", "loss_mean", "iou_mean"]);
        for (step, (loss, iou)) in trace.loss_mean.iter().zip(&trace.iou_mean).enumerate() {
            csv.row(&[step.to_string(), fmt_f64(*loss), fmt_f64(*iou)]);
        }
        let label = spec.label().replace('@', "_r");
        csv.write(&out_dir.join(format!("trace_{idx}_{label}.csv")))?;
    }

    let summary = SimSummary {
        config: &config.sim,
        losses: &report.summary,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&out_dir.join("summary.json"), json.as_bytes())?;
    write_atomic(
        &out_dir.join("config.resolved.toml"),
        config.resolved_toml().as_bytes(),
    )?;

    if !quiet {
        for row in &report.summary {
            println!(
                "{}: steps_to_threshold={} final_loss={} final_iou={}",
                row.label,
                row.steps_to_threshold
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "-".into()),
                fmt_f64(row.final_loss_mean),
                fmt_f64(row.final_iou_mean),
            );
        }
        println!("wrote {} traces to {}", report.traces.len(), out_dir.display());
    }
    Ok(())
}
