//! Label and prediction file parsing.
//!
//! Labels: one text file per image in a directory, `class_id cx cy w h`
//! per line, box fields normalized to [0, 1]. The image id is the file
//! stem. Predictions: a single file of
//! `image_id class_id cx cy w h confidence` lines.

use std::path::Path;

use detgeom::bbox::BBox;
use detgeom::metrics::{Detection, DetectionSet, GroundTruth, GroundTruthSet};

use crate::CliError;

fn parse_field<T: std::str::FromStr>(
    token: &str,
    what: &str,
    file: &Path,
    line_no: usize,
) -> Result<T, CliError> {
    token.parse().map_err(|_| {
        CliError::usage(format!(
            "{}:{line_no}: invalid {what} `{token}`",
            file.display()
        ))
    })
}

fn parse_box(
    fields: &[&str],
    file: &Path,
    line_no: usize,
) -> Result<BBox, CliError> {
    let cx: f64 = parse_field(fields[0], "cx", file, line_no)?;
    let cy: f64 = parse_field(fields[1], "cy", file, line_no)?;
    let w: f64 = parse_field(fields[2], "w", file, line_no)?;
    let h: f64 = parse_field(fields[3], "h", file, line_no)?;
    BBox::new(cx, cy, w, h)
        .map_err(|e| CliError::usage(format!("{}:{line_no}: {e}", file.display())))
}

/// Read every `*.txt` file in the directory as one image's labels.
pub fn read_label_dir(
    dir: &Path,
    class_names: Option<Vec<String>>,
) -> Result<GroundTruthSet, CliError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    files.sort();

    let mut entries = Vec::new();
    for file in &files {
        let image_id = file
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::usage(format!("non-utf8 label name {}", file.display())))?
            .to_string();
        let text = std::fs::read_to_string(file)
            .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", file.display())))?;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(CliError::usage(format!(
                    "{}:{line_no}: expected 5 fields, got {}",
                    file.display(),
                    fields.len()
                )));
            }
            let class_id: u32 = parse_field(fields[0], "class_id", file, line_no)?;
            let bbox = parse_box(&fields[1..], file, line_no)?;
            entries.push(GroundTruth {
                image_id: image_id.clone(),
                class_id,
                bbox,
            });
        }
    }
    GroundTruthSet::new(entries, class_names).map_err(|e| CliError::usage(e.to_string()))
}

pub fn read_predictions(path: &Path) -> Result<DetectionSet, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(CliError::usage(format!(
                "{}:{line_no}: expected 7 fields, got {}",
                path.display(),
                fields.len()
            )));
        }
        let image_id = fields[0].to_string();
        let class_id: u32 = parse_field(fields[1], "class_id", path, line_no)?;
        let bbox = parse_box(&fields[2..6], path, line_no)?;
        let confidence: f64 = parse_field(fields[6], "confidence", path, line_no)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(CliError::usage(format!(
                "{}:{line_no}: confidence {confidence} outside [0, 1]",
                path.display()
            )));
        }
        entries.push(Detection {
            image_id,
            class_id,
            bbox,
            confidence,
        });
    }
    DetectionSet::new(entries).map_err(|e| CliError::usage(e.to_string()))
}

/// One class name per line.
pub fn read_class_names(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// A box given on the command line as `cx,cy,w,h`.
pub fn parse_cli_box(arg: &str, flag: &str) -> Result<BBox, CliError> {
    let parts: Vec<&str> = arg.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(CliError::usage(format!(
            "--{flag}: expected `cx,cy,w,h`, got `{arg}`"
        )));
    }
    let mut vals = [0.0f64; 4];
    for (i, (part, name)) in parts.iter().zip(["cx", "cy", "w", "h"]).enumerate() {
        vals[i] = part
            .parse()
            .map_err(|_| CliError::usage(format!("--{flag}: invalid {name} `{part}`")))?;
    }
    BBox::new(vals[0], vals[1], vals[2], vals[3])
        .map_err(|e| CliError::usage(format!("--{flag}: {e}")))
}
