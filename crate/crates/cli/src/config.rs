//! The declarative run configuration.
//!
//! TOML with nested sections; unknown keys are rejected everywhere and all
//! defaults mirror the training-setup values (300 steps, ratio 1.15,
//! Adam momentum 0.937). The fully resolved config is echoed into every
//! run's output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use detgeom::heads::HeadLayout;
use detgeom::loss::{LossKind, LossSpec};
use detgeom::metrics::Interp;
use detgeom::sim::SimConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpConfig {
    /// Exact area under the monotone envelope.
    #[default]
    AllPoints,
    /// COCO-style 101-point interpolation.
    NPoint101,
}

impl From<InterpConfig> for Interp {
    fn from(c: InterpConfig) -> Interp {
        match c {
            InterpConfig::AllPoints => Interp::AllPoints,
            InterpConfig::NPoint101 => Interp::NPoint(101),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Thresholds averaged into the headline mAP (default 0.50..0.95).
    #[serde(default = "detgeom::metrics::coco_thresholds")]
    pub iou_thresholds: Vec<f64>,
    /// Matching threshold for curves and the confusion matrix.
    #[serde(default = "default_primary_iou")]
    pub primary_iou: f64,
    /// Confidence floor for the confusion matrix.
    #[serde(default = "default_conf_threshold")]
    pub conf_threshold: f64,
    /// NMS threshold used by the layout/decoding tools.
    #[serde(default = "default_nms_iou")]
    pub nms_iou: f64,
    #[serde(default)]
    pub interp: InterpConfig,
}

fn default_primary_iou() -> f64 {
    0.5
}

fn default_conf_threshold() -> f64 {
    0.25
}

fn default_nms_iou() -> f64 {
    0.45
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: detgeom::metrics::coco_thresholds(),
            primary_iou: default_primary_iou(),
            conf_threshold: default_conf_threshold(),
            nms_iou: default_nms_iou(),
            interp: InterpConfig::default(),
        }
    }
}

fn default_loss_spec() -> LossSpec {
    LossSpec::new(LossKind::SibIou)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the per-section seeds when present; the --seed flag in
    /// turn overrides this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_loss_spec")]
    pub loss: LossSpec,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub layout: HeadLayout,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: None,
            loss: default_loss_spec(),
            sim: SimConfig::default(),
            layout: HeadLayout::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.loss
            .validate()
            .map_err(|e| CliError::usage(format!("[loss] section: {e}")))?;
        self.sim
            .validate()
            .map_err(|e| CliError::usage(format!("[sim] section: {e}")))?;
        for &t in &self.metrics.iou_thresholds {
            if !(t > 0.0 && t < 1.0) {
                return Err(CliError::usage(format!(
                    "[metrics] iou threshold {t} outside (0, 1)"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.metrics.conf_threshold) {
            return Err(CliError::usage(format!(
                "[metrics] conf_threshold {} outside [0, 1)",
                self.metrics.conf_threshold
            )));
        }
        Ok(())
    }

    /// Apply the seed-resolution order: flag > top-level > section default.
    pub fn resolve_seed(&mut self, flag: Option<u64>) {
        if let Some(seed) = flag.or(self.seed) {
            self.seed = Some(seed);
            self.sim.seed = seed;
        }
    }

    /// The resolved-config echo written into the output directory. The
    /// output path itself is deliberately omitted so identical runs into
    /// different directories stay byte-identical.
    pub fn resolved_toml(&self) -> String {
        let mut echo = self.clone();
        echo.out_dir = None;
        toml::to_string_pretty(&echo).expect("config serializes")
    }
}
