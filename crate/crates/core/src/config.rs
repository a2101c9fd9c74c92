//! Run configuration: one TOML file with a section per component, plus
//! command-line overrides. Missing keys take defaults; unknown keys are errors.
//!
//! ```toml
//! [tracker]
//! mode = "kiou"
//! min_hits = 2
//!
//! [lbt]
//! d = 3
//! beta = 2.0
//!
//! [run]
//! seed = 7
//! sweep_d = [0, 1, 3, 7, 15, 31]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::lbt::LbtConfig;
use crate::perception::{CostModel, DetectorNoise, LocalizerNoise};
use crate::simulator::SceneConfig;
use crate::tracker::{TrackerConfig, TrackerMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Syntax(String),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    /// Noisy detections synthesized from ground truth.
    #[default]
    Oracle,
    /// Detections read from a MOT file.
    File,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Master seed; when set it replaces the scene, detector and localizer seeds.
    pub seed: Option<u64>,
    pub detector: DetectorKind,
    /// MOT detection file for the file detector.
    pub detections: Option<PathBuf>,
    /// MOT ground-truth file; without it a scene is simulated.
    pub gt: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub sweep_d: Vec<usize>,
    /// IoU needed for a metrics match.
    pub match_iou: f64,
    /// Average sweep metrics over the confidence-threshold grid.
    pub pr: bool,
    /// Repetitions per d for `bench`.
    pub bench_repeats: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: None,
            detector: DetectorKind::Oracle,
            detections: None,
            gt: None,
            out: None,
            sweep_d: vec![0, 1, 3, 7, 15, 31],
            match_iou: 0.5,
            pr: false,
            bench_repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub lbt: LbtConfig,
    pub scene: SceneConfig,
    pub detector: DetectorNoise,
    pub localizer: LocalizerNoise,
    pub cost: CostModel,
    pub run: RunSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub d: Option<usize>,
    pub beta: Option<f64>,
    pub localizer_size: Option<f64>,
    pub tracker: Option<TrackerMode>,
    pub detector: Option<DetectorKind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    /// Loads `path` (or defaults), applies overrides and validates.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = o.d {
            self.lbt.d = d;
        }
        if let Some(b) = o.beta {
            self.lbt.beta = b;
        }
        if let Some(c) = o.localizer_size {
            self.lbt.resolution = c;
        }
        if let Some(m) = o.tracker {
            self.tracker.mode = m;
        }
        if let Some(k) = o.detector {
            self.run.detector = k;
        }
        if let Some(s) = o.seed {
            self.run.seed = Some(s);
        }
        if let Some(p) = &o.out {
            self.run.out = Some(p.clone());
        }
        if let Some(s) = self.run.seed {
            self.scene.seed = s;
            self.detector.seed = s;
            self.localizer.seed = s;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.tracker.validate().map_err(|e| invalid(e.to_string()))?;
        self.lbt.validate().map_err(|e| invalid(e.to_string()))?;
        self.scene.validate().map_err(|e| invalid(format!("scene: {e}")))?;
        self.detector.validate().map_err(|e| invalid(format!("detector: {e}")))?;
        self.localizer.validate().map_err(|e| invalid(format!("localizer: {e}")))?;
        self.cost.validate().map_err(|e| invalid(format!("cost: {e}")))?;
        if !(self.run.match_iou > 0.0 && self.run.match_iou <= 1.0) {
            return Err(invalid("run.match_iou must be in (0, 1]".into()));
        }
        if self.run.sweep_d.is_empty() {
            return Err(invalid("run.sweep_d must not be empty".into()));
        }
        if self.run.bench_repeats == 0 {
            return Err(invalid("run.bench_repeats must be >= 1".into()));
        }
        if self.run.detector == DetectorKind::File && self.run.detections.is_none() {
            return Err(invalid("the file detector needs run.detections".into()));
        }
        Ok(())
    }
}
