//! Detector and localizer plugins.
//!
//! The oracles work from ground-truth geometry plus seeded noise; no pixels
//! are involved. Randomness is drawn from per-call streams keyed on
//! `(seed, frame, tracklet)`, so a detector produces the same output for a
//! frame no matter which other frames were processed, and localizer calls can
//! run in any order.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{global_to_local, Crop, FrameDims, GlobalBox, LocalBox};
use crate::rng::{stream_rng, Stream};
use crate::simulator::ObjectId;
use crate::tracker::{Detection, TrackId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("frame {0}: oracle perception needs ground truth")]
    MissingGroundTruth(usize),
    #[error("frame {frame}: {message}")]
    Failed { frame: usize, message: String },
}

/// What a plugin may see about the current frame besides the request itself.
#[derive(Debug, Clone, Copy)]
pub struct FrameContext<'a> {
    pub dims: FrameDims,
    /// Present in oracle mode only.
    pub ground_truth: Option<&'a [(ObjectId, GlobalBox)]>,
}

pub trait Detector {
    fn detect(&mut self, frame_idx: usize, ctx: &FrameContext<'_>) -> Result<Vec<Detection>, PerceptionError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizeRequest {
    pub frame_idx: usize,
    pub track_id: TrackId,
    pub crop: Crop,
    /// Localizer input side `C` in pixels.
    pub resolution: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizerCandidate {
    pub bbox: LocalBox,
    pub confidence: f64,
}

/// A localizer is called once per crop and may be called concurrently.
pub trait Localizer: Sync {
    fn localize(&self, req: &LocalizeRequest, ctx: &FrameContext<'_>) -> Result<Vec<LocalizerCandidate>, PerceptionError>;
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorNoise {
    /// Probability a ground-truth box is not reported.
    pub fn_rate: f64,
    /// Mean number of spurious boxes per frame (Poisson).
    pub fp_per_frame: f64,
    /// Center jitter std as a fraction of box width/height.
    pub pos_sigma: f64,
    /// Size jitter std as a fraction of box width/height.
    pub size_sigma: f64,
    pub conf_tp_mean: f64,
    pub conf_fp_mean: f64,
    pub conf_spread: f64,
    /// Side range in pixels for spurious boxes.
    pub fp_size_min: f64,
    pub fp_size_max: f64,
    pub seed: u64,
}

impl Default for DetectorNoise {
    fn default() -> Self {
        Self {
            fn_rate: 0.05,
            fp_per_frame: 1.0,
            pos_sigma: 0.03,
            size_sigma: 0.03,
            conf_tp_mean: 0.85,
            conf_fp_mean: 0.45,
            conf_spread: 0.1,
            fp_size_min: 20.0,
            fp_size_max: 80.0,
            seed: 0,
        }
    }
}

impl DetectorNoise {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            fn_rate: 0.0,
            fp_per_frame: 0.0,
            pos_sigma: 0.0,
            size_sigma: 0.0,
            conf_tp_mean: 1.0,
            conf_fp_mean: 0.0,
            conf_spread: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.fn_rate) {
            return Err("detector fn_rate must be in [0, 1]".into());
        }
        if !(self.fp_per_frame >= 0.0 && self.fp_per_frame.is_finite()) {
            return Err("detector fp_per_frame must be >= 0".into());
        }
        if self.pos_sigma < 0.0 || self.size_sigma < 0.0 || self.conf_spread < 0.0 {
            return Err("detector sigmas must be >= 0".into());
        }
        if !(self.fp_size_min > 0.0 && self.fp_size_min <= self.fp_size_max) {
            return Err("detector fp size range must be positive and ordered".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizerNoise {
    /// Candidates returned per crop.
    pub l_max: usize,
    pub pos_sigma: f64,
    pub size_sigma: f64,
    pub target_conf_mean: f64,
    pub clutter_conf_mean: f64,
    pub conf_spread: f64,
    pub seed: u64,
}

impl Default for LocalizerNoise {
    fn default() -> Self {
        Self {
            l_max: 8,
            pos_sigma: 0.03,
            size_sigma: 0.03,
            target_conf_mean: 0.9,
            clutter_conf_mean: 0.1,
            conf_spread: 0.05,
            seed: 0,
        }
    }
}

impl LocalizerNoise {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            pos_sigma: 0.0,
            size_sigma: 0.0,
            target_conf_mean: 1.0,
            clutter_conf_mean: 0.0,
            conf_spread: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.l_max < 1 {
            return Err("localizer l_max must be >= 1".into());
        }
        if self.pos_sigma < 0.0 || self.size_sigma < 0.0 || self.conf_spread < 0.0 {
            return Err("localizer sigmas must be >= 0".into());
        }
        Ok(())
    }
}

/// Latency model for simulated throughput.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    pub detect_ms: f64,
    pub loc_batch_ms: f64,
    pub loc_crop_ms: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { detect_ms: 40.0, loc_batch_ms: 2.0, loc_crop_ms: 1.5 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), String> {
        if [self.detect_ms, self.loc_batch_ms, self.loc_crop_ms].iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err("cost model latencies must be >= 0".into())
        }
    }
}

pub fn simulate_frame_time(is_detection: bool, n_crops: usize, cm: &CostModel) -> f64 {
    if is_detection {
        cm.detect_ms
    } else {
        cm.loc_batch_ms + cm.loc_crop_ms * n_crops as f64
    }
}

fn clipped_gaussian(rng: &mut impl Rng, mean: f64, spread: f64) -> f64 {
    if spread == 0.0 {
        return mean.clamp(0.0, 1.0);
    }
    (mean + spread * standard_normal(rng)).clamp(0.0, 1.0)
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

fn jitter(rng: &mut impl Rng, b: &GlobalBox, pos_sigma: f64, size_sigma: f64) -> GlobalBox {
    if pos_sigma == 0.0 && size_sigma == 0.0 {
        return *b;
    }
    GlobalBox::new(
        b.x + pos_sigma * b.w * standard_normal(rng),
        b.y + pos_sigma * b.h * standard_normal(rng),
        (b.w * (1.0 + size_sigma * standard_normal(rng))).max(1.0),
        (b.h * (1.0 + size_sigma * standard_normal(rng))).max(1.0),
    )
}

/// Noisy full-frame detections derived from ground truth.
pub fn oracle_detect(
    gt_frame: &[(ObjectId, GlobalBox)],
    noise: &DetectorNoise,
    dims: &FrameDims,
    rng: &mut impl Rng,
) -> Vec<Detection> {
    let mut out = Vec::with_capacity(gt_frame.len());
    for (_, b) in gt_frame {
        if noise.fn_rate > 0.0 && rng.random_bool(noise.fn_rate) {
            continue;
        }
        let bbox = jitter(rng, b, noise.pos_sigma, noise.size_sigma);
        out.push(Detection::new(bbox, clipped_gaussian(rng, noise.conf_tp_mean, noise.conf_spread)));
    }
    if noise.fp_per_frame > 0.0 {
        let count = Poisson::new(noise.fp_per_frame).expect("positive rate").sample(rng) as usize;
        let (fw, fh) = (dims.width as f64, dims.height as f64);
        for _ in 0..count {
            let w = rng.random_range(noise.fp_size_min..=noise.fp_size_max).min(fw);
            let h = rng.random_range(noise.fp_size_min..=noise.fp_size_max).min(fh);
            let x = rng.random_range(w / 2.0..=fw - w / 2.0);
            let y = rng.random_range(h / 2.0..=fh - h / 2.0);
            let conf = clipped_gaussian(rng, noise.conf_fp_mean, noise.conf_spread);
            out.push(Detection::new(GlobalBox::new(x, y, w, h), conf));
        }
    }
    out
}

/// Candidates for one crop: a jittered box per ground-truth object that
/// overlaps the crop, padded with clutter up to `l_max`.
pub fn oracle_localize(
    crop: &Crop,
    gt_frame: &[(ObjectId, GlobalBox)],
    noise: &LocalizerNoise,
    resolution: f64,
    rng: &mut impl Rng,
) -> Vec<LocalizerCandidate> {
    let mut out = Vec::with_capacity(noise.l_max);
    for (_, b) in gt_frame {
        if !crop.intersects(b) {
            continue;
        }
        let noisy = jitter(rng, b, noise.pos_sigma, noise.size_sigma);
        let conf = clipped_gaussian(rng, noise.target_conf_mean, noise.conf_spread);
        if let Some(lb) = global_to_local(&noisy, crop, resolution).clip_to_window(resolution) {
            out.push(LocalizerCandidate { bbox: lb, confidence: conf });
        }
    }
    let half = resolution / 2.0;
    while out.len() < noise.l_max {
        let w = rng.random_range(0.05..=0.2) * resolution;
        let h = rng.random_range(0.05..=0.2) * resolution;
        let x = rng.random_range(-half + w / 2.0..=half - w / 2.0);
        let y = rng.random_range(-half + h / 2.0..=half - h / 2.0);
        let conf = clipped_gaussian(rng, noise.clutter_conf_mean, noise.conf_spread);
        out.push(LocalizerCandidate { bbox: LocalBox::new(x, y, w, h), confidence: conf });
    }
    out
}

#[derive(Debug, Clone)]
pub struct OracleDetector {
    pub noise: DetectorNoise,
}

impl OracleDetector {
    pub fn new(noise: DetectorNoise) -> Self {
        Self { noise }
    }
}

impl Detector for OracleDetector {
    fn detect(&mut self, frame_idx: usize, ctx: &FrameContext<'_>) -> Result<Vec<Detection>, PerceptionError> {
        let gt = ctx.ground_truth.ok_or(PerceptionError::MissingGroundTruth(frame_idx))?;
        let mut rng: ChaCha8Rng = stream_rng(self.noise.seed, Stream::Detect, frame_idx as u64, 0);
        Ok(oracle_detect(gt, &self.noise, &ctx.dims, &mut rng))
    }
}

#[derive(Debug, Clone)]
pub struct OracleLocalizer {
    pub noise: LocalizerNoise,
}

impl OracleLocalizer {
    pub fn new(noise: LocalizerNoise) -> Self {
        Self { noise }
    }
}

impl Localizer for OracleLocalizer {
    fn localize(&self, req: &LocalizeRequest, ctx: &FrameContext<'_>) -> Result<Vec<LocalizerCandidate>, PerceptionError> {
        let gt = ctx.ground_truth.ok_or(PerceptionError::MissingGroundTruth(req.frame_idx))?;
        let mut rng: ChaCha8Rng = stream_rng(self.noise.seed, Stream::Localize, req.frame_idx as u64, req.track_id);
        Ok(oracle_localize(&req.crop, gt, &self.noise, req.resolution, &mut rng))
    }
}

/// Per-frame detections loaded from a file, keyed by 0-based frame index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionStore {
    pub frames: BTreeMap<usize, Vec<Detection>>,
}

impl DetectionStore {
    pub fn frame_count(&self) -> usize {
        self.frames.keys().next_back().map_or(0, |k| k + 1)
    }
}

pub fn file_detect(store: &DetectionStore, frame_idx: usize) -> Vec<Detection> {
    store.frames.get(&frame_idx).cloned().unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct FileDetector {
    pub store: DetectionStore,
}

impl Detector for FileDetector {
    fn detect(&mut self, frame_idx: usize, _ctx: &FrameContext<'_>) -> Result<Vec<Detection>, PerceptionError> {
        Ok(file_detect(&self.store, frame_idx))
    }
}

/// Localizer that never finds anything; every localization frame is a miss.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullLocalizer;

impl Localizer for NullLocalizer {
    fn localize(&self, _req: &LocalizeRequest, _ctx: &FrameContext<'_>) -> Result<Vec<LocalizerCandidate>, PerceptionError> {
        Ok(Vec::new())
    }
}
