//! Localization-based tracking on top of the base [`Tracker`].
//!
//! Detection runs on every `(d + 1)`-th frame. In between, each live tracklet
//! gets a square crop around its a-priori box, the localizer returns candidate
//! boxes in crop coordinates, and one candidate per crop is chosen by a
//! confidence-weighted score against the a-priori box:
//!
//! * sort mode: `D * conf - |center - prior center|`
//! * kiou mode: `W * conf + IoU(candidate, prior)`
//!
//! Selection is independent per crop, so there is no global matching step and
//! no tracklet is ever created on a localization frame.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{
    clip_crop, global_to_local, local_center_distance, local_iou, local_to_global, make_crop, Crop, FrameDims,
    GlobalBox, LocalBox,
};
use crate::perception::{Detector, FrameContext, LocalizeRequest, Localizer, LocalizerCandidate, PerceptionError};
use crate::simulator::GroundTruth;
use crate::tracker::{Detection, TrackHistory, TrackId, Tracker, TrackerConfig, TrackerError, TrackerMode};

#[derive(Debug, Error, PartialEq)]
pub enum LbtError {
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error("perception failed on frame {frame}: {source}")]
    Perception { frame: usize, source: PerceptionError },
    #[error("invalid lbt config: {0}")]
    InvalidConfig(String),
    #[error("localization results for {got} crops, expected {expected}")]
    ResultCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbtConfig {
    /// Frames skipped between detections; 0 runs the base tracker.
    pub d: usize,
    /// Crop expansion ratio.
    pub beta: f64,
    /// Localizer input side `C` in pixels.
    pub resolution: f64,
    /// Confidence/distance balance for sort-mode selection.
    pub selection_d: f64,
    /// Confidence/IoU balance for kiou-mode selection.
    pub selection_w: f64,
    /// Acceptance floor; `None` picks the per-mode default.
    pub min_selection_score: Option<f64>,
}

impl Default for LbtConfig {
    fn default() -> Self {
        Self {
            d: 3,
            beta: 2.0,
            resolution: 100.0,
            selection_d: 25.0,
            selection_w: 0.2,
            min_selection_score: None,
        }
    }
}

impl LbtConfig {
    pub fn with_d(d: usize) -> Self {
        Self { d, ..Self::default() }
    }

    pub fn selection_floor(&self, mode: TrackerMode) -> f64 {
        self.min_selection_score.unwrap_or(match mode {
            TrackerMode::Kiou => 0.5,
            TrackerMode::Sort => 0.0,
        })
    }

    pub fn validate(&self) -> Result<(), LbtError> {
        if !(self.beta.is_finite() && self.beta >= 1.0) {
            return Err(LbtError::InvalidConfig("beta must be >= 1".into()));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(LbtError::InvalidConfig("resolution must be > 0".into()));
        }
        if !self.selection_d.is_finite() || !self.selection_w.is_finite() {
            return Err(LbtError::InvalidConfig("selection weights must be finite".into()));
        }
        Ok(())
    }
}

pub fn is_detection_frame(frame_idx: usize, d: usize) -> bool {
    frame_idx.is_multiple_of(d + 1)
}

/// One clipped crop per a-priori box, ids preserved.
pub fn generate_crops(apriori: &[(TrackId, GlobalBox)], beta: f64, dims: &FrameDims) -> Vec<(TrackId, Crop)> {
    apriori.iter().map(|(id, b)| (*id, clip_crop(&make_crop(b, beta), dims))).collect()
}

pub fn selection_score(cand: &LocalizerCandidate, apriori_local: &LocalBox, cfg: &LbtConfig, mode: TrackerMode) -> f64 {
    match mode {
        TrackerMode::Sort => cfg.selection_d * cand.confidence - local_center_distance(&cand.bbox, apriori_local),
        TrackerMode::Kiou => cfg.selection_w * cand.confidence + local_iou(&cand.bbox, apriori_local),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub score: f64,
    pub bbox: LocalBox,
}

/// Highest-scoring candidate (first on ties), if it clears the floor.
pub fn select_best_output(
    candidates: &[LocalizerCandidate],
    apriori_local: &LocalBox,
    cfg: &LbtConfig,
    mode: TrackerMode,
) -> Option<Selection> {
    let mut best: Option<Selection> = None;
    for (index, c) in candidates.iter().enumerate() {
        if !c.bbox.is_valid() {
            continue;
        }
        let score = selection_score(c, apriori_local, cfg, mode);
        if best.is_none_or(|b| score > b.score) {
            best = Some(Selection { index, score, bbox: c.bbox });
        }
    }
    best.filter(|b| b.score >= cfg.selection_floor(mode))
}

/// A crop handed to the localizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropRequest {
    pub track_id: TrackId,
    pub crop: Crop,
    pub apriori: GlobalBox,
}

/// Crops for one localization frame, sorted by tracklet id.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationPlan {
    pub frame_idx: usize,
    pub resolution: f64,
    pub requests: Vec<CropRequest>,
}

impl LocalizationPlan {
    pub fn localize_request(&self, i: usize) -> LocalizeRequest {
        let r = &self.requests[i];
        LocalizeRequest { frame_idx: self.frame_idx, track_id: r.track_id, crop: r.crop, resolution: self.resolution }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LocalizationOutcome {
    pub crops: usize,
    pub selected: usize,
}

/// Base tracker plus the localization schedule for one sequence.
#[derive(Debug, Clone)]
pub struct LbtTracker {
    tracker: Tracker,
    cfg: LbtConfig,
    dims: FrameDims,
    pending: Option<LocalizationPlan>,
}

impl LbtTracker {
    pub fn new(base: TrackerConfig, cfg: LbtConfig, dims: FrameDims) -> Result<Self, LbtError> {
        cfg.validate()?;
        if dims.width == 0 || dims.height == 0 {
            return Err(LbtError::InvalidConfig("frame dims must be positive".into()));
        }
        Ok(Self { tracker: Tracker::new(base)?, cfg, dims, pending: None })
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn config(&self) -> &LbtConfig {
        &self.cfg
    }

    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    pub fn is_detection_frame(&self, frame_idx: usize) -> bool {
        is_detection_frame(frame_idx, self.cfg.d)
    }

    /// Detection frame through the base tracker. Detections below the
    /// tracker's `min_confidence` are dropped first.
    pub fn step_detection(&mut self, frame_idx: usize, detections: &[Detection]) -> Result<(), LbtError> {
        self.pending = None;
        let floor = self.tracker.config().min_confidence;
        let kept: Vec<Detection> = detections.iter().filter(|d| d.confidence >= floor).cloned().collect();
        self.tracker.process_detection_frame(frame_idx, &kept)?;
        Ok(())
    }

    /// Starts a localization frame: predicts and builds one crop per tracklet.
    pub fn begin_localization(&mut self, frame_idx: usize) -> Result<&LocalizationPlan, LbtError> {
        let priors = self.tracker.start_frame(frame_idx)?;
        let crops = generate_crops(&priors, self.cfg.beta, &self.dims);
        let requests = priors
            .iter()
            .zip(crops)
            .map(|((id, prior), (_, crop))| CropRequest { track_id: *id, crop, apriori: *prior })
            .collect();
        self.pending = Some(LocalizationPlan { frame_idx, resolution: self.cfg.resolution, requests });
        Ok(self.pending.as_ref().expect("just set"))
    }

    /// Plan of the localization frame begun but not yet finished.
    pub fn pending_plan(&self) -> Option<&LocalizationPlan> {
        self.pending.as_ref()
    }

    /// Completes the pending localization frame. `outputs[i]` holds the
    /// localizer result for `plan.requests[i]`; a failed call is a miss.
    pub fn finish_localization(
        &mut self,
        outputs: Vec<Result<Vec<LocalizerCandidate>, PerceptionError>>,
    ) -> Result<LocalizationOutcome, LbtError> {
        let plan = self.pending.take().ok_or(TrackerError::FrameNotStarted(self.tracker.last_frame().unwrap_or(0)))?;
        if outputs.len() != plan.requests.len() {
            let expected = plan.requests.len();
            self.pending = Some(plan);
            return Err(LbtError::ResultCount { expected, got: outputs.len() });
        }
        let mode = self.tracker.config().mode;
        let c = self.cfg.resolution;
        let mut selected = 0;
        let results: Vec<(TrackId, Option<GlobalBox>)> = plan
            .requests
            .iter()
            .zip(outputs)
            .map(|(req, out)| {
                let choice = out.ok().and_then(|cands| {
                    let prior_local = global_to_local(&req.apriori, &req.crop, c);
                    select_best_output(&cands, &prior_local, &self.cfg, mode)
                });
                let meas = choice.map(|s| local_to_global(&s.bbox, &req.crop, c));
                selected += usize::from(meas.is_some());
                (req.track_id, meas)
            })
            .collect();
        self.tracker.apply_measurements(plan.frame_idx, &results)?;
        Ok(LocalizationOutcome { crops: plan.requests.len(), selected })
    }

    /// Localization frame with an in-process localizer; crops are localized
    /// in parallel and applied in tracklet-id order.
    pub fn process_localization_frame(
        &mut self,
        frame_idx: usize,
        localizer: &dyn Localizer,
        ctx: &FrameContext<'_>,
    ) -> Result<LocalizationOutcome, LbtError> {
        let plan = self.begin_localization(frame_idx)?.clone();
        let outputs: Vec<_> = (0..plan.requests.len())
            .into_par_iter()
            .map(|i| localizer.localize(&plan.localize_request(i), ctx))
            .collect();
        self.finish_localization(outputs)
    }

    pub fn finalize(&self) -> Vec<TrackHistory> {
        self.tracker.finalize()
    }
}

/// Frame geometry and (optionally) ground truth handed to perception plugins.
#[derive(Debug, Clone, Copy)]
pub struct Sequence<'a> {
    pub dims: FrameDims,
    pub n_frames: usize,
    pub ground_truth: Option<&'a GroundTruth>,
}

impl<'a> Sequence<'a> {
    pub fn from_ground_truth(gt: &'a GroundTruth) -> Self {
        Self { dims: gt.dims, n_frames: gt.n_frames(), ground_truth: Some(gt) }
    }

    fn context(&self, frame_idx: usize) -> FrameContext<'a> {
        FrameContext { dims: self.dims, ground_truth: self.ground_truth.map(|g| g.frame(frame_idx)) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTiming {
    pub frame_idx: usize,
    pub detection: bool,
    /// Crops localized (0 on detection frames).
    pub crops: usize,
    /// Live tracklets after the frame.
    pub live: usize,
    pub wall: Duration,
}

#[derive(Debug, Clone)]
pub struct LbtRun {
    pub histories: Vec<TrackHistory>,
    pub timing: Vec<FrameTiming>,
}

pub fn run_lbt(
    detector: &mut dyn Detector,
    localizer: &dyn Localizer,
    seq: &Sequence<'_>,
    base_cfg: &TrackerConfig,
    lbt_cfg: &LbtConfig,
) -> Result<LbtRun, LbtError> {
    let mut lbt = LbtTracker::new(base_cfg.clone(), lbt_cfg.clone(), seq.dims)?;
    let mut timing = Vec::with_capacity(seq.n_frames);
    for frame_idx in 0..seq.n_frames {
        let ctx = seq.context(frame_idx);
        let started = Instant::now();
        let detection = lbt.is_detection_frame(frame_idx);
        let crops = if detection {
            let dets = detector
                .detect(frame_idx, &ctx)
                .map_err(|source| LbtError::Perception { frame: frame_idx, source })?;
            lbt.step_detection(frame_idx, &dets)?;
            0
        } else {
            lbt.process_localization_frame(frame_idx, localizer, &ctx)?.crops
        };
        timing.push(FrameTiming { frame_idx, detection, crops, live: lbt.tracker().live_count(), wall: started.elapsed() });
    }
    Ok(LbtRun { histories: lbt.finalize(), timing })
}

/// The non-extended loop: detection and association on every frame.
pub fn run_tracking_by_detection(
    detector: &mut dyn Detector,
    seq: &Sequence<'_>,
    base_cfg: &TrackerConfig,
) -> Result<Vec<TrackHistory>, LbtError> {
    let mut tracker = Tracker::new(base_cfg.clone())?;
    for frame_idx in 0..seq.n_frames {
        let mut dets = detector
            .detect(frame_idx, &seq.context(frame_idx))
            .map_err(|source| LbtError::Perception { frame: frame_idx, source })?;
        dets.retain(|d| d.confidence >= base_cfg.min_confidence);
        tracker.process_detection_frame(frame_idx, &dets)?;
    }
    Ok(tracker.finalize())
}
