//! Base tracker: predict, associate, initialize, update, retire.
//!
//! One `Tracker` handles one sequence and is driven in strictly increasing
//! frame order. Each frame starts with [`Tracker::start_frame`], which
//! advances every live Kalman filter and returns the a-priori boxes; the frame
//! is then completed either by detection association or by applying
//! per-tracklet localization results.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::association::{build_cost_matrix, solve_with, CostMetric, Gate, Matcher};
use crate::geometry::GlobalBox;
use crate::motion::{kf_init, kf_predict, kf_update, KalmanState, NoiseConfig};

pub type TrackId = u64;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("frame {frame} is not after the last processed frame {last}")]
    FrameOrder { frame: usize, last: usize },
    #[error("frame {0} has no a-priori state; call start_frame first")]
    FrameNotStarted(usize),
    #[error("unknown or retired tracklet {0}")]
    UnknownTracklet(TrackId),
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackerMode {
    /// Center-distance association.
    Sort,
    /// IoU association.
    Kiou,
}

impl TrackerMode {
    pub fn metric(self) -> CostMetric {
        match self {
            TrackerMode::Sort => CostMetric::Euclidean,
            TrackerMode::Kiou => CostMetric::Iou,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrackerMode::Sort => "sort",
            TrackerMode::Kiou => "kiou",
        }
    }
}

impl std::str::FromStr for TrackerMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sort" => Ok(TrackerMode::Sort),
            "kiou" => Ok(TrackerMode::Kiou),
            other => Err(format!("unknown tracker mode `{other}` (expected sort|kiou)")),
        }
    }
}

/// Which box is written to a tracklet's history on an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputBox {
    /// Kalman a-posteriori estimate.
    #[default]
    Posterior,
    /// The raw measurement (detection or selected localizer box).
    Measurement,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub mode: TrackerMode,
    /// Consecutive updates before a tentative tracklet is confirmed.
    pub min_hits: u32,
    /// Consecutive misses tolerated before removal.
    pub max_age: u32,
    /// Let a localization hit clear the miss count. Off by default: only a
    /// detection match does, so a tracklet the detector keeps rejecting dies
    /// even while a localizer keeps finding something in its crop.
    pub localization_resets_misses: bool,
    /// IoU gate for kiou association.
    pub min_iou: f64,
    /// Euclidean gate as a multiple of `sqrt(w * h)` of the a-priori box.
    pub euclidean_gate_scale: f64,
    /// Detections below this confidence are discarded before matching.
    pub min_confidence: f64,
    pub matcher: Matcher,
    /// Emit never-confirmed tracklets from `finalize`.
    pub keep_tentative: bool,
    pub output: OutputBox,
    pub noise: NoiseConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            mode: TrackerMode::Kiou,
            min_hits: 2,
            max_age: 3,
            localization_resets_misses: false,
            min_iou: 0.3,
            euclidean_gate_scale: 0.5,
            min_confidence: 0.5,
            matcher: Matcher::Hungarian,
            keep_tentative: false,
            output: OutputBox::Posterior,
            noise: NoiseConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn with_mode(mode: TrackerMode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        let bad = |m: &str| Err(TrackerError::InvalidConfig(m.to_string()));
        if self.min_hits < 1 {
            return bad("min_hits must be >= 1");
        }
        if self.max_age < 1 {
            return bad("max_age must be >= 1");
        }
        if !(self.min_iou > 0.0 && self.min_iou <= 1.0) {
            return bad("min_iou must be in (0, 1]");
        }
        if !(self.euclidean_gate_scale.is_finite() && self.euclidean_gate_scale > 0.0) {
            return bad("euclidean_gate_scale must be positive");
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return bad("min_confidence must be in [0, 1]");
        }
        if !self.noise.is_valid() {
            return bad("noise variances must be positive");
        }
        Ok(())
    }

    fn gate_for(&self, priors: &[GlobalBox]) -> Gate {
        match self.mode {
            TrackerMode::Kiou => Gate::Uniform(1.0 - self.min_iou),
            TrackerMode::Sort => {
                Gate::PerRow(priors.iter().map(|b| self.euclidean_gate_scale * (b.w * b.h).sqrt()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: GlobalBox,
    pub confidence: f64,
    pub class: Option<u32>,
}

impl Detection {
    pub fn new(bbox: GlobalBox, confidence: f64) -> Self {
        Self { bbox, confidence, class: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    /// Confirmed but missed on the latest frame.
    Lost,
    Removed,
}

#[derive(Debug, Clone)]
pub struct Tracklet {
    pub id: TrackId,
    pub kstate: KalmanState,
    pub status: TrackStatus,
    pub hits: u32,
    pub misses: u32,
    pub age: u32,
    pub class: Option<u32>,
    pub history: BTreeMap<usize, GlobalBox>,
    prior: Option<(usize, GlobalBox)>,
    confirmed_once: bool,
}

impl Tracklet {
    pub fn is_live(&self) -> bool {
        self.status != TrackStatus::Removed
    }

    pub fn was_confirmed(&self) -> bool {
        self.confirmed_once
    }

    /// A-priori box for the frame most recently started.
    pub fn prior(&self) -> Option<GlobalBox> {
        self.prior.map(|(_, b)| b)
    }
}

/// Finished output for one tracklet.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackHistory {
    pub id: TrackId,
    pub class: Option<u32>,
    pub boxes: BTreeMap<usize, GlobalBox>,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    live: Vec<Tracklet>,
    retired: Vec<Tracklet>,
    next_id: TrackId,
    last_frame: Option<usize>,
    current_frame: Option<usize>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, TrackerError> {
        cfg.validate()?;
        Ok(Self { cfg, live: Vec::new(), retired: Vec::new(), next_id: 0, last_frame: None, current_frame: None })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live tracklets in id order.
    pub fn tracklets(&self) -> &[Tracklet] {
        &self.live
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.last_frame
    }

    /// Advances every live filter one frame and returns `(id, a-priori box)`.
    ///
    /// Prefer [`Tracker::start_frame`], which also enforces frame order.
    pub fn predict_all(&mut self) -> Vec<(TrackId, GlobalBox)> {
        let frame = self.current_frame.unwrap_or(0);
        let noise = self.cfg.noise;
        self.live
            .iter_mut()
            .map(|t| {
                let (next, prior) = kf_predict(&t.kstate, &noise);
                t.kstate = next;
                t.age += 1;
                t.prior = Some((frame, prior));
                (t.id, prior)
            })
            .collect()
    }

    /// Begins `frame_idx`: checks ordering and runs the a-priori prediction.
    pub fn start_frame(&mut self, frame_idx: usize) -> Result<Vec<(TrackId, GlobalBox)>, TrackerError> {
        if let Some(last) = self.last_frame {
            if frame_idx <= last {
                return Err(TrackerError::FrameOrder { frame: frame_idx, last });
            }
        }
        self.last_frame = Some(frame_idx);
        self.current_frame = Some(frame_idx);
        Ok(self.predict_all())
    }

    /// Full detection frame: predict, associate, initialize, update, retire.
    pub fn process_detection_frame(&mut self, frame_idx: usize, detections: &[Detection]) -> Result<(), TrackerError> {
        self.start_frame(frame_idx)?;
        self.associate(frame_idx, detections)
    }

    /// Association half of a detection frame; `start_frame` must have run.
    pub fn associate(&mut self, frame_idx: usize, detections: &[Detection]) -> Result<(), TrackerError> {
        self.ensure_started(frame_idx)?;

        // Matching is partitioned by class label.
        let mut groups: BTreeMap<Option<u32>, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for (i, t) in self.live.iter().enumerate() {
            groups.entry(t.class).or_default().0.push(i);
        }
        for (j, d) in detections.iter().enumerate() {
            groups.entry(d.class).or_default().1.push(j);
        }

        let mut matched_rows = vec![false; self.live.len()];
        let mut matches = Vec::new();
        let mut unmatched_dets = Vec::new();
        for (rows, cols) in groups.values() {
            let priors: Vec<GlobalBox> = rows.iter().map(|&i| self.live[i].prior().expect("predicted")).collect();
            let boxes: Vec<GlobalBox> = cols.iter().map(|&j| detections[j].bbox).collect();
            let costs = build_cost_matrix(&priors, &boxes, self.cfg.mode.metric());
            let assignment = solve_with(self.cfg.matcher, &costs, &self.cfg.gate_for(&priors));
            for (r, c) in assignment.matches {
                matched_rows[rows[r]] = true;
                matches.push((rows[r], cols[c]));
            }
            unmatched_dets.extend(assignment.unmatched_cols.iter().map(|&c| cols[c]));
        }

        for (i, j) in matches {
            self.update_index(i, frame_idx, &detections[j].bbox, true);
        }
        for (i, matched) in matched_rows.iter().enumerate() {
            if !matched {
                self.miss_index(i);
            }
        }
        unmatched_dets.sort_unstable();
        for j in unmatched_dets {
            self.spawn(frame_idx, &detections[j]);
        }
        self.retire();
        self.current_frame = None;
        Ok(())
    }

    /// Applies per-tracklet measurements for a frame started with
    /// `start_frame`. `None` counts as a miss; tracklets absent from
    /// `results` also count as missed. No tracklets are created. Hits clear
    /// the miss count only with `localization_resets_misses`.
    pub fn apply_measurements(
        &mut self,
        frame_idx: usize,
        results: &[(TrackId, Option<GlobalBox>)],
    ) -> Result<(), TrackerError> {
        self.ensure_started(frame_idx)?;
        let mut by_id: BTreeMap<TrackId, Option<GlobalBox>> = BTreeMap::new();
        for (id, m) in results {
            if self.index_of(*id).is_none() {
                return Err(TrackerError::UnknownTracklet(*id));
            }
            by_id.insert(*id, *m);
        }
        for i in 0..self.live.len() {
            match by_id.get(&self.live[i].id).copied().flatten() {
                Some(meas) => self.update_index(i, frame_idx, &meas, self.cfg.localization_resets_misses),
                None => self.miss_index(i),
            }
        }
        self.retire();
        self.current_frame = None;
        Ok(())
    }

    /// Confirmed tracklets (or all, with `keep_tentative`) in id order.
    pub fn finalize(&self) -> Vec<TrackHistory> {
        let mut out: Vec<TrackHistory> = self
            .retired
            .iter()
            .chain(self.live.iter())
            .filter(|t| (t.confirmed_once || self.cfg.keep_tentative) && !t.history.is_empty())
            .map(|t| TrackHistory { id: t.id, class: t.class, boxes: t.history.clone() })
            .collect();
        out.sort_by_key(|h| h.id);
        out
    }

    fn ensure_started(&self, frame_idx: usize) -> Result<(), TrackerError> {
        if self.current_frame != Some(frame_idx) {
            return Err(TrackerError::FrameNotStarted(frame_idx));
        }
        Ok(())
    }

    fn index_of(&self, id: TrackId) -> Option<usize> {
        self.live.binary_search_by_key(&id, |t| t.id).ok()
    }

    fn update_index(&mut self, i: usize, frame_idx: usize, meas: &GlobalBox, reset_misses: bool) {
        let cfg = &self.cfg;
        let t = &mut self.live[i];
        t.kstate = kf_update(&t.kstate, meas, &cfg.noise);
        t.hits += 1;
        if reset_misses {
            t.misses = 0;
        }
        let out = match cfg.output {
            OutputBox::Posterior => t.kstate.to_box(),
            OutputBox::Measurement => *meas,
        };
        t.history.insert(frame_idx, out);
        match t.status {
            TrackStatus::Tentative if t.hits >= cfg.min_hits => {
                t.status = TrackStatus::Confirmed;
                t.confirmed_once = true;
            }
            TrackStatus::Lost => t.status = TrackStatus::Confirmed,
            _ => {}
        }
    }

    fn miss_index(&mut self, i: usize) {
        let t = &mut self.live[i];
        t.misses += 1;
        t.hits = 0;
        if t.status == TrackStatus::Confirmed {
            t.status = TrackStatus::Lost;
        }
    }

    fn spawn(&mut self, frame_idx: usize, det: &Detection) {
        let kstate = kf_init(&det.bbox, &self.cfg.noise);
        let confirmed = self.cfg.min_hits <= 1;
        let mut history = BTreeMap::new();
        let out = match self.cfg.output {
            OutputBox::Posterior => kstate.to_box(),
            OutputBox::Measurement => det.bbox,
        };
        history.insert(frame_idx, out);
        self.live.push(Tracklet {
            id: self.next_id,
            kstate,
            status: if confirmed { TrackStatus::Confirmed } else { TrackStatus::Tentative },
            hits: 1,
            misses: 0,
            age: 0,
            class: det.class,
            history,
            prior: None,
            confirmed_once: confirmed,
        });
        self.next_id += 1;
    }

    fn retire(&mut self) {
        let max_age = self.cfg.max_age;
        let (gone, keep): (Vec<Tracklet>, Vec<Tracklet>) =
            std::mem::take(&mut self.live).into_iter().partition(|t| t.misses > max_age);
        self.live = keep;
        self.retired.extend(gone.into_iter().map(|mut t| {
            t.status = TrackStatus::Removed;
            t
        }));
    }
}

/// Runs the plain tracking-by-detection loop over per-frame detections.
pub fn run_base_tracker(
    cfg: &TrackerConfig,
    frames: impl IntoIterator<Item = Vec<Detection>>,
) -> Result<Vec<TrackHistory>, TrackerError> {
    let mut tracker = Tracker::new(cfg.clone())?;
    for (frame_idx, mut dets) in frames.into_iter().enumerate() {
        dets.retain(|d| d.confidence >= cfg.min_confidence);
        tracker.process_detection_frame(frame_idx, &dets)?;
    }
    Ok(tracker.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, w: f64, h: f64) -> Detection {
        Detection::new(GlobalBox::new(x, y, w, h), 0.9)
    }

    #[test]
    fn predict_all_examples() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        assert!(t.predict_all().is_empty());

        t.process_detection_frame(0, &[det(100.0, 100.0, 20.0, 20.0)]).unwrap();
        let priors = t.start_frame(1).unwrap();
        assert_eq!(priors, vec![(0, GlobalBox::new(100.0, 100.0, 20.0, 20.0))]);

        let mut moving = Tracker::new(TrackerConfig::default()).unwrap();
        moving.process_detection_frame(0, &[det(0.0, 0.0, 20.0, 20.0)]).unwrap();
        moving.live[0].kstate.mean[4] = 2.0;
        let priors = moving.start_frame(1).unwrap();
        assert_eq!(priors[0].1.x, 2.0);
    }

    #[test]
    fn cold_start_spawns_tentative_tracklets() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.process_detection_frame(0, &[det(10.0, 10.0, 5.0, 5.0), det(50.0, 50.0, 5.0, 5.0), det(90.0, 90.0, 5.0, 5.0)])
            .unwrap();
        assert_eq!(t.live_count(), 3);
        assert!(t.tracklets().iter().all(|k| k.status == TrackStatus::Tentative));
        assert_eq!(t.tracklets().iter().map(|k| k.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn overlapping_detection_is_matched() {
        let mut t = Tracker::new(TrackerConfig::with_mode(TrackerMode::Kiou)).unwrap();
        t.process_detection_frame(0, &[det(100.0, 100.0, 40.0, 40.0)]).unwrap();
        // shift by 2px: IoU = 38*40 / (2*1600 - 38*40) ~= 0.905
        t.process_detection_frame(1, &[det(102.0, 100.0, 40.0, 40.0)]).unwrap();
        assert_eq!(t.live_count(), 1);
        assert_eq!(t.tracklets()[0].history.len(), 2);
        assert_eq!(t.tracklets()[0].status, TrackStatus::Confirmed);
    }

    #[test]
    fn sort_mode_gates_on_scaled_distance() {
        let mut t = Tracker::new(TrackerConfig::with_mode(TrackerMode::Sort)).unwrap();
        t.process_detection_frame(0, &[det(100.0, 100.0, 40.0, 40.0)]).unwrap();
        // gate = 0.5 * 40 = 20 px
        t.process_detection_frame(1, &[det(125.0, 100.0, 40.0, 40.0)]).unwrap();
        assert_eq!(t.live_count(), 2);
        t.process_detection_frame(2, &[det(100.0, 115.0, 40.0, 40.0)]).unwrap();
        assert_eq!(t.tracklets()[0].history.len(), 2);
    }

    #[test]
    fn classes_never_cross_match() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let mut a = det(100.0, 100.0, 40.0, 40.0);
        a.class = Some(1);
        t.process_detection_frame(0, &[a.clone()]).unwrap();
        let mut b = a.clone();
        b.class = Some(2);
        t.process_detection_frame(1, &[b]).unwrap();
        assert_eq!(t.live_count(), 2);
        t.process_detection_frame(2, &[a]).unwrap();
        assert_eq!(t.tracklets()[0].history.len(), 2);
    }

    #[test]
    fn frame_order_is_enforced() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.process_detection_frame(3, &[]).unwrap();
        assert_eq!(t.process_detection_frame(3, &[]), Err(TrackerError::FrameOrder { frame: 3, last: 3 }));
        assert_eq!(t.process_detection_frame(1, &[]), Err(TrackerError::FrameOrder { frame: 1, last: 3 }));
        assert_eq!(t.associate(4, &[]), Err(TrackerError::FrameNotStarted(4)));
    }

    #[test]
    fn misses_retire_after_max_age() {
        let cfg = TrackerConfig { max_age: 3, ..TrackerConfig::default() };
        let mut t = Tracker::new(cfg).unwrap();
        t.process_detection_frame(0, &[det(10.0, 10.0, 8.0, 8.0)]).unwrap();
        for f in 1..=3 {
            t.process_detection_frame(f, &[]).unwrap();
            assert_eq!(t.live_count(), 1);
        }
        t.process_detection_frame(4, &[]).unwrap();
        assert_eq!(t.live_count(), 0);
    }

    #[test]
    fn localization_hits_keep_detector_misses() {
        let b = GlobalBox::new(10.0, 10.0, 8.0, 8.0);
        let run = |resets: bool| {
            let cfg = TrackerConfig { max_age: 1, localization_resets_misses: resets, ..TrackerConfig::default() };
            let mut t = Tracker::new(cfg).unwrap();
            t.process_detection_frame(0, &[det(10.0, 10.0, 8.0, 8.0)]).unwrap();
            let id = t.tracklets()[0].id;
            // detector misses, localizer hits, twice over
            for f in [1, 3] {
                t.process_detection_frame(f, &[]).unwrap();
                let live: Vec<_> = t.start_frame(f + 1).unwrap().into_iter().map(|(i, _)| (i, Some(b))).collect();
                assert!(live.iter().all(|(i, _)| *i == id));
                t.apply_measurements(f + 1, &live).unwrap();
            }
            t.live_count()
        };
        assert_eq!(run(false), 0);
        assert_eq!(run(true), 1);
    }

    #[test]
    fn finalize_examples() {
        let t = Tracker::new(TrackerConfig::default()).unwrap();
        assert!(t.finalize().is_empty());

        let cfg = TrackerConfig { min_hits: 3, ..TrackerConfig::default() };
        let mut blip = Tracker::new(cfg.clone()).unwrap();
        blip.process_detection_frame(0, &[det(10.0, 10.0, 8.0, 8.0)]).unwrap();
        for f in 1..10 {
            blip.process_detection_frame(f, &[]).unwrap();
        }
        assert!(blip.finalize().is_empty());
        let keep = TrackerConfig { keep_tentative: true, ..cfg };
        let mut kept = Tracker::new(keep).unwrap();
        kept.process_detection_frame(0, &[det(10.0, 10.0, 8.0, 8.0)]).unwrap();
        assert_eq!(kept.finalize().len(), 1);
    }

    #[test]
    fn measurements_only_touch_known_tracklets() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.process_detection_frame(0, &[det(10.0, 10.0, 8.0, 8.0)]).unwrap();
        t.start_frame(1).unwrap();
        assert_eq!(
            t.apply_measurements(1, &[(7, Some(GlobalBox::new(1.0, 1.0, 1.0, 1.0)))]),
            Err(TrackerError::UnknownTracklet(7))
        );
        t.apply_measurements(1, &[(0, Some(GlobalBox::new(11.0, 10.0, 8.0, 8.0)))]).unwrap();
        assert_eq!(t.live_count(), 1);
        assert_eq!(t.tracklets()[0].history.len(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(Tracker::new(TrackerConfig { min_hits: 0, ..TrackerConfig::default() }).is_err());
        assert!(Tracker::new(TrackerConfig { max_age: 0, ..TrackerConfig::default() }).is_err());
        assert!(Tracker::new(TrackerConfig { min_confidence: 1.5, ..TrackerConfig::default() }).is_err());
    }
}
