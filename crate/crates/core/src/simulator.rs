//! Synthetic multi-object scenes and the schedule-induced miss analysis.
//!
//! Objects arrive by a Poisson process, enter touching a frame edge while
//! heading inward, and leave when their lifetime ends or their box would cross
//! the frame boundary. Boxes therefore always lie fully inside the frame.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Deserialize;

use crate::geometry::{FrameDims, GlobalBox};
use crate::rng::{stream_rng, Stream};

pub type ObjectId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionModel {
    #[default]
    ConstantVelocity,
    /// Heading rotates by a fixed per-object rate.
    GentleTurn,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub n_frames: usize,
    /// Mean new objects per frame.
    pub arrival_rate: f64,
    pub lifetime_min: usize,
    pub lifetime_max: usize,
    /// Pixels per frame.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Box side range in pixels (width and height drawn independently).
    pub size_min: f64,
    pub size_max: f64,
    pub motion: MotionModel,
    /// Maximum heading change in radians per frame for `gentle-turn`.
    pub turn_rate_max: f64,
    /// Reject arrivals that would come near an existing object.
    pub exclusive: bool,
    /// In exclusive mode, objects are kept apart by squares of this many
    /// times their larger side.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 1080,
            n_frames: 1000,
            arrival_rate: 0.04,
            lifetime_min: 100,
            lifetime_max: 400,
            speed_min: 1.0,
            speed_max: 4.0,
            size_min: 30.0,
            size_max: 90.0,
            motion: MotionModel::ConstantVelocity,
            turn_rate_max: 0.01,
            exclusive: false,
            separation: 3.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn dims(&self) -> FrameDims {
        FrameDims::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("scene dims must be positive".into());
        }
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return Err("arrival_rate must be >= 0".into());
        }
        if !(self.lifetime_min >= 1 && self.lifetime_min <= self.lifetime_max) {
            return Err("lifetime range must be positive and ordered".into());
        }
        if !(self.speed_min >= 0.0 && self.speed_min <= self.speed_max) {
            return Err("speed range must be nonnegative and ordered".into());
        }
        if !(self.size_min > 0.0 && self.size_min <= self.size_max) {
            return Err("size range must be positive and ordered".into());
        }
        if self.size_max > self.width.min(self.height) as f64 {
            return Err("size_max must fit inside the frame".into());
        }
        if self.turn_rate_max < 0.0 || self.separation <= 0.0 {
            return Err("turn_rate_max must be >= 0 and separation > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectSpan {
    pub id: ObjectId,
    pub first: usize,
    pub last: usize,
}

impl ObjectSpan {
    pub fn lifetime(&self) -> usize {
        self.last - self.first + 1
    }
}

/// Per-frame ground truth with per-object spans.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dims: FrameDims,
    pub frames: Vec<Vec<(ObjectId, GlobalBox)>>,
    pub objects: Vec<ObjectSpan>,
}

impl GroundTruth {
    /// Builds from per-frame rows; spans are derived, rows sorted by id.
    pub fn from_frames(dims: FrameDims, mut frames: Vec<Vec<(ObjectId, GlobalBox)>>) -> Self {
        let mut spans: std::collections::BTreeMap<ObjectId, (usize, usize)> = Default::default();
        for (f, rows) in frames.iter_mut().enumerate() {
            rows.sort_by_key(|r| r.0);
            for (id, _) in rows.iter() {
                let e = spans.entry(*id).or_insert((f, f));
                e.1 = f;
            }
        }
        let objects = spans.into_iter().map(|(id, (first, last))| ObjectSpan { id, first, last }).collect();
        Self { dims, frames, objects }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn total_boxes(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn frame(&self, f: usize) -> &[(ObjectId, GlobalBox)] {
        self.frames.get(f).map_or(&[], Vec::as_slice)
    }
}

struct Trajectory {
    first: usize,
    boxes: Vec<GlobalBox>,
    v_start: (f64, f64),
    v_end: (f64, f64),
}

impl Trajectory {
    fn last(&self) -> usize {
        self.first + self.boxes.len() - 1
    }

    /// Box at `frame`, extrapolated linearly up to `pad` frames past either end.
    fn extended_box(&self, frame: isize, pad: isize) -> Option<GlobalBox> {
        let first = self.first as isize;
        let last = self.last() as isize;
        if frame < first - pad || frame > last + pad {
            return None;
        }
        if frame < first {
            let b = self.boxes[0];
            let k = (first - frame) as f64;
            return Some(GlobalBox::new(b.x - self.v_start.0 * k, b.y - self.v_start.1 * k, b.w, b.h));
        }
        if frame > last {
            let b = *self.boxes.last().expect("nonempty");
            let k = (frame - last) as f64;
            return Some(GlobalBox::new(b.x + self.v_end.0 * k, b.y + self.v_end.1 * k, b.w, b.h));
        }
        Some(self.boxes[(frame - first) as usize])
    }
}

const EXCLUSION_PAD: isize = 10;

fn too_close(a: &GlobalBox, b: &GlobalBox, separation: f64) -> bool {
    let reach = separation * (a.w.max(a.h) + b.w.max(b.h)) / 2.0;
    (a.x - b.x).abs() < reach && (a.y - b.y).abs() < reach
}

fn conflicts(new: &Trajectory, existing: &[Trajectory], separation: f64) -> bool {
    existing.iter().any(|old| {
        let lo = new.first.max(old.first) as isize - EXCLUSION_PAD;
        let hi = new.last().min(old.last()) as isize + EXCLUSION_PAD;
        (lo..=hi).any(|f| match (new.extended_box(f, EXCLUSION_PAD), old.extended_box(f, EXCLUSION_PAD)) {
            (Some(a), Some(b)) => too_close(&a, &b, separation),
            _ => false,
        })
    })
}

fn spawn(cfg: &SceneConfig, first: usize, rng: &mut impl Rng) -> Option<Trajectory> {
    let dims = cfg.dims();
    let (fw, fh) = (cfg.width as f64, cfg.height as f64);
    let w = rng.random_range(cfg.size_min..=cfg.size_max);
    let h = rng.random_range(cfg.size_min..=cfg.size_max);
    let speed = rng.random_range(cfg.speed_min..=cfg.speed_max);
    let offset = rng.random_range(-std::f64::consts::FRAC_PI_4..=std::f64::consts::FRAC_PI_4);
    let lifetime = rng.random_range(cfg.lifetime_min..=cfg.lifetime_max);
    let turn = match cfg.motion {
        MotionModel::ConstantVelocity => 0.0,
        MotionModel::GentleTurn => rng.random_range(-cfg.turn_rate_max..=cfg.turn_rate_max),
    };
    let edge = rng.random_range(0..4u8);
    let along_x = rng.random_range(w / 2.0..=fw - w / 2.0);
    let along_y = rng.random_range(h / 2.0..=fh - h / 2.0);
    let (x, y, normal) = match edge {
        0 => (w / 2.0, along_y, 0.0),
        1 => (fw - w / 2.0, along_y, std::f64::consts::PI),
        2 => (along_x, h / 2.0, std::f64::consts::FRAC_PI_2),
        _ => (along_x, fh - h / 2.0, -std::f64::consts::FRAC_PI_2),
    };

    let mut heading = normal + offset;
    let (mut x, mut y) = (x, y);
    let mut boxes = Vec::new();
    let v_start = (speed * heading.cos(), speed * heading.sin());
    let mut v = v_start;
    for t in 0..lifetime {
        if first + t >= cfg.n_frames {
            break;
        }
        let b = GlobalBox::new(x, y, w, h);
        if !dims.contains(&b) {
            break;
        }
        boxes.push(b);
        v = (speed * heading.cos(), speed * heading.sin());
        x += v.0;
        y += v.1;
        heading += turn;
    }
    if boxes.is_empty() {
        return None;
    }
    Some(Trajectory { first, boxes, v_start, v_end: v })
}

pub fn generate_scene(cfg: &SceneConfig, rng: &mut impl Rng) -> GroundTruth {
    let mut accepted: Vec<Trajectory> = Vec::new();
    let arrivals = (cfg.arrival_rate > 0.0).then(|| Poisson::new(cfg.arrival_rate).expect("positive rate"));
    for f in 0..cfg.n_frames {
        let count = arrivals.as_ref().map_or(0, |p| p.sample(rng) as usize);
        for _ in 0..count {
            let Some(traj) = spawn(cfg, f, rng) else { continue };
            if cfg.exclusive && conflicts(&traj, &accepted, cfg.separation) {
                continue;
            }
            accepted.push(traj);
        }
    }

    let mut frames = vec![Vec::new(); cfg.n_frames];
    for (id, traj) in accepted.iter().enumerate() {
        for (k, b) in traj.boxes.iter().enumerate() {
            frames[traj.first + k].push((id as ObjectId, *b));
        }
    }
    GroundTruth::from_frames(cfg.dims(), frames)
}

/// Scene from `cfg.seed` on the dedicated scene stream.
pub fn generate_scene_seeded(cfg: &SceneConfig) -> GroundTruth {
    let mut rng = stream_rng(cfg.seed, Stream::Scene, 0, 0);
    generate_scene(cfg, &mut rng)
}

/// First frame at or after `frame` on which detection runs with interval `d`.
pub fn next_detection_frame(frame: usize, d: usize) -> usize {
    let period = d + 1;
    frame.div_ceil(period) * period
}

/// Frames an object entering at `entry` goes unseen before its first detection.
pub fn detection_gap(entry: usize, d: usize) -> usize {
    next_detection_frame(entry, d) - entry
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FnIncrease {
    /// Schedule-exact missed boxes over total boxes.
    pub exact: f64,
    /// Same with every gap replaced by `d / 2`.
    pub approximate: f64,
    /// Exact count of missed boxes.
    pub missed_boxes: usize,
}

/// Fraction of ground-truth boxes missed because objects appear between
/// detection frames.
pub fn expected_fn_increase(gt: &GroundTruth, d: usize) -> FnIncrease {
    let total = gt.total_boxes();
    if total == 0 {
        return FnIncrease { exact: 0.0, approximate: 0.0, missed_boxes: 0 };
    }
    let missed: usize = gt.objects.iter().map(|o| detection_gap(o.first, d).min(o.lifetime())).sum();
    let approx: f64 = gt.objects.iter().map(|o| (d as f64 / 2.0).min(o.lifetime() as f64)).sum();
    FnIncrease { exact: missed as f64 / total as f64, approximate: approx / total as f64, missed_boxes: missed }
}
