//! End-to-end runs: build perception from a [`RunConfig`], track, evaluate,
//! and sweep the detection interval.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::config::{DetectorKind, RunConfig};
use crate::io::{detections_from_records, ground_truth_from_records, parse_mot_file};
use crate::lbt::{run_lbt, FrameTiming, LbtConfig, LbtRun, Sequence};
use crate::metrics::{clear_mot, default_grid, pr_average, MetricsReport, PrReport, Table};
use crate::perception::{simulate_frame_time, CostModel, DetectionStore, Detector, FileDetector, NullLocalizer};
use crate::perception::{Localizer, OracleDetector, OracleLocalizer};
use crate::simulator::{generate_scene_seeded, GroundTruth};
use crate::tracker::TrackerConfig;
use crate::Error;

/// Inputs resolved from a config: ground truth (when known) and file detections.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub gt: Option<GroundTruth>,
    pub detections: Option<DetectionStore>,
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> Result<Self, Error> {
        let detections = match (&cfg.run.detector, &cfg.run.detections) {
            (DetectorKind::File, Some(p)) => Some(detections_from_records(&parse_mot_file(p).map_err(Error::Input)?)),
            _ => None,
        };
        let gt = match &cfg.run.gt {
            Some(p) => {
                let recs = parse_mot_file(p).map_err(Error::Input)?;
                Some(ground_truth_from_records(&recs, cfg.scene.dims(), None).map_err(Error::Input)?)
            }
            None if cfg.run.detector == DetectorKind::Oracle => Some(generate_scene_seeded(&cfg.scene)),
            None => None,
        };
        Ok(Self { gt, detections })
    }

    /// Frames to process: the longer of ground truth and detections.
    pub fn n_frames(&self) -> usize {
        let g = self.gt.as_ref().map_or(0, GroundTruth::n_frames);
        let d = self.detections.as_ref().map_or(0, DetectionStore::frame_count);
        g.max(d)
    }
}

/// Single tracking run with the configured perception.
pub fn track(cfg: &RunConfig, inputs: &Inputs, lbt: &LbtConfig, base: &TrackerConfig) -> Result<LbtRun, Error> {
    let mut detector: Box<dyn Detector> = match cfg.run.detector {
        DetectorKind::Oracle => {
            if inputs.gt.is_none() {
                return Err(Error::Config("the oracle detector needs ground truth".into()));
            }
            Box::new(OracleDetector::new(cfg.detector.clone()))
        }
        DetectorKind::File => Box::new(FileDetector {
            store: inputs.detections.clone().ok_or_else(|| Error::Config("no detections loaded".into()))?,
        }),
    };
    let localizer: Box<dyn Localizer> = match &inputs.gt {
        Some(_) => Box::new(OracleLocalizer::new(cfg.localizer.clone())),
        None if lbt.d == 0 => Box::new(NullLocalizer),
        None => return Err(Error::Config("localization with d > 0 needs ground truth (--gt)".into())),
    };
    // ground truth may be shorter than the detection file; pad so every frame has rows
    let padded;
    let gt = match &inputs.gt {
        Some(g) if g.n_frames() < inputs.n_frames() => {
            let mut frames = g.frames.clone();
            frames.resize(inputs.n_frames(), Vec::new());
            padded = GroundTruth::from_frames(g.dims, frames);
            Some(&padded)
        }
        other => other.as_ref(),
    };
    let seq = Sequence { dims: cfg.scene.dims(), n_frames: inputs.n_frames(), ground_truth: gt };
    Ok(run_lbt(detector.as_mut(), localizer.as_ref(), &seq, base, lbt)?)
}

/// Modeled throughput of a run in frames per second.
pub fn simulated_fps(timing: &[FrameTiming], cost: &CostModel) -> f64 {
    let ms: f64 = timing.iter().map(|t| simulate_frame_time(t.detection, t.crops, cost)).sum();
    if ms > 0.0 {
        timing.len() as f64 * 1000.0 / ms
    } else {
        0.0
    }
}

pub fn wall_fps(timing: &[FrameTiming]) -> f64 {
    let total: Duration = timing.iter().map(|t| t.wall).sum();
    if total.is_zero() {
        0.0
    } else {
        timing.len() as f64 / total.as_secs_f64()
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub d: usize,
    pub sim_fps: f64,
    pub wall_fps: f64,
    pub report: MetricsReport,
    pub pr: Option<PrReport>,
    pub crops: usize,
}

/// One job per d, run in parallel; rows come back in `sweep_d` order.
pub fn sweep(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<SweepRow>, Error> {
    let gt = inputs.gt.as_ref().ok_or_else(|| Error::Config("sweep needs ground truth".into()))?;
    cfg.run
        .sweep_d
        .par_iter()
        .map(|&d| {
            let lbt = LbtConfig { d, ..cfg.lbt.clone() };
            let run = track(cfg, inputs, &lbt, &cfg.tracker)?;
            let report = clear_mot(gt, &run.histories, cfg.run.match_iou)?;
            let pr = if cfg.run.pr {
                let job = |threshold: f64| {
                    let base = TrackerConfig { min_confidence: threshold, ..cfg.tracker.clone() };
                    track(cfg, inputs, &lbt, &base).map(|r| (gt.clone(), r.histories))
                };
                Some(pr_average(job, &default_grid(), cfg.run.match_iou).map_err(|e| Error::Runtime(e.to_string()))?)
            } else {
                None
            };
            Ok(SweepRow {
                d,
                sim_fps: simulated_fps(&run.timing, &cfg.cost),
                wall_fps: wall_fps(&run.timing),
                report,
                pr,
                crops: run.timing.iter().map(|t| t.crops).sum(),
            })
        })
        .collect()
}

/// Deterministic columns only; wall-clock speed lives in [`sweep_timing_table`].
pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let with_pr = rows.iter().any(|r| r.pr.is_some());
    let mut header = vec!["d", "FPS", "MOTA", "MOTP", "MT", "FP", "FN", "IDs", "crops"];
    if with_pr {
        header.extend(["PR-MOTA", "PR-MOTP", "PR-MT", "PR-FP", "PR-FN", "PR-IDs"]);
    }
    let mut t = Table::new(&header);
    for r in rows {
        let m = &r.report;
        let mut row = vec![
            r.d.to_string(),
            format!("{:.2}", r.sim_fps),
            format!("{:.4}", m.mota()),
            format!("{:.4}", m.motp()),
            format!("{:.4}", m.mt_ratio()),
            m.fp.to_string(),
            m.fn_.to_string(),
            m.ids.to_string(),
            r.crops.to_string(),
        ];
        if with_pr {
            match &r.pr {
                Some(p) => row.extend([
                    format!("{:.4}", p.mota()),
                    format!("{:.4}", p.motp()),
                    format!("{:.4}", p.mt()),
                    format!("{:.1}", p.fp()),
                    format!("{:.1}", p.fn_()),
                    format!("{:.1}", p.ids()),
                ]),
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
        }
        t.push(row);
    }
    t
}

pub fn sweep_timing_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&["d", "sim_FPS", "wall_FPS"]);
    for r in rows {
        t.push(vec![r.d.to_string(), format!("{:.2}", r.sim_fps), format!("{:.1}", r.wall_fps)]);
    }
    t
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub d: usize,
    pub frames: usize,
    pub repeats: usize,
    /// Median over repeats.
    pub wall: Duration,
    pub sim_fps: f64,
}

impl BenchRow {
    pub fn wall_fps(&self) -> f64 {
        let s = self.wall.as_secs_f64();
        if s > 0.0 {
            self.frames as f64 / s
        } else {
            0.0
        }
    }
}

/// Sequential wall-clock measurement, one d at a time so runs do not compete.
pub fn bench(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<BenchRow>, Error> {
    let mut rows = Vec::new();
    for &d in &cfg.run.sweep_d {
        let lbt = LbtConfig { d, ..cfg.lbt.clone() };
        let mut walls = Vec::with_capacity(cfg.run.bench_repeats);
        let mut sim_fps = 0.0;
        for _ in 0..cfg.run.bench_repeats {
            let start = Instant::now();
            let run = track(cfg, inputs, &lbt, &cfg.tracker)?;
            walls.push(start.elapsed());
            sim_fps = simulated_fps(&run.timing, &cfg.cost);
        }
        walls.sort();
        rows.push(BenchRow {
            d,
            frames: inputs.n_frames(),
            repeats: walls.len(),
            wall: walls[walls.len() / 2],
            sim_fps,
        });
    }
    Ok(rows)
}

pub fn bench_table(rows: &[BenchRow]) -> Table {
    let mut t = Table::new(&["d", "frames", "repeats", "median_ms", "wall_FPS", "sim_FPS"]);
    for r in rows {
        t.push(vec![
            r.d.to_string(),
            r.frames.to_string(),
            r.repeats.to_string(),
            format!("{:.2}", r.wall.as_secs_f64() * 1000.0),
            format!("{:.1}", r.wall_fps()),
            format!("{:.2}", r.sim_fps),
        ]);
    }
    t
}

/// Per-frame log of a run as CSV.
pub fn timing_csv(timing: &[FrameTiming]) -> String {
    let mut t = Table::new(&["frame", "detection", "crops", "live", "wall_us"]);
    for f in timing {
        t.push(vec![
            (f.frame_idx + 1).to_string(),
            u8::from(f.detection).to_string(),
            f.crops.to_string(),
            f.live.to_string(),
            f.wall.as_micros().to_string(),
        ]);
    }
    t.to_csv()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{DetectorNoise, LocalizerNoise};
    use crate::simulator::SceneConfig;

    fn quiet_cfg() -> RunConfig {
        RunConfig {
            scene: SceneConfig { n_frames: 200, exclusive: true, seed: 3, ..SceneConfig::default() },
            detector: DetectorNoise::noiseless(3),
            localizer: LocalizerNoise::noiseless(3),
            tracker: TrackerConfig { min_hits: 1, ..TrackerConfig::default() },
            ..RunConfig::default()
        }
    }

    #[test]
    fn simulated_fps_examples() {
        let cm = CostModel::default();
        let t = |detection, crops| FrameTiming { frame_idx: 0, detection, crops, live: 0, wall: Duration::ZERO };
        assert_eq!(simulated_fps(&[t(true, 0)], &cm), 25.0);
        assert_eq!(simulated_fps(&[t(true, 0), t(false, 4)], &cm), 2000.0 / 48.0);
        assert_eq!(simulated_fps(&[], &cm), 0.0);
    }

    #[test]
    fn sweep_on_noiseless_scene() {
        let cfg = quiet_cfg();
        let inputs = Inputs::load(&cfg).unwrap();
        let rows = sweep(&cfg, &inputs).unwrap();
        assert_eq!(rows.iter().map(|r| r.d).collect::<Vec<_>>(), cfg.run.sweep_d);
        assert_eq!(rows[0].report.mota(), 1.0);
        for w in rows.windows(2) {
            assert!(w[1].report.mota() <= w[0].report.mota() + 1e-12);
        }
        let csv = sweep_table(&rows).to_csv();
        assert!(csv.starts_with("d,FPS,MOTA,MOTP,MT,FP,FN"));
        assert_eq!(csv, sweep_table(&sweep(&cfg, &inputs).unwrap()).to_csv());
    }

    #[test]
    fn pr_columns_appear_when_enabled() {
        let mut cfg = quiet_cfg();
        cfg.scene.n_frames = 60;
        cfg.run.pr = true;
        cfg.run.sweep_d = vec![0, 3];
        let inputs = Inputs::load(&cfg).unwrap();
        let rows = sweep(&cfg, &inputs).unwrap();
        assert_eq!(rows[0].pr.as_ref().unwrap().reports.len(), 11);
        assert!(sweep_table(&rows).header.contains(&"PR-MOTA".to_string()));
    }

    #[test]
    fn file_detector_without_gt_only_runs_at_d0() {
        let mut cfg = quiet_cfg();
        cfg.run.detector = DetectorKind::File;
        let store = DetectionStore::default();
        let inputs = Inputs { gt: None, detections: Some(store) };
        assert!(track(&cfg, &inputs, &LbtConfig::with_d(0), &cfg.tracker).is_ok());
        assert!(matches!(track(&cfg, &inputs, &LbtConfig::with_d(3), &cfg.tracker), Err(Error::Config(_))));
    }

    #[test]
    fn bench_reports_every_d() {
        let mut cfg = quiet_cfg();
        cfg.scene.n_frames = 40;
        cfg.run.sweep_d = vec![0, 7];
        cfg.run.bench_repeats = 2;
        let inputs = Inputs::load(&cfg).unwrap();
        let rows = bench(&cfg, &inputs).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].sim_fps > rows[0].sim_fps);
        assert_eq!(bench_table(&rows).rows.len(), 2);
    }
}
