//! CLEAR MOT evaluation and confidence-threshold averaging.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::association::{build_cost_matrix, solve_assignment, CostMetric, Gate};
use crate::geometry::{iou, GlobalBox};
use crate::simulator::{GroundTruth, ObjectId};
use crate::tracker::{TrackHistory, TrackId};

/// Default IoU needed for a hypothesis to count as a match.
pub const DEFAULT_MATCH_IOU: f64 = 0.5;
/// Share of its lifespan a GT object must be matched to count as mostly tracked.
pub const MT_RATIO: f64 = 0.8;
/// Below this share it is mostly lost.
pub const ML_RATIO: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("hypothesis box on frame {frame} but ground truth has {n_frames} frames")]
    FrameOutOfRange { frame: usize, n_frames: usize },
    #[error("match threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

/// Counts for one evaluated frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameStats {
    pub gt: usize,
    pub hyp: usize,
    pub matches: usize,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub frames: usize,
    pub gt_boxes: usize,
    pub hyp_boxes: usize,
    pub matches: usize,
    pub iou_sum: f64,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub fm: usize,
    pub gt_tracks: usize,
    pub mt: usize,
    pub ml: usize,
    /// Empty for aggregated reports.
    pub per_frame: Vec<FrameStats>,
}

impl MetricsReport {
    /// `1 - (FN + FP + IDs) / GT`; with no GT boxes the denominator is 1.
    pub fn mota(&self) -> f64 {
        1.0 - (self.fn_ + self.fp + self.ids) as f64 / self.gt_boxes.max(1) as f64
    }

    /// Mean IoU of matched pairs, 0 without matches.
    pub fn motp(&self) -> f64 {
        ratio_f(self.iou_sum, self.matches)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matches, self.gt_boxes)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.matches, self.hyp_boxes)
    }

    pub fn faf(&self) -> f64 {
        ratio(self.fp, self.frames)
    }

    pub fn mt_ratio(&self) -> f64 {
        ratio(self.mt, self.gt_tracks)
    }

    pub fn ml_ratio(&self) -> f64 {
        ratio(self.ml, self.gt_tracks)
    }

    /// Counts divided by total GT boxes: (FP, FN, IDs, FM).
    pub fn normalized(&self) -> [f64; 4] {
        let n = self.gt_boxes.max(1) as f64;
        [self.fp as f64 / n, self.fn_ as f64 / n, self.ids as f64 / n, self.fm as f64 / n]
    }

    /// Sums counts over sequences; ratios are recomputed from the totals.
    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> MetricsReport {
        let mut out = MetricsReport::default();
        for r in reports {
            out.frames += r.frames;
            out.gt_boxes += r.gt_boxes;
            out.hyp_boxes += r.hyp_boxes;
            out.matches += r.matches;
            out.iou_sum += r.iou_sum;
            out.fp += r.fp;
            out.fn_ += r.fn_;
            out.ids += r.ids;
            out.fm += r.fm;
            out.gt_tracks += r.gt_tracks;
            out.mt += r.mt;
            out.ml += r.ml;
        }
        out
    }

    pub const CSV_HEADER: &'static str =
        "MOTA,MOTP,MT,MT%,ML,ML%,FP,FN,IDs,FM,Recall,Precision,FAF,nFP,nFN,nIDs,nFM,GT,frames";

    pub fn csv_row(&self) -> String {
        let [nfp, nfn, nids, nfm] = self.normalized();
        format!(
            "{:.4},{:.4},{},{:.4},{},{:.4},{},{},{},{},{:.4},{:.4},{:.4},{:.6},{:.6},{:.6},{:.6},{},{}",
            self.mota(),
            self.motp(),
            self.mt,
            self.mt_ratio(),
            self.ml,
            self.ml_ratio(),
            self.fp,
            self.fn_,
            self.ids,
            self.fm,
            self.recall(),
            self.precision(),
            self.faf(),
            nfp,
            nfn,
            nids,
            nfm,
            self.gt_boxes,
            self.frames
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    ratio_f(n as f64, d)
}

fn ratio_f(n: f64, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n / d as f64
    }
}

fn hypotheses_by_frame(hyp: &[TrackHistory], n_frames: usize) -> Result<Vec<Vec<(TrackId, GlobalBox)>>, MetricsError> {
    let mut frames = vec![Vec::new(); n_frames];
    for h in hyp {
        for (&f, b) in &h.boxes {
            let slot = frames.get_mut(f).ok_or(MetricsError::FrameOutOfRange { frame: f, n_frames })?;
            slot.push((h.id, *b));
        }
    }
    for rows in &mut frames {
        rows.sort_by_key(|r| r.0);
    }
    Ok(frames)
}

/// CLEAR MOT over one sequence. Correspondences from the previous frame are
/// kept while their IoU stays at or above `match_iou`; the rest are matched
/// by minimum `1 - IoU` assignment.
pub fn clear_mot(gt: &GroundTruth, hyp: &[TrackHistory], match_iou: f64) -> Result<MetricsReport, MetricsError> {
    if !(match_iou > 0.0 && match_iou <= 1.0) {
        return Err(MetricsError::InvalidThreshold(match_iou));
    }
    let n_frames = gt.n_frames();
    let hyp_frames = hypotheses_by_frame(hyp, n_frames)?;
    let gate = Gate::Uniform(1.0 - match_iou);

    let mut report = MetricsReport { frames: n_frames, ..Default::default() };
    // last hypothesis each GT object was matched to, ever
    let mut last_match: BTreeMap<ObjectId, TrackId> = BTreeMap::new();
    // matches of the previous frame only
    let mut prev: BTreeMap<ObjectId, TrackId> = BTreeMap::new();
    // per GT object: (frames present, frames matched, matched runs, currently matched)
    let mut per_obj: BTreeMap<ObjectId, (usize, usize, usize, bool)> = BTreeMap::new();

    for (g_rows, h_rows) in gt.frames.iter().zip(&hyp_frames) {
        let mut g_used = vec![false; g_rows.len()];
        let mut h_used = vec![false; h_rows.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();

        for (gi, (gid, gb)) in g_rows.iter().enumerate() {
            let Some(hid) = prev.get(gid) else { continue };
            if let Some(hi) = h_rows.iter().position(|(id, _)| id == hid) {
                if !h_used[hi] && iou(gb, &h_rows[hi].1) >= match_iou {
                    g_used[gi] = true;
                    h_used[hi] = true;
                    pairs.push((gi, hi));
                }
            }
        }

        let g_rest: Vec<usize> = (0..g_rows.len()).filter(|&i| !g_used[i]).collect();
        let h_rest: Vec<usize> = (0..h_rows.len()).filter(|&i| !h_used[i]).collect();
        if !g_rest.is_empty() && !h_rest.is_empty() {
            let gb: Vec<GlobalBox> = g_rest.iter().map(|&i| g_rows[i].1).collect();
            let hb: Vec<GlobalBox> = h_rest.iter().map(|&i| h_rows[i].1).collect();
            let costs = build_cost_matrix(&gb, &hb, CostMetric::Iou);
            for (r, c) in solve_assignment(&costs, &gate).matches {
                // the gate works on 1 - IoU; recheck so float rounding cannot admit a pair below threshold
                if iou(&gb[r], &hb[c]) >= match_iou {
                    pairs.push((g_rest[r], h_rest[c]));
                }
            }
        }

        let mut stats = FrameStats { gt: g_rows.len(), hyp: h_rows.len(), matches: pairs.len(), ..Default::default() };
        stats.fp = stats.hyp - stats.matches;
        stats.fn_ = stats.gt - stats.matches;

        let mut now = BTreeMap::new();
        for &(gi, hi) in &pairs {
            let (gid, gb) = g_rows[gi];
            let (hid, hb) = h_rows[hi];
            report.iou_sum += iou(&gb, &hb);
            if last_match.insert(gid, hid).is_some_and(|old| old != hid) {
                stats.ids += 1;
            }
            now.insert(gid, hid);
        }
        for (gid, _) in g_rows {
            let e = per_obj.entry(*gid).or_insert((0, 0, 0, false));
            e.0 += 1;
            let matched = now.contains_key(gid);
            if matched {
                e.1 += 1;
                if !e.3 {
                    e.2 += 1;
                }
            }
            e.3 = matched;
        }
        prev = now;

        report.gt_boxes += stats.gt;
        report.hyp_boxes += stats.hyp;
        report.matches += stats.matches;
        report.fp += stats.fp;
        report.fn_ += stats.fn_;
        report.ids += stats.ids;
        report.per_frame.push(stats);
    }

    report.gt_tracks = per_obj.len();
    for &(present, matched, runs, _) in per_obj.values() {
        let share = matched as f64 / present as f64;
        report.mt += usize::from(share >= MT_RATIO);
        report.ml += usize::from(share < ML_RATIO);
        report.fm += runs.saturating_sub(1);
    }
    Ok(report)
}

/// Eleven evenly spaced thresholds from 0 to 1.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Error)]
pub enum PrError<E> {
    #[error("threshold grid must be nonempty, strictly increasing and inside [0, 1]")]
    InvalidGrid,
    #[error("run failed at threshold {threshold}: {source}")]
    Run { threshold: f64, source: E },
    #[error("evaluation failed at threshold {threshold}: {source}")]
    Metrics { threshold: f64, source: MetricsError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrReport {
    pub grid: Vec<f64>,
    pub reports: Vec<MetricsReport>,
}

impl PrReport {
    fn mean(&self, f: impl Fn(&MetricsReport) -> f64) -> f64 {
        self.reports.iter().map(f).sum::<f64>() / self.reports.len() as f64
    }

    pub fn mota(&self) -> f64 {
        self.mean(MetricsReport::mota)
    }
    pub fn motp(&self) -> f64 {
        self.mean(MetricsReport::motp)
    }
    pub fn mt(&self) -> f64 {
        self.mean(MetricsReport::mt_ratio)
    }
    pub fn ml(&self) -> f64 {
        self.mean(MetricsReport::ml_ratio)
    }
    pub fn fp(&self) -> f64 {
        self.mean(|r| r.fp as f64)
    }
    pub fn fn_(&self) -> f64 {
        self.mean(|r| r.fn_ as f64)
    }
    pub fn ids(&self) -> f64 {
        self.mean(|r| r.ids as f64)
    }
    pub fn fm(&self) -> f64 {
        self.mean(|r| r.fm as f64)
    }
}

/// Runs and evaluates every grid threshold (in parallel) and averages.
pub fn pr_average<E, F>(run: F, grid: &[f64], match_iou: f64) -> Result<PrReport, PrError<E>>
where
    E: Send,
    F: Fn(f64) -> Result<(GroundTruth, Vec<TrackHistory>), E> + Sync,
{
    let increasing = grid.windows(2).all(|w| w[0] < w[1]);
    if grid.is_empty() || !increasing || grid[0] < 0.0 || grid[grid.len() - 1] > 1.0 {
        return Err(PrError::InvalidGrid);
    }
    let reports = grid
        .par_iter()
        .map(|&threshold| {
            let (gt, hyp) = run(threshold).map_err(|source| PrError::Run { threshold, source })?;
            clear_mot(&gt, &hyp, match_iou).map_err(|source| PrError::Metrics { threshold, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PrReport { grid: grid.to_vec(), reports })
}

/// Rows of strings rendered either as CSV or as an aligned text table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FrameDims;
    use crate::simulator::{generate_scene_seeded, SceneConfig};

    fn gt_as_hyp(gt: &GroundTruth) -> Vec<TrackHistory> {
        let mut by_id: BTreeMap<ObjectId, BTreeMap<usize, GlobalBox>> = BTreeMap::new();
        for (f, rows) in gt.frames.iter().enumerate() {
            for (id, b) in rows {
                by_id.entry(*id).or_default().insert(f, *b);
            }
        }
        by_id.into_iter().map(|(id, boxes)| TrackHistory { id: id + 100, class: None, boxes }).collect()
    }

    fn two_objects() -> GroundTruth {
        let a = GlobalBox::new(100.0, 100.0, 40.0, 40.0);
        let b = GlobalBox::new(400.0, 100.0, 40.0, 40.0);
        GroundTruth::from_frames(FrameDims::new(640, 480), vec![vec![(0, a), (1, b)]; 3])
    }

    #[test]
    fn identity_swap_fixture() {
        let gt = two_objects();
        let (a, b) = (gt.frames[0][0].1, gt.frames[0][1].1);
        let h1 = TrackHistory { id: 1, class: None, boxes: [(0, a), (1, b), (2, b)].into_iter().collect() };
        let h2 = TrackHistory { id: 2, class: None, boxes: [(0, b), (1, a), (2, a)].into_iter().collect() };
        let r = clear_mot(&gt, &[h1, h2], DEFAULT_MATCH_IOU).unwrap();
        assert_eq!(r.ids, 2);
        assert_eq!(r.fp + r.fn_, 0);
        assert_eq!(r.mota(), 1.0 - 2.0 / 6.0);
        assert_eq!(r.per_frame.iter().map(|f| f.ids).collect::<Vec<_>>(), vec![0, 2, 0]);
    }

    #[test]
    fn perfect_and_empty_hypotheses() {
        let gt = two_objects();
        let r = clear_mot(&gt, &gt_as_hyp(&gt), DEFAULT_MATCH_IOU).unwrap();
        assert_eq!((r.mota(), r.motp(), r.ids, r.mt_ratio()), (1.0, 1.0, 0, 1.0));
        let e = clear_mot(&gt, &[], DEFAULT_MATCH_IOU).unwrap();
        assert_eq!((e.mota(), e.recall(), e.fn_, e.ml), (0.0, 0.0, 6, 2));
    }

    #[test]
    fn out_of_range_hypothesis_is_rejected() {
        let gt = two_objects();
        let h = TrackHistory { id: 1, class: None, boxes: [(3, gt.frames[0][0].1)].into_iter().collect() };
        assert_eq!(
            clear_mot(&gt, &[h], 0.5),
            Err(MetricsError::FrameOutOfRange { frame: 3, n_frames: 3 })
        );
        assert_eq!(clear_mot(&gt, &[], 0.0), Err(MetricsError::InvalidThreshold(0.0)));
    }

    #[test]
    fn fragmentation_and_persistence() {
        let gt = GroundTruth::from_frames(
            FrameDims::new(640, 480),
            vec![vec![(0, GlobalBox::new(100.0, 100.0, 40.0, 40.0))]; 5],
        );
        let b = gt.frames[0][0].1;
        // matched on 0,1, lost on 2, back on 3,4
        let h = TrackHistory { id: 7, class: None, boxes: [0, 1, 3, 4].into_iter().map(|f| (f, b)).collect() };
        let r = clear_mot(&gt, &[h], 0.5).unwrap();
        assert_eq!((r.fm, r.ids, r.fn_, r.mt), (1, 0, 1, 1));

        // a better-overlapping newcomer does not steal a persisted match
        let gt2 = GroundTruth::from_frames(FrameDims::new(640, 480), vec![vec![(0, b)]; 2]);
        let shifted = GlobalBox::new(108.0, 100.0, 40.0, 40.0);
        let keep = TrackHistory { id: 1, class: None, boxes: [(0, b), (1, shifted)].into_iter().collect() };
        let newcomer = TrackHistory { id: 2, class: None, boxes: [(1, b)].into_iter().collect() };
        let r2 = clear_mot(&gt2, &[keep, newcomer], 0.5).unwrap();
        assert_eq!((r2.ids, r2.fp, r2.matches), (0, 1, 2));
    }

    #[test]
    fn perfect_on_simulated_scenes_with_accounting() {
        for seed in 0..5 {
            let cfg = SceneConfig { n_frames: 300, seed, ..SceneConfig::default() };
            let gt = generate_scene_seeded(&cfg);
            let r = clear_mot(&gt, &gt_as_hyp(&gt), DEFAULT_MATCH_IOU).unwrap();
            assert_eq!((r.mota(), r.ids, r.fp, r.fn_), (1.0, 0, 0, 0));
            for f in &r.per_frame {
                assert_eq!(f.fp + f.matches, f.hyp);
                assert_eq!(f.fn_ + f.matches, f.gt);
            }
        }
    }

    #[test]
    fn deleting_a_box_never_helps() {
        let cfg = SceneConfig { n_frames: 200, seed: 3, ..SceneConfig::default() };
        let gt = generate_scene_seeded(&cfg);
        let hyp = gt_as_hyp(&gt);
        let full = clear_mot(&gt, &hyp, 0.5).unwrap();
        let mut cut = hyp.clone();
        let f = *cut[0].boxes.keys().nth(1).unwrap();
        cut[0].boxes.remove(&f);
        let less = clear_mot(&gt, &cut, 0.5).unwrap();
        assert!(less.fn_ >= full.fn_);
        assert!(less.fp <= full.fp);
    }

    #[test]
    fn pr_average_examples() {
        let gt = two_objects();
        let perfect = gt_as_hyp(&gt);
        let single = clear_mot(&gt, &perfect, 0.5).unwrap();
        let constant = pr_average(|_| Ok::<_, String>((gt.clone(), perfect.clone())), &default_grid(), 0.5).unwrap();
        assert_eq!(constant.mota(), single.mota());
        assert_eq!(constant.reports.len(), 11);

        let one = pr_average(|_| Ok::<_, String>((gt.clone(), vec![])), &[0.3], 0.5).unwrap();
        assert_eq!(one.mota(), 0.0);

        // 5 GT boxes; one FN gives 0.8, two give 0.6
        let gt5 = GroundTruth::from_frames(
            FrameDims::new(640, 480),
            vec![vec![(0, GlobalBox::new(100.0, 100.0, 40.0, 40.0))]; 5],
        );
        let b = gt5.frames[0][0].1;
        let run = |t: f64| {
            let keep = if t < 0.5 { 4 } else { 3 };
            let h = TrackHistory { id: 1, class: None, boxes: (0..keep).map(|f| (f, b)).collect() };
            Ok::<_, String>((gt5.clone(), vec![h]))
        };
        let two = pr_average(run, &[0.2, 0.8], 0.5).unwrap();
        assert!((two.mota() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn pr_average_errors() {
        let gt = two_objects();
        let ok = |_| Ok::<_, String>((gt.clone(), vec![]));
        assert!(matches!(pr_average(ok, &[], 0.5), Err(PrError::InvalidGrid)));
        assert!(matches!(pr_average(ok, &[0.5, 0.5], 0.5), Err(PrError::InvalidGrid)));
        assert!(matches!(pr_average(ok, &[0.5, 1.5], 0.5), Err(PrError::InvalidGrid)));
        let fail = |t: f64| if t > 0.4 { Err("boom".to_string()) } else { Ok((gt.clone(), vec![])) };
        match pr_average(fail, &[0.1, 0.5], 0.5) {
            Err(PrError::Run { threshold, source }) => assert_eq!((threshold, source.as_str()), (0.5, "boom")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn aggregate_sums_counts() {
        let gt = two_objects();
        let a = clear_mot(&gt, &gt_as_hyp(&gt), 0.5).unwrap();
        let b = clear_mot(&gt, &[], 0.5).unwrap();
        let agg = MetricsReport::aggregate([&a, &b]);
        assert_eq!((agg.gt_boxes, agg.fn_, agg.frames, agg.gt_tracks), (12, 6, 6, 4));
        assert_eq!(agg.mota(), 0.5);
        assert_eq!(agg.motp(), 1.0);
    }

    #[test]
    fn table_rendering() {
        let mut t = Table::new(&["d", "MOTA"]);
        t.push(vec!["0".into(), "1.0000".into()]);
        t.push(vec!["31".into(), "0.9".into()]);
        assert_eq!(t.to_csv(), "d,MOTA\n0,1.0000\n31,0.9\n");
        assert_eq!(t.to_text(), " d    MOTA\n 0  1.0000\n31     0.9\n");
        assert_eq!(clear_mot(&two_objects(), &[], 0.5).unwrap().to_csv().lines().count(), 2);
    }
}
