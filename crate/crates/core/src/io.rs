//! MOTChallenge-style text files.
//!
//! One record per line: `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z`
//! with 1-based frames and `id = -1` for raw detections. Files are read
//! strictly and written in canonical order with two-decimal geometry.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{FrameDims, GlobalBox};
use crate::perception::DetectionStore;
use crate::simulator::{GroundTruth, ObjectId};
use crate::tracker::{Detection, TrackHistory};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Convert(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRecord {
    /// 1-based frame number.
    pub frame: u64,
    pub id: i64,
    pub bb_left: f64,
    pub bb_top: f64,
    pub bb_width: f64,
    pub bb_height: f64,
    pub conf: f64,
}

impl MotRecord {
    pub fn from_box(frame_idx: usize, id: i64, b: &GlobalBox, conf: f64) -> Self {
        let [bb_left, bb_top, bb_width, bb_height] = b.to_tlwh();
        Self { frame: frame_idx as u64 + 1, id, bb_left, bb_top, bb_width, bb_height, conf }
    }

    /// 0-based frame index.
    pub fn frame_idx(&self) -> usize {
        (self.frame - 1) as usize
    }

    pub fn bbox(&self) -> GlobalBox {
        GlobalBox::from_tlwh(self.bb_left, self.bb_top, self.bb_width, self.bb_height)
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<MotRecord, IoError> {
    let err = |message: String| IoError::Parse { line: lineno, message };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if !(7..=10).contains(&fields.len()) {
        return Err(err(format!("expected 7 to 10 fields, found {}", fields.len())));
    }
    let num = |i: usize, name: &str| -> Result<f64, IoError> {
        let v: f64 = fields[i].parse().map_err(|_| err(format!("{name}: not a number: {:?}", fields[i])))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(format!("{name}: not finite")))
        }
    };
    let frame: u64 = fields[0].parse().map_err(|_| err(format!("frame: not an integer: {:?}", fields[0])))?;
    if frame == 0 {
        return Err(err("frame numbers start at 1".into()));
    }
    let id: i64 = fields[1].parse().map_err(|_| err(format!("id: not an integer: {:?}", fields[1])))?;
    let rec = MotRecord {
        frame,
        id,
        bb_left: num(2, "bb_left")?,
        bb_top: num(3, "bb_top")?,
        bb_width: num(4, "bb_width")?,
        bb_height: num(5, "bb_height")?,
        conf: num(6, "conf")?,
    };
    for i in 7..fields.len() {
        num(i, "x/y/z")?;
    }
    if rec.bb_width <= 0.0 || rec.bb_height <= 0.0 {
        return Err(err("box width and height must be positive".into()));
    }
    Ok(rec)
}

/// Parses file contents; blank lines are skipped, anything else must be a record.
pub fn parse_mot_str(text: &str) -> Result<Vec<MotRecord>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l, i + 1))
        .collect()
}

pub fn parse_mot_file(path: &Path) -> Result<Vec<MotRecord>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    parse_mot_str(&text)
}

/// Canonical text: sorted by frame then id (stable otherwise).
pub fn format_mot(records: &[MotRecord]) -> String {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut out = String::new();
    for r in &sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},-1,-1,-1",
            r.frame,
            r.id,
            fmt2(r.bb_left),
            fmt2(r.bb_top),
            fmt2(r.bb_width),
            fmt2(r.bb_height),
            fmt2(r.conf)
        );
    }
    out
}

/// Two decimals, without a negative sign on values that round to zero.
fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

pub fn write_mot_file(records: &[MotRecord], path: &Path) -> Result<(), IoError> {
    std::fs::write(path, format_mot(records)).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub fn detections_from_records(records: &[MotRecord]) -> DetectionStore {
    let mut store = DetectionStore::default();
    for r in records {
        store.frames.entry(r.frame_idx()).or_default().push(Detection::new(r.bbox(), r.conf));
    }
    store
}

/// Ground truth covering `n_frames` frames, or up to the last record when `None`.
pub fn ground_truth_from_records(
    records: &[MotRecord],
    dims: FrameDims,
    n_frames: Option<usize>,
) -> Result<GroundTruth, IoError> {
    let last = records.iter().map(|r| r.frame_idx() + 1).max().unwrap_or(0);
    let n = n_frames.unwrap_or(last);
    if last > n {
        return Err(IoError::Convert(format!("ground truth has frame {last} beyond the {n}-frame sequence")));
    }
    let mut frames: Vec<Vec<(ObjectId, GlobalBox)>> = vec![Vec::new(); n];
    for r in records {
        let id = ObjectId::try_from(r.id)
            .map_err(|_| IoError::Convert(format!("ground truth ids must be nonnegative, got {}", r.id)))?;
        let rows = &mut frames[r.frame_idx()];
        if rows.iter().any(|(other, _)| *other == id) {
            return Err(IoError::Convert(format!("object {id} appears twice in frame {}", r.frame)));
        }
        rows.push((id, r.bbox()));
    }
    Ok(GroundTruth::from_frames(dims, frames))
}

pub fn ground_truth_to_records(gt: &GroundTruth) -> Vec<MotRecord> {
    gt.frames
        .iter()
        .enumerate()
        .flat_map(|(f, rows)| rows.iter().map(move |(id, b)| MotRecord::from_box(f, *id as i64, b, 1.0)))
        .collect()
}

pub fn histories_to_records(histories: &[TrackHistory]) -> Vec<MotRecord> {
    histories
        .iter()
        .flat_map(|h| h.boxes.iter().map(move |(f, b)| MotRecord::from_box(*f, h.id as i64, b, 1.0)))
        .collect()
}

pub fn histories_from_records(records: &[MotRecord]) -> Result<Vec<TrackHistory>, IoError> {
    let mut by_id: BTreeMap<u64, BTreeMap<usize, GlobalBox>> = BTreeMap::new();
    for r in records {
        let id = u64::try_from(r.id).map_err(|_| IoError::Convert(format!("track ids must be nonnegative, got {}", r.id)))?;
        if by_id.entry(id).or_default().insert(r.frame_idx(), r.bbox()).is_some() {
            return Err(IoError::Convert(format!("track {id} appears twice in frame {}", r.frame)));
        }
    }
    Ok(by_id.into_iter().map(|(id, boxes)| TrackHistory { id, class: None, boxes }).collect())
}
