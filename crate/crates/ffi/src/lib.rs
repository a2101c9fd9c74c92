//! C ABI for `lbt-core`.
//!
//! The caller owns perception. A session looks like:
//!
//! ```c
//! LbtParams p = lbt_params_default();
//! LbtTracker *t = NULL;
//! lbt_tracker_new(&p, &t);
//! for (uint64_t f = 0; f < n; ++f) {
//!     bool det;
//!     lbt_is_detection_frame(t, f, &det);
//!     if (det) {
//!         lbt_step_detection(t, f, dets, n_dets);
//!     } else {
//!         size_t n_crops;
//!         lbt_begin_localization(t, f, &n_crops);
//!         // lbt_crop_request(t, i, &req) for each crop, run the localizer,
//!         // then hand back one candidate list per crop:
//!         lbt_finish_localization(t, lists, n_crops);
//!     }
//! }
//! lbt_results(t, NULL, 0, &len);      // query size
//! lbt_results(t, buf, len, &len);     // copy
//! lbt_tracker_free(t);
//! ```
//!
//! Every fallible call returns an [`LbtStatus`]. On failure,
//! [`lbt_last_error_message`] describes the most recent error on the calling
//! thread. Handles are not thread-safe; use one per thread or lock externally.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lbt_core::geometry::{self, Crop, FrameDims, GlobalBox, LocalBox};
use lbt_core::lbt::{LbtConfig, LbtError};
use lbt_core::perception::{LocalizerCandidate, PerceptionError};
use lbt_core::tracker::{Detection, TrackStatus, TrackerConfig, TrackerError, TrackerMode};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbtStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Bad parameter value or a non-finite or empty box.
    InvalidArgument = 2,
    /// Frame index not after the last processed frame.
    FrameOrder = 3,
    /// Detection step on a localization frame or the reverse.
    WrongFrameKind = 4,
    /// No localization frame in progress.
    NoPendingFrame = 5,
    /// Candidate list count differs from the crop count.
    ResultCount = 6,
    /// Output buffer too small; the required length was still written.
    BufferTooSmall = 7,
    /// Index past the end of a list.
    OutOfRange = 8,
    /// Unexpected failure, including a caught panic.
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbtMode {
    /// Center-distance association.
    Sort = 0,
    /// IoU association.
    Kiou = 1,
}

/// Box in center form: `(x, y)` is the center.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbtBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Square crop centered at `(cx, cy)` with side `s`, in frame pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbtCrop {
    pub cx: f64,
    pub cy: f64,
    pub s: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbtDetection {
    /// Frame coordinates.
    pub bbox: LbtBox,
    pub confidence: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbtCandidate {
    /// Localizer coordinates: origin at the crop center, crop spans `resolution` pixels.
    pub bbox: LbtBox,
    pub confidence: f64,
}

/// Localizer output for one crop.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LbtCandidateList {
    pub items: *const LbtCandidate,
    pub len: usize,
    /// Set when the localizer call failed; the crop counts as a miss.
    pub failed: bool,
}

/// One crop of the pending localization frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbtCropRequest {
    pub track_id: u64,
    pub crop: LbtCrop,
    /// Predicted box the crop was built from.
    pub apriori: LbtBox,
    /// Localizer input side in pixels.
    pub resolution: f64,
}

/// A live tracklet's current state estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbtTrack {
    pub track_id: u64,
    pub bbox: LbtBox,
    /// Past the tentative stage, even if missed on the latest frame.
    pub confirmed: bool,
    pub misses: u32,
}

/// One output box; results are ordered by track id, then frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbtRecord {
    pub frame: u64,
    pub track_id: u64,
    pub bbox: LbtBox,
}

/// Construction parameters. Start from [`lbt_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbtParams {
    pub mode: LbtMode,
    pub frame_width: u32,
    pub frame_height: u32,
    /// Localization frames between detection frames; 0 disables localization.
    pub d: u64,
    /// Crop side as a multiple of the larger predicted box side.
    pub beta: f64,
    pub resolution: f64,
    pub min_hits: u32,
    pub max_age: u32,
    pub min_iou: f64,
    pub min_confidence: f64,
}

/// Opaque tracker handle.
pub struct LbtTracker {
    inner: lbt_core::lbt::LbtTracker,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: LbtStatus, msg: impl Into<String>) -> LbtStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into `Internal`.
fn guard(f: impl FnOnce() -> LbtStatus) -> LbtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(LbtStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

fn status_of(e: &LbtError) -> LbtStatus {
    match e {
        LbtError::Tracker(TrackerError::FrameOrder { .. }) => LbtStatus::FrameOrder,
        LbtError::Tracker(TrackerError::FrameNotStarted(_)) => LbtStatus::NoPendingFrame,
        LbtError::Tracker(TrackerError::InvalidConfig(_)) | LbtError::InvalidConfig(_) => LbtStatus::InvalidArgument,
        LbtError::ResultCount { .. } => LbtStatus::ResultCount,
        _ => LbtStatus::Internal,
    }
}

fn from_lbt(e: LbtError) -> LbtStatus {
    fail(status_of(&e), e.to_string())
}

impl From<LbtBox> for GlobalBox {
    fn from(b: LbtBox) -> Self {
        GlobalBox::new(b.x, b.y, b.w, b.h)
    }
}

impl From<GlobalBox> for LbtBox {
    fn from(b: GlobalBox) -> Self {
        LbtBox { x: b.x, y: b.y, w: b.w, h: b.h }
    }
}

impl From<LocalBox> for LbtBox {
    fn from(b: LocalBox) -> Self {
        LbtBox { x: b.x, y: b.y, w: b.w, h: b.h }
    }
}

impl From<LbtCrop> for Crop {
    fn from(c: LbtCrop) -> Self {
        Crop { cx: c.cx, cy: c.cy, s: c.s }
    }
}

impl From<Crop> for LbtCrop {
    fn from(c: Crop) -> Self {
        LbtCrop { cx: c.cx, cy: c.cy, s: c.s }
    }
}

fn local(b: LbtBox) -> LocalBox {
    LocalBox::new(b.x, b.y, b.w, b.h)
}

/// Borrows `len` items; a null pointer is fine only when `len == 0`.
unsafe fn slice<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, len))
    }
}

/// Copies `items` into `out[..cap]` and stores the full length in `out_len`.
unsafe fn copy_out<T: Copy>(items: &[T], out: *mut T, cap: usize, out_len: *mut usize) -> LbtStatus {
    if out_len.is_null() {
        return fail(LbtStatus::NullPointer, "out_len is null");
    }
    *out_len = items.len();
    if items.len() > cap {
        return fail(LbtStatus::BufferTooSmall, format!("need room for {} items, got {cap}", items.len()));
    }
    if items.is_empty() {
        return LbtStatus::Ok;
    }
    if out.is_null() {
        return fail(LbtStatus::NullPointer, "output buffer is null");
    }
    ptr::copy_nonoverlapping(items.as_ptr(), out, items.len());
    LbtStatus::Ok
}

macro_rules! handle {
    ($p:expr) => {
        match $p.as_mut() {
            Some(h) => h,
            None => return fail(LbtStatus::NullPointer, "tracker handle is null"),
        }
    };
}

/// Library defaults: kiou, d = 3, 1920x1080.
#[no_mangle]
pub extern "C" fn lbt_params_default() -> LbtParams {
    let t = TrackerConfig::default();
    let l = LbtConfig::default();
    LbtParams {
        mode: match t.mode {
            TrackerMode::Sort => LbtMode::Sort,
            TrackerMode::Kiou => LbtMode::Kiou,
        },
        frame_width: 1920,
        frame_height: 1080,
        d: l.d as u64,
        beta: l.beta,
        resolution: l.resolution,
        min_hits: t.min_hits,
        max_age: t.max_age,
        min_iou: t.min_iou,
        min_confidence: t.min_confidence,
    }
}

/// Creates a tracker. `*out` is set only on success.
///
/// # Safety
/// `params` must be null or point to a valid `LbtParams`; `out` must be null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn lbt_tracker_new(params: *const LbtParams, out: *mut *mut LbtTracker) -> LbtStatus {
    guard(|| {
        let (Some(p), false) = (params.as_ref(), out.is_null()) else {
            return fail(LbtStatus::NullPointer, "params or out is null");
        };
        if p.frame_width == 0 || p.frame_height == 0 {
            return fail(LbtStatus::InvalidArgument, "frame size must be positive");
        }
        let Ok(d) = usize::try_from(p.d) else {
            return fail(LbtStatus::InvalidArgument, "d does not fit in usize");
        };
        let base = TrackerConfig {
            mode: match p.mode {
                LbtMode::Sort => TrackerMode::Sort,
                LbtMode::Kiou => TrackerMode::Kiou,
            },
            min_hits: p.min_hits,
            max_age: p.max_age,
            min_iou: p.min_iou,
            min_confidence: p.min_confidence,
            ..TrackerConfig::default()
        };
        let cfg = LbtConfig { d, beta: p.beta, resolution: p.resolution, ..LbtConfig::default() };
        match lbt_core::lbt::LbtTracker::new(base, cfg, FrameDims::new(p.frame_width, p.frame_height)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(LbtTracker { inner }));
                LbtStatus::Ok
            }
            Err(e) => from_lbt(e),
        }
    })
}

/// Destroys a tracker. Null is ignored.
///
/// # Safety
/// `t` must be null or a handle from `lbt_tracker_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lbt_tracker_free(t: *mut LbtTracker) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a live handle or null; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn lbt_is_detection_frame(t: *const LbtTracker, frame: u64, out: *mut bool) -> LbtStatus {
    guard(|| {
        let (Some(h), false) = (t.as_ref(), out.is_null()) else {
            return fail(LbtStatus::NullPointer, "handle or out is null");
        };
        *out = h.inner.is_detection_frame(frame as usize);
        LbtStatus::Ok
    })
}

fn check_kind(inner: &LbtTracker, frame: u64, want_detection: bool) -> Result<usize, LbtStatus> {
    let f = usize::try_from(frame).map_err(|_| fail(LbtStatus::InvalidArgument, "frame index too large"))?;
    if inner.inner.is_detection_frame(f) != want_detection {
        let kind = if want_detection { "localization" } else { "detection" };
        return Err(fail(LbtStatus::WrongFrameKind, format!("frame {f} is a {kind} frame")));
    }
    Ok(f)
}

/// Runs a detection frame. Non-finite or degenerate boxes are rejected.
///
/// # Safety
/// `dets` must point to `n` readable items (or be null with `n == 0`).
#[no_mangle]
pub unsafe extern "C" fn lbt_step_detection(
    t: *mut LbtTracker,
    frame: u64,
    dets: *const LbtDetection,
    n: usize,
) -> LbtStatus {
    guard(|| {
        let h = handle!(t);
        let f = match check_kind(h, frame, true) {
            Ok(f) => f,
            Err(s) => return s,
        };
        let Some(dets) = slice(dets, n) else {
            return fail(LbtStatus::NullPointer, "detections pointer is null");
        };
        let mut conv = Vec::with_capacity(dets.len());
        for (i, d) in dets.iter().enumerate() {
            let b = GlobalBox::from(d.bbox);
            if !b.is_valid() || !d.confidence.is_finite() {
                return fail(LbtStatus::InvalidArgument, format!("detection {i} is not a finite positive-size box"));
            }
            conv.push(Detection::new(b, d.confidence));
        }
        match h.inner.step_detection(f, &conv) {
            Ok(()) => LbtStatus::Ok,
            Err(e) => from_lbt(e),
        }
    })
}

/// Predicts every live tracklet and builds one crop each. Read them with
/// `lbt_crop_request`, then call `lbt_finish_localization`.
///
/// # Safety
/// `t` must be a live handle; `n_crops` writable.
#[no_mangle]
pub unsafe extern "C" fn lbt_begin_localization(t: *mut LbtTracker, frame: u64, n_crops: *mut usize) -> LbtStatus {
    guard(|| {
        let h = handle!(t);
        if n_crops.is_null() {
            return fail(LbtStatus::NullPointer, "n_crops is null");
        }
        let f = match check_kind(h, frame, false) {
            Ok(f) => f,
            Err(s) => return s,
        };
        match h.inner.begin_localization(f) {
            Ok(plan) => {
                *n_crops = plan.requests.len();
                LbtStatus::Ok
            }
            Err(e) => from_lbt(e),
        }
    })
}

/// Crop `index` of the pending localization frame, in track-id order.
///
/// # Safety
/// `t` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lbt_crop_request(t: *const LbtTracker, index: usize, out: *mut LbtCropRequest) -> LbtStatus {
    guard(|| {
        let (Some(h), false) = (t.as_ref(), out.is_null()) else {
            return fail(LbtStatus::NullPointer, "handle or out is null");
        };
        let Some(plan) = h.inner.pending_plan() else {
            return fail(LbtStatus::NoPendingFrame, "no localization frame in progress");
        };
        let Some(r) = plan.requests.get(index) else {
            return fail(LbtStatus::OutOfRange, format!("crop {index} of {}", plan.requests.len()));
        };
        *out = LbtCropRequest {
            track_id: r.track_id,
            crop: r.crop.into(),
            apriori: r.apriori.into(),
            resolution: plan.resolution,
        };
        LbtStatus::Ok
    })
}

/// Applies one candidate list per crop. `n` must equal the crop count; on a
/// count mismatch the frame stays pending and may be retried.
///
/// # Safety
/// `lists` must point to `n` readable lists whose `items` point to `len`
/// readable candidates each.
#[no_mangle]
pub unsafe extern "C" fn lbt_finish_localization(
    t: *mut LbtTracker,
    lists: *const LbtCandidateList,
    n: usize,
) -> LbtStatus {
    guard(|| {
        let h = handle!(t);
        let Some(lists) = slice(lists, n) else {
            return fail(LbtStatus::NullPointer, "lists pointer is null");
        };
        let Some(frame) = h.inner.pending_plan().map(|p| p.frame_idx) else {
            return fail(LbtStatus::NoPendingFrame, "no localization frame in progress");
        };
        let mut outputs = Vec::with_capacity(lists.len());
        for (i, l) in lists.iter().enumerate() {
            if l.failed {
                outputs.push(Err(PerceptionError::Failed { frame, message: "caller reported failure".into() }));
                continue;
            }
            let Some(items) = slice(l.items, l.len) else {
                return fail(LbtStatus::NullPointer, format!("candidate list {i} is null"));
            };
            outputs.push(Ok(items
                .iter()
                .map(|c| LocalizerCandidate { bbox: local(c.bbox), confidence: c.confidence })
                .collect::<Vec<_>>()));
        }
        match h.inner.finish_localization(outputs) {
            Ok(_) => LbtStatus::Ok,
            Err(e) => from_lbt(e),
        }
    })
}

/// Live tracklets in id order. With `cap` too small, returns
/// `BufferTooSmall` and still writes the count to `out_len`.
///
/// # Safety
/// `out` must have room for `cap` items (or be null with `cap == 0`).
#[no_mangle]
pub unsafe extern "C" fn lbt_live_tracks(
    t: *const LbtTracker,
    out: *mut LbtTrack,
    cap: usize,
    out_len: *mut usize,
) -> LbtStatus {
    guard(|| {
        let Some(h) = t.as_ref() else {
            return fail(LbtStatus::NullPointer, "tracker handle is null");
        };
        let tracks: Vec<LbtTrack> = h
            .inner
            .tracker()
            .tracklets()
            .iter()
            .map(|k| LbtTrack {
                track_id: k.id,
                bbox: k.kstate.to_box().into(),
                confirmed: matches!(k.status, TrackStatus::Confirmed | TrackStatus::Lost),
                misses: k.misses,
            })
            .collect();
        copy_out(&tracks, out, cap, out_len)
    })
}

/// Output boxes of every confirmed tracklet so far, sorted by track id then
/// frame. Same buffer protocol as `lbt_live_tracks`.
///
/// # Safety
/// `out` must have room for `cap` items (or be null with `cap == 0`).
#[no_mangle]
pub unsafe extern "C" fn lbt_results(
    t: *const LbtTracker,
    out: *mut LbtRecord,
    cap: usize,
    out_len: *mut usize,
) -> LbtStatus {
    guard(|| {
        let Some(h) = t.as_ref() else {
            return fail(LbtStatus::NullPointer, "tracker handle is null");
        };
        let mut recs = Vec::new();
        for hist in h.inner.finalize() {
            recs.extend(hist.boxes.iter().map(|(f, b)| LbtRecord { frame: *f as u64, track_id: hist.id, bbox: (*b).into() }));
        }
        recs.sort_by_key(|r| (r.track_id, r.frame));
        copy_out(&recs, out, cap, out_len)
    })
}

/// Message for the last failed call on this thread, or null if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lbt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn lbt_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

#[no_mangle]
pub extern "C" fn lbt_iou(a: LbtBox, b: LbtBox) -> f64 {
    geometry::iou(&a.into(), &b.into())
}

/// Square crop of side `beta * max(w, h)` around `b`, before clipping.
#[no_mangle]
pub extern "C" fn lbt_make_crop(b: LbtBox, beta: f64) -> LbtCrop {
    geometry::make_crop(&b.into(), beta).into()
}

/// Moves `crop` inside a `width` x `height` frame with the smallest
/// translation, shrinking it first if it exceeds the smaller frame side.
#[no_mangle]
pub extern "C" fn lbt_clip_crop(crop: LbtCrop, width: u32, height: u32) -> LbtCrop {
    geometry::clip_crop(&crop.into(), &FrameDims::new(width, height)).into()
}

#[no_mangle]
pub extern "C" fn lbt_local_to_global(b: LbtBox, crop: LbtCrop, resolution: f64) -> LbtBox {
    geometry::local_to_global(&local(b), &crop.into(), resolution).into()
}

#[no_mangle]
pub extern "C" fn lbt_global_to_local(b: LbtBox, crop: LbtCrop, resolution: f64) -> LbtBox {
    geometry::global_to_local(&b.into(), &crop.into(), resolution).into()
}
