use std::ffi::CStr;
use std::ptr;

use lbt_core::geometry::{self, FrameDims, GlobalBox};
use lbt_core::lbt::{LbtConfig, LbtTracker as CoreTracker};
use lbt_core::perception::LocalizerCandidate;
use lbt_core::simulator::{generate_scene_seeded, SceneConfig};
use lbt_core::tracker::{Detection, TrackerConfig};
use lbt_ffi::*;

fn bx(b: GlobalBox) -> LbtBox {
    LbtBox { x: b.x, y: b.y, w: b.w, h: b.h }
}

fn new_tracker(p: &LbtParams) -> *mut LbtTracker {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { lbt_tracker_new(p, &mut t) }, LbtStatus::Ok);
    assert!(!t.is_null());
    t
}

fn last_error() -> String {
    let p = lbt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn results(t: *const LbtTracker) -> Vec<LbtRecord> {
    let mut len = 0;
    unsafe {
        let s = lbt_results(t, ptr::null_mut(), 0, &mut len);
        assert!(s == LbtStatus::Ok || s == LbtStatus::BufferTooSmall);
        let mut buf = vec![LbtRecord { frame: 0, track_id: 0, bbox: LbtBox { x: 0.0, y: 0.0, w: 0.0, h: 0.0 } }; len];
        assert_eq!(lbt_results(t, buf.as_mut_ptr(), len, &mut len), LbtStatus::Ok);
        buf
    }
}

/// Drives the C ABI and the library side by side on the same scripted
/// perception and expects identical output.
#[test]
fn matches_library_on_scripted_scene() {
    for mode in [LbtMode::Kiou, LbtMode::Sort] {
        let gt = generate_scene_seeded(&SceneConfig { n_frames: 120, seed: 21, ..SceneConfig::default() });
        let mut p = lbt_params_default();
        p.mode = mode;
        p.frame_width = gt.dims.width;
        p.frame_height = gt.dims.height;
        p.d = 3;
        let t = new_tracker(&p);

        let base = TrackerConfig {
            mode: if mode == LbtMode::Sort { "sort" } else { "kiou" }.parse().unwrap(),
            ..TrackerConfig::default()
        };
        let mut core = CoreTracker::new(base, LbtConfig::with_d(3), gt.dims).unwrap();

        for f in 0..gt.n_frames() {
            let boxes: Vec<GlobalBox> = gt.frame(f).iter().map(|(_, b)| *b).collect();
            let mut det = false;
            assert_eq!(unsafe { lbt_is_detection_frame(t, f as u64, &mut det) }, LbtStatus::Ok);
            assert_eq!(det, core.is_detection_frame(f));
            if det {
                let dets: Vec<LbtDetection> = boxes.iter().map(|b| LbtDetection { bbox: bx(*b), confidence: 0.9 }).collect();
                assert_eq!(unsafe { lbt_step_detection(t, f as u64, dets.as_ptr(), dets.len()) }, LbtStatus::Ok);
                let cd: Vec<Detection> = boxes.iter().map(|b| Detection::new(*b, 0.9)).collect();
                core.step_detection(f, &cd).unwrap();
            } else {
                let mut n = 0;
                assert_eq!(unsafe { lbt_begin_localization(t, f as u64, &mut n) }, LbtStatus::Ok);
                let plan = core.begin_localization(f).unwrap().clone();
                assert_eq!(n, plan.requests.len());
                let mut cands: Vec<Vec<LbtCandidate>> = Vec::new();
                let mut core_out = Vec::new();
                for (i, r) in plan.requests.iter().enumerate() {
                    let mut req = std::mem::MaybeUninit::<LbtCropRequest>::uninit();
                    assert_eq!(unsafe { lbt_crop_request(t, i, req.as_mut_ptr()) }, LbtStatus::Ok);
                    let req = unsafe { req.assume_init() };
                    assert_eq!(req.track_id, r.track_id);
                    assert_eq!(req.crop, LbtCrop { cx: r.crop.cx, cy: r.crop.cy, s: r.crop.s });
                    assert_eq!(req.apriori, bx(r.apriori));
                    let local: Vec<_> = boxes
                        .iter()
                        .filter(|b| r.crop.intersects(b))
                        .map(|b| geometry::global_to_local(b, &r.crop, req.resolution))
                        .collect();
                    cands.push(local.iter().map(|l| LbtCandidate { bbox: LbtBox { x: l.x, y: l.y, w: l.w, h: l.h }, confidence: 0.8 }).collect());
                    core_out.push(Ok(local.iter().map(|l| LocalizerCandidate { bbox: *l, confidence: 0.8 }).collect()));
                }
                let lists: Vec<LbtCandidateList> =
                    cands.iter().map(|c| LbtCandidateList { items: c.as_ptr(), len: c.len(), failed: false }).collect();
                assert_eq!(unsafe { lbt_finish_localization(t, lists.as_ptr(), lists.len()) }, LbtStatus::Ok);
                core.finish_localization(core_out).unwrap();
            }
        }

        let mut expected: Vec<(u64, u64, LbtBox)> = Vec::new();
        for h in core.finalize() {
            expected.extend(h.boxes.iter().map(|(f, b)| (h.id, *f as u64, bx(*b))));
        }
        expected.sort_by_key(|e| (e.0, e.1));
        let got: Vec<(u64, u64, LbtBox)> = results(t).iter().map(|r| (r.track_id, r.frame, r.bbox)).collect();
        assert!(!got.is_empty());
        assert_eq!(got, expected);
        unsafe { lbt_tracker_free(t) };
    }
}

#[test]
fn status_codes() {
    let mut p = lbt_params_default();
    p.d = 1;
    p.min_hits = 1;
    let mut t = ptr::null_mut();
    unsafe {
        assert_eq!(lbt_tracker_new(ptr::null(), &mut t), LbtStatus::NullPointer);
        assert_eq!(lbt_tracker_new(&p, ptr::null_mut()), LbtStatus::NullPointer);
        let mut bad = p;
        bad.beta = 0.5;
        assert_eq!(lbt_tracker_new(&bad, &mut t), LbtStatus::InvalidArgument);
        assert!(t.is_null());
        bad = p;
        bad.frame_width = 0;
        assert_eq!(lbt_tracker_new(&bad, &mut t), LbtStatus::InvalidArgument);
        bad = p;
        bad.min_hits = 0;
        assert_eq!(lbt_tracker_new(&bad, &mut t), LbtStatus::InvalidArgument);

        let t = new_tracker(&p);
        let det = [LbtDetection { bbox: LbtBox { x: 100.0, y: 100.0, w: 30.0, h: 60.0 }, confidence: 0.9 }];
        let mut n = 0;

        assert_eq!(lbt_step_detection(ptr::null_mut(), 0, det.as_ptr(), 1), LbtStatus::NullPointer);
        assert_eq!(lbt_step_detection(t, 0, ptr::null(), 1), LbtStatus::NullPointer);
        assert_eq!(lbt_begin_localization(t, 0, &mut n), LbtStatus::WrongFrameKind);
        assert!(last_error().contains("detection frame"));
        let nan = [LbtDetection { bbox: LbtBox { x: f64::NAN, y: 1.0, w: 1.0, h: 1.0 }, confidence: 0.9 }];
        assert_eq!(lbt_step_detection(t, 0, nan.as_ptr(), 1), LbtStatus::InvalidArgument);
        assert_eq!(lbt_step_detection(t, 0, det.as_ptr(), 1), LbtStatus::Ok);

        assert_eq!(lbt_step_detection(t, 1, det.as_ptr(), 1), LbtStatus::WrongFrameKind);
        let mut req = LbtCropRequest {
            track_id: 0,
            crop: LbtCrop { cx: 0.0, cy: 0.0, s: 0.0 },
            apriori: LbtBox { x: 0.0, y: 0.0, w: 0.0, h: 0.0 },
            resolution: 0.0,
        };
        assert_eq!(lbt_crop_request(t, 0, &mut req), LbtStatus::NoPendingFrame);
        assert_eq!(lbt_finish_localization(t, ptr::null(), 0), LbtStatus::NoPendingFrame);
        assert_eq!(lbt_begin_localization(t, 1, &mut n), LbtStatus::Ok);
        assert_eq!(n, 1);
        assert_eq!(lbt_crop_request(t, 1, &mut req), LbtStatus::OutOfRange);
        assert_eq!(lbt_crop_request(t, 0, &mut req), LbtStatus::Ok);
        assert_eq!(req.track_id, 0);
        assert_eq!(req.resolution, 100.0);

        // wrong count leaves the frame pending
        assert_eq!(lbt_finish_localization(t, ptr::null(), 0), LbtStatus::ResultCount);
        assert!(last_error().contains("expected 1"), "{}", last_error());
        let bad_list = [LbtCandidateList { items: ptr::null(), len: 2, failed: false }];
        assert_eq!(lbt_finish_localization(t, bad_list.as_ptr(), 1), LbtStatus::NullPointer);
        let failed = [LbtCandidateList { items: ptr::null(), len: 0, failed: true }];
        assert_eq!(lbt_finish_localization(t, failed.as_ptr(), 1), LbtStatus::Ok);

        let mut tracks = [LbtTrack { track_id: 9, bbox: det[0].bbox, confirmed: false, misses: 0 }; 1];
        let mut len = 0;
        assert_eq!(lbt_live_tracks(t, ptr::null_mut(), 0, &mut len), LbtStatus::BufferTooSmall);
        assert_eq!(len, 1);
        assert_eq!(lbt_live_tracks(t, tracks.as_mut_ptr(), 1, &mut len), LbtStatus::Ok);
        assert_eq!(tracks[0].track_id, 0);
        assert_eq!(tracks[0].misses, 1);
        assert!(tracks[0].confirmed);
        assert_eq!(lbt_live_tracks(t, tracks.as_mut_ptr(), 1, ptr::null_mut()), LbtStatus::NullPointer);

        // the sequence cannot go backwards
        assert_eq!(lbt_step_detection(t, 0, det.as_ptr(), 1), LbtStatus::FrameOrder);
        assert_eq!(lbt_step_detection(t, 2, det.as_ptr(), 1), LbtStatus::Ok);
        let recs = results(t);
        assert_eq!(recs.iter().map(|r| r.frame).collect::<Vec<_>>(), vec![0, 2]);

        lbt_clear_error();
        assert!(lbt_last_error_message().is_null());
        lbt_tracker_free(t);
        lbt_tracker_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_per_thread() {
    let mut t = ptr::null_mut();
    unsafe { lbt_tracker_new(ptr::null(), &mut t) };
    assert!(!lbt_last_error_message().is_null());
    std::thread::spawn(|| assert!(lbt_last_error_message().is_null())).join().unwrap();
}

#[test]
fn geometry_helpers_match_library() {
    let a = GlobalBox::new(50.0, 40.0, 20.0, 10.0);
    let b = GlobalBox::new(55.0, 42.0, 20.0, 12.0);
    assert_eq!(lbt_iou(bx(a), bx(b)), geometry::iou(&a, &b));
    assert_eq!(lbt_iou(bx(a), bx(a)), 1.0);

    let crop = lbt_make_crop(bx(a), 2.0);
    assert_eq!(crop, LbtCrop { cx: 50.0, cy: 40.0, s: 40.0 });
    let clipped = lbt_clip_crop(crop, 60, 60);
    let want = geometry::clip_crop(&geometry::make_crop(&a, 2.0), &FrameDims::new(60, 60));
    assert_eq!(clipped, LbtCrop { cx: want.cx, cy: want.cy, s: want.s });

    let local = lbt_global_to_local(bx(b), crop, 100.0);
    let back = lbt_local_to_global(local, crop, 100.0);
    for (x, y) in [(back.x, b.x), (back.y, b.y), (back.w, b.w), (back.h, b.h)] {
        assert!((x - y).abs() < 1e-9);
    }
}
