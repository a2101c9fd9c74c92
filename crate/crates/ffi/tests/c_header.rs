//! Compiles a C program against the generated header and static library.

use std::path::PathBuf;
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(crate_dir().join("include/lbt.h")).unwrap();
    for name in [
        "typedef struct LbtTracker LbtTracker;",
        "LBT_STATUS_BUFFER_TOO_SMALL = 7",
        "enum LbtStatus lbt_tracker_new(",
        "void lbt_tracker_free(",
        "enum LbtStatus lbt_finish_localization(",
        "const char *lbt_last_error_message(void);",
        "double lbt_iou(",
    ] {
        assert!(h.contains(name), "missing `{name}`");
    }
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include "lbt.h"

int main(void) {
    LbtParams p = lbt_params_default();
    p.d = 1;
    p.min_hits = 1;
    LbtTracker *t = NULL;
    if (lbt_tracker_new(&p, &t) != LBT_STATUS_OK) return 1;
    LbtDetection det = {{100.0, 100.0, 40.0, 40.0}, 0.9};
    if (lbt_step_detection(t, 0, &det, 1) != LBT_STATUS_OK) return 2;
    size_t n = 0;
    if (lbt_begin_localization(t, 1, &n) != LBT_STATUS_OK || n != 1) return 3;
    LbtCropRequest req;
    if (lbt_crop_request(t, 0, &req) != LBT_STATUS_OK) return 4;
    LbtBox moved = {102.0, 100.0, 40.0, 40.0};
    LbtCandidate c = {lbt_global_to_local(moved, req.crop, req.resolution), 0.9};
    LbtCandidateList list = {&c, 1, false};
    if (lbt_finish_localization(t, &list, 1) != LBT_STATUS_OK) return 5;
    if (lbt_step_detection(t, 1, &det, 1) != LBT_STATUS_WRONG_FRAME_KIND) return 6;
    if (lbt_last_error_message() == NULL) return 7;
    LbtRecord recs[4];
    size_t len = 0;
    if (lbt_results(t, recs, 4, &len) != LBT_STATUS_OK || len != 2) return 8;
    printf("%zu %llu %.2f\n", len, (unsigned long long)recs[1].frame, recs[1].bbox.x);
    lbt_tracker_free(t);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    // target/<profile>/deps/<test-bin> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("liblbt_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("2 1 "), "{text}");
}
