use std::path::Path;
use std::process::{Command, Output};

fn lbt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbt")).args(args).current_dir(dir).output().expect("spawn lbt")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

const SMALL: &str = "[scene]\nn_frames = 150\n";

#[test]
fn simulate_track_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.toml"), SMALL).unwrap();
    ok(&lbt(&["simulate", "--config", "cfg.toml", "--seed", "4", "--out", "gt.txt"], d));
    let gt = std::fs::read_to_string(d.join("gt.txt")).unwrap();
    assert!(!gt.is_empty());
    assert!(gt.lines().all(|l| l.ends_with(",1.00,-1,-1,-1")));

    // gt against itself is perfect
    ok(&lbt(&["eval", "--config", "cfg.toml", "--gt", "gt.txt", "--hyp", "gt.txt", "--out", "self.csv"], d));
    let row = std::fs::read_to_string(d.join("self.csv")).unwrap();
    assert!(row.lines().nth(1).unwrap().starts_with("1.0000,1.0000,"), "{row}");

    for tracker in ["kiou", "sort"] {
        let res = format!("res_{tracker}.txt");
        ok(&lbt(&["track", "--config", "cfg.toml", "--gt", "gt.txt", "--seed", "4", "--d", "3", "--tracker", tracker, "--out", &res], d));
        assert!(d.join(format!("res_{tracker}.timing.csv")).exists());
        ok(&lbt(&["eval", "--config", "cfg.toml", "--gt", "gt.txt", "--hyp", &res], d));
    }
}

#[test]
fn track_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.toml"), SMALL).unwrap();
    for name in ["a.txt", "b.txt"] {
        ok(&lbt(&["track", "--config", "cfg.toml", "--d", "0", "--seed", "9", "--out", name], d));
    }
    let a = std::fs::read(d.join("a.txt")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, std::fs::read(d.join("b.txt")).unwrap());
}

#[test]
fn file_detector_runs_from_detections() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("dets.txt"), "1,-1,100,100,40,40,0.9\n2,-1,102,100,40,40,0.9\n3,-1,104,100,40,40,0.9\n").unwrap();
    let out = lbt(&["track", "--detector", "file", "--detections", "dets.txt", "--d", "0", "--out", "res.txt"], d);
    ok(&out);
    let res = std::fs::read_to_string(d.join("res.txt")).unwrap();
    // a confirmed tracklet keeps the frames it spent tentative
    assert_eq!(res.lines().count(), 3);
    assert!(res.lines().all(|l| l.split(',').nth(1) == Some("0")));
    assert!(res.starts_with("1,0,100.00,100.00,40.00,40.00,"));

    // localization needs ground truth
    let out = lbt(&["track", "--detector", "file", "--detections", "dets.txt", "--d", "1"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "[tracker]\nnot_a_key = 1\n").unwrap();
    assert_eq!(lbt(&["simulate", "--config", "bad.toml"], d).status.code(), Some(2));
    assert_eq!(lbt(&["simulate", "--beta", "0.5"], d).status.code(), Some(2));
    assert_eq!(lbt(&["track", "--tracker", "deepsort"], d).status.code(), Some(2));
    assert_eq!(lbt(&["track", "--detector", "file"], d).status.code(), Some(2));

    std::fs::write(d.join("broken.txt"), "1,-1,10,20,30,40,0.9\n1,-1,oops,20,30,40,0.9\n").unwrap();
    let out = lbt(&["eval", "--gt", "broken.txt", "--hyp", "broken.txt"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(lbt(&["eval", "--gt", "missing.txt", "--hyp", "missing.txt"], d).status.code(), Some(3));

    // result frames past the end of ground truth
    std::fs::write(d.join("gt.txt"), "1,0,10,20,30,40,1\n").unwrap();
    std::fs::write(d.join("hyp.txt"), "1,0,10,20,30,40,1\n5,0,10,20,30,40,1\n").unwrap();
    assert_eq!(lbt(&["eval", "--gt", "gt.txt", "--hyp", "hyp.txt"], d).status.code(), Some(4));
    ok(&lbt(&["eval", "--gt", "gt.txt", "--hyp", "hyp.txt", "--frames", "5"], d));
}

#[test]
fn sweep_and_bench_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.toml"),
        "[scene]\nn_frames = 120\nexclusive = true\n[tracker]\nmin_hits = 1\n[run]\nseed = 2\nsweep_d = [0, 1, 3]\nbench_repeats = 1\n",
    )
    .unwrap();
    let out = lbt(&["sweep", "--config", "cfg.toml", "--out", "sweep.csv"], d);
    ok(&out);
    let csv = std::fs::read_to_string(d.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "d,FPS,MOTA,MOTP,MT,FP,FN,IDs,crops");
    assert_eq!(lines.len(), 4);
    let timing = std::fs::read_to_string(d.join("sweep.timing.csv")).unwrap();
    assert!(timing.starts_with("d,sim_FPS,wall_FPS"));

    let out = lbt(&["bench", "--config", "cfg.toml"], d);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("wall_FPS"));
    assert_eq!(text.lines().count(), 4);
}
