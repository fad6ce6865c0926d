//! Command-line behaviour: the full pipeline on files, exit codes and
//! diagnostics.

use std::fs;
use std::path::Path;
use std::process::Command;

use boxtrack::cli::dispatch;
use boxtrack::stream_io::{read_segments, read_tracks, TrackRow};
use boxtrack::SegmentKind;

fn run(args: &[&str]) -> boxtrack::cli::CommandOutcome {
    dispatch(std::iter::once("boxtrack").chain(args.iter().copied()))
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn synth(dir: &Path, preset: &str, seed: &str) {
    let out = run(&[
        "synth",
        "--preset",
        preset,
        "--seed",
        seed,
        "--bouts",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.exit_code, 0, "{}", out.stderr);
}

#[test]
fn pipeline_on_clean_session() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "clean", "7");
    for f in [
        "detections.jsonl",
        "gt.jsonl",
        "segments.json",
        "ring.json",
        "config.json",
    ] {
        assert!(d.join(f).is_file(), "{f} missing");
    }

    let out = run(&["validate", "--detections", &p(d, "detections.jsonl")]);
    assert_eq!(out.exit_code, 0, "{}", out.stdout);

    let out = run(&[
        "segment",
        "--detections",
        &p(d, "detections.jsonl"),
        "--ring",
        &p(d, "ring.json"),
        "--config",
        &p(d, "config.json"),
        "--out",
        &p(d, "pred_segments.json"),
    ]);
    assert_eq!(out.exit_code, 0, "{}", out.stderr);
    let segments = read_segments(fs::File::open(d.join("pred_segments.json")).unwrap()).unwrap();
    assert_eq!(
        segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Bout)
            .count(),
        2
    );

    let out = run(&[
        "track",
        "--mode",
        "pose",
        "--detections",
        &p(d, "detections.jsonl"),
        "--bouts",
        &p(d, "pred_segments.json"),
        "--config",
        &p(d, "config.json"),
        "--out",
        &p(d, "tracks.csv"),
        "--poses-out",
        &p(d, "poses.jsonl"),
    ]);
    assert_eq!(out.exit_code, 0, "{}", out.stderr);
    let tracks: Vec<TrackRow<f64>> = read_tracks(std::io::BufReader::new(
        fs::File::open(d.join("tracks.csv")).unwrap(),
    ))
    .unwrap();
    assert!(!tracks.is_empty());

    let out = run(&[
        "eval",
        "--tracks",
        &p(d, "tracks.csv"),
        "--gt",
        &p(d, "gt.jsonl"),
        "--gt-segments",
        &p(d, "segments.json"),
        "--pred-segments",
        &p(d, "pred_segments.json"),
        "--config",
        &p(d, "config.json"),
        "--out",
        &p(d, "metrics.json"),
    ]);
    assert_eq!(out.exit_code, 0, "{}", out.stderr);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["idu"], 0);
    assert_eq!(metrics["ids"], 0);
    assert_eq!(metrics["transition_accuracy"], 1.0);

    let out = run(&[
        "analyze",
        "--tracks",
        &p(d, "tracks.csv"),
        "--poses",
        &p(d, "poses.jsonl"),
        "--ring",
        &p(d, "ring.json"),
        "--config",
        &p(d, "config.json"),
        "--hotspot",
        &p(d, "heat.pgm"),
        "--los",
        &p(d, "los.csv"),
    ]);
    assert_eq!(out.exit_code, 0, "{}", out.stderr);
    let pgm = fs::read_to_string(d.join("heat.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n"));
    let los = fs::read_to_string(d.join("los.csv")).unwrap();
    assert!(los.starts_with("frame,id,ux,uy\n"));
    assert!(los.lines().count() > 1);
}

#[test]
fn descriptor_mode_writes_tracks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "clinch", "3");
    let out = run(&[
        "track",
        "--mode",
        "descriptor",
        "--detections",
        &p(d, "detections.jsonl"),
        "--bouts",
        &p(d, "segments.json"),
        "--config",
        &p(d, "config.json"),
        "--out",
        &p(d, "tracks.csv"),
    ]);
    assert_eq!(out.exit_code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("rows"));
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "dropout", "11");
    synth(b.path(), "dropout", "11");
    for f in ["detections.jsonl", "gt.jsonl", "segments.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    fs::write(
        &path,
        "{\"frame\":0,\"detections\":[{\"bbox\":[0,0,-1,5],\"conf\":0.5}]}\n\
         {\"frame\":0,\"detections\":[]}\n",
    )
    .unwrap();
    let out = run(&["validate", "--detections", path.to_str().unwrap()]);
    assert_eq!(out.exit_code, 1);
    let lines: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(lines.len(), 2, "{}", out.stdout);
    assert!(lines[0].starts_with("line 1, detection 0:") && lines[0].contains("width"));
    assert!(lines[1].starts_with("line 2:"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).exit_code, 0);
    assert_eq!(run(&["--version"]).exit_code, 0);
    assert_eq!(run(&["frobnicate"]).exit_code, 1);
    assert_eq!(
        run(&["synth", "--preset", "no-such-preset", "--seed", "1"]).exit_code,
        1
    );
    assert_eq!(
        run(&[
            "track",
            "--mode",
            "sideways",
            "--detections",
            "a",
            "--bouts",
            "b",
            "--out",
            "c"
        ])
        .exit_code,
        1
    );
    let missing = run(&["validate", "--detections", "/nonexistent/detections.jsonl"]);
    assert_eq!(missing.exit_code, 2);
    assert!(missing.stderr.contains("/nonexistent/detections.jsonl"));
}

#[test]
fn malformed_input_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("det.jsonl"), "not json\n").unwrap();
    fs::write(
        d.join("ring.json"),
        "{\"corners\":[[0,0],[10,0],[10,10],[0,10]]}",
    )
    .unwrap();
    let out = run(&[
        "segment",
        "--detections",
        &p(d, "det.jsonl"),
        "--ring",
        &p(d, "ring.json"),
        "--out",
        &p(d, "s.json"),
    ]);
    assert_eq!(out.exit_code, 1, "{}", out.stderr);
    assert!(out.stderr.starts_with("error:"));
}

#[test]
fn binary_propagates_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_boxtrack");
    let ok = Command::new(bin).arg("--help").output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("synth"));
    let io = Command::new(bin)
        .args(["validate", "--detections", "/nonexistent/x.jsonl"])
        .output()
        .unwrap();
    assert_eq!(io.status.code(), Some(2));
    let usage = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
}
