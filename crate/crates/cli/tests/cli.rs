use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn swimtrack(args: &[&str]) -> Output {
    swimtrack_with_seed(args, None)
}

fn swimtrack_with_seed(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_swimtrack"));
    cmd.args(args).env_remove("SWIMTRACK_SEED");
    if let Some(seed) = seed {
        cmd.env("SWIMTRACK_SEED", seed);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn json(path: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = path(dir, name);
    fs::write(&p, text).unwrap();
    p
}

fn small_config(dir: &TempDir, extra: &str) -> String {
    write(
        dir,
        "config.json",
        &format!(r#"{{"n_lanes": 3, "duration_s": 10, "stroke_freq_hz": [1.0] {extra}}}"#),
    )
}

#[test]
fn noiseless_simulation_detections_equal_ground_truth() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir, "");
    let out = swimtrack(&[
        "simulate",
        "--config",
        &cfg,
        "--out-dir",
        &path(&dir, "sim"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let boxes = |name: &str| -> Vec<String> {
        let mut rows: Vec<String> = fs::read_to_string(dir.path().join("sim").join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                format!("{},{}", f[0], f[2..6].join(","))
            })
            .collect();
        rows.sort();
        rows
    };
    assert_eq!(boxes("detections.csv"), boxes("gt_tracks.csv"));
    for lane in 1..=3 {
        assert!(dir
            .path()
            .join(format!("sim/svalues_lane{lane}.csv"))
            .is_file());
        assert!(dir
            .path()
            .join(format!("sim/svalues_truth_lane{lane}.csv"))
            .is_file());
    }
    assert_eq!(
        json(&path(&dir, "sim/truth_peaks.json"))["lanes"]
            .as_array()
            .unwrap()
            .len(),
        3
    );
}

#[test]
fn simulation_is_deterministic_and_seed_can_be_overridden() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir, r#", "det_noise_px": 2.0, "fp_rate": 0.5, "seed": 11"#);
    let run = |out: &str, seed: Option<&str>| {
        let o = swimtrack_with_seed(
            &["simulate", "--config", &cfg, "--out-dir", &path(&dir, out)],
            seed,
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(dir.path().join(out).join("detections.csv")).unwrap()
    };
    let a = run("a", None);
    assert_eq!(a, run("b", None));
    assert_eq!(a, run("c", Some("11")));
    assert_ne!(a, run("d", Some("12")));
    assert_eq!(json(&path(&dir, "d/config.json"))["seed"], 12);
    let bad = swimtrack_with_seed(
        &["simulate", "--config", &cfg, "--out-dir", &path(&dir, "e")],
        Some("x"),
    );
    assert_eq!(code(&bad), 2);
}

#[test]
fn bad_or_missing_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = swimtrack(&[
        "simulate",
        "--config",
        &path(&dir, "absent.json"),
        "--out-dir",
        &path(&dir, "o"),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("absent.json"));
    let unknown = write(&dir, "unknown.json", r#"{"lanes": 3}"#);
    assert_eq!(
        code(&swimtrack(&[
            "simulate",
            "--config",
            &unknown,
            "--out-dir",
            &path(&dir, "o")
        ])),
        2
    );
    let invalid = write(&dir, "invalid.json", r#"{"n_lanes": 0}"#);
    assert_eq!(
        code(&swimtrack(&[
            "simulate",
            "--config",
            &invalid,
            "--out-dir",
            &path(&dir, "o")
        ])),
        2
    );
    let dets = write(&dir, "d.csv", "");
    let tracker = write(&dir, "tracker.json", r#"{"iou_min": 2.0}"#);
    let out = swimtrack(&[
        "track",
        "--detections",
        &dets,
        "--config",
        &tracker,
        "--out",
        &path(&dir, "t.csv"),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn track_handles_empty_and_rejects_bad_rows() {
    let dir = TempDir::new().unwrap();
    let empty = write(&dir, "empty.csv", "");
    let out = swimtrack(&[
        "track",
        "--detections",
        &empty,
        "--out",
        &path(&dir, "t.csv"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        fs::read_to_string(path(&dir, "t.csv"))
            .unwrap()
            .lines()
            .count(),
        1
    );

    let header = "frame,track_id,x,y,w,h,confidence,class_id,lane\n";
    let order = write(
        &dir,
        "order.csv",
        &format!("{header}5,-1,0,0,10,10,0.9,2,1\n4,-1,0,0,10,10,0.9,2,1\n"),
    );
    let out = swimtrack(&[
        "track",
        "--detections",
        &order,
        "--out",
        &path(&dir, "t2.csv"),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let bad = write(
        &dir,
        "bad.csv",
        &format!("{header}5,-1,0,0,10,10,0.9,2,1\n6,-1,0,zero,10,10,0.9,2,1\n"),
    );
    let out = swimtrack(&[
        "track",
        "--detections",
        &bad,
        "--out",
        &path(&dir, "t3.csv"),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let out = swimtrack(&[
        "track",
        "--detections",
        &path(&dir, "nope.csv"),
        "--out",
        &path(&dir, "t4.csv"),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn tracked_ids_are_stable_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir, "");
    swimtrack(&[
        "simulate",
        "--config",
        &cfg,
        "--out-dir",
        &path(&dir, "sim"),
    ]);
    for out in ["a.csv", "b.csv"] {
        let o = swimtrack(&[
            "track",
            "--detections",
            &path(&dir, "sim/detections.csv"),
            "--out",
            &path(&dir, out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(path(&dir, "a.csv")).unwrap(),
        fs::read(path(&dir, "b.csv")).unwrap()
    );
    let o = swimtrack(&[
        "eval-mot",
        "--gt",
        &path(&dir, "sim/gt_tracks.csv"),
        "--hyp",
        &path(&dir, "a.csv"),
        "--out",
        &path(&dir, "m.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&path(&dir, "m.json"))["mota"], 100.0);
}

fn svalue_file(dir: &TempDir, name: &str, n: usize, freq: f64, swimming: bool) -> String {
    let mut text = String::from("frame,s_value,swimming\n");
    for i in 0..n {
        let s = if swimming {
            0.5 + 0.5 * (std::f64::consts::TAU * freq * i as f64 / 30.0 + 0.3).sin()
        } else {
            0.5
        };
        text.push_str(&format!("{i},{s:.6},{}\n", u8::from(swimming)));
    }
    write(dir, name, &text)
}

#[test]
fn strokes_reports_rates_and_signal_errors() {
    let dir = TempDir::new().unwrap();
    let one_hz = svalue_file(&dir, "s.csv", 900, 1.0, true);
    let out = swimtrack(&[
        "strokes",
        "--svalues",
        &one_hz,
        "--fps",
        "30",
        "--out",
        &path(&dir, "s.json"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&path(&dir, "s.json"));
    let rates = v["rates"].as_array().unwrap();
    assert!(!rates.is_empty());
    for r in rates {
        let spm = r["spm"].as_f64().unwrap();
        assert!((spm / 60.0 - 1.0).abs() < 0.02, "{spm}");
        assert!(r["frame"].is_number());
    }
    assert_eq!(v["peaks"].as_array().unwrap().len(), rates.len() + 1);

    let idle = svalue_file(&dir, "idle.csv", 300, 1.0, false);
    let out = swimtrack(&[
        "strokes",
        "--svalues",
        &idle,
        "--fps",
        "30",
        "--out",
        &path(&dir, "i.json"),
    ]);
    assert_eq!(code(&out), 4);
    assert!(
        stderr(&out).to_lowercase().contains("swimming"),
        "{}",
        stderr(&out)
    );

    let short = svalue_file(&dir, "short.csv", 10, 1.0, true);
    assert_eq!(
        code(&swimtrack(&[
            "strokes",
            "--svalues",
            &short,
            "--fps",
            "30",
            "--out",
            &path(&dir, "x.json")
        ])),
        4
    );
    assert_eq!(
        code(&swimtrack(&[
            "strokes",
            "--svalues",
            &one_hz,
            "--fps",
            "6",
            "--out",
            &path(&dir, "x.json")
        ])),
        2
    );
    let bad = write(&dir, "bad.csv", "0,1.2,1\n");
    assert_eq!(
        code(&swimtrack(&[
            "strokes",
            "--svalues",
            &bad,
            "--fps",
            "30",
            "--out",
            &path(&dir, "x.json")
        ])),
        3
    );
}

fn track_csv(dir: &TempDir, name: &str, pieces: &[(u32, std::ops::Range<u32>)]) -> String {
    let mut text = String::from("frame,track_id,x,y,w,h,confidence,class_id,lane\n");
    for (id, frames) in pieces {
        for f in frames.clone() {
            text.push_str(&format!("{f},{id},{},40,60,30,1,2,1\n", 10 + 2 * f));
        }
    }
    write(dir, name, &text)
}

#[test]
fn eval_mot_identity_and_split_fixture() {
    let dir = TempDir::new().unwrap();
    let gt = track_csv(&dir, "gt.csv", &[(1, 0..100)]);
    let split = track_csv(&dir, "split.csv", &[(7, 0..50), (9, 50..100)]);
    assert_eq!(
        code(&swimtrack(&[
            "eval-mot",
            "--gt",
            &gt,
            "--hyp",
            &gt,
            "--out",
            &path(&dir, "a.json")
        ])),
        0
    );
    let a = json(&path(&dir, "a.json"));
    assert_eq!(a["mota"], 100.0);
    for key in [
        "mota", "motp", "idf1", "idp", "idr", "mt", "pt", "ml", "fp", "fn", "idsw",
    ] {
        assert!(a.get(key).is_some(), "{key}");
    }
    assert_eq!(
        code(&swimtrack(&[
            "eval-mot",
            "--gt",
            &gt,
            "--hyp",
            &split,
            "--out",
            &path(&dir, "b.json")
        ])),
        0
    );
    assert_eq!(json(&path(&dir, "b.json"))["idsw"], 1);

    let sparse = write(
        &dir,
        "sparse.csv",
        "0,1,0,0,10,10,1,2,3\n3,1,3,0,10,10,1,2,3\n",
    );
    let dense = write(
        &dir,
        "dense.csv",
        "0,5,0,0,10,10,1,2,3\n1,5,1,0,10,10,1,2,3\n2,5,2,0,10,10,1,2,3\n3,5,3,0,10,10,1,2,3\n",
    );
    let out = swimtrack(&[
        "eval-mot",
        "--gt",
        &sparse,
        "--hyp",
        &dense,
        "--interpolate-gt",
        "--out",
        &path(&dir, "c.json"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(json(&path(&dir, "c.json"))["num_matches"], 4);

    let raw = write(&dir, "raw.csv", "0,-1,0,0,10,10,1,2,3\n");
    assert_eq!(
        code(&swimtrack(&[
            "eval-mot",
            "--gt",
            &raw,
            "--hyp",
            &gt,
            "--out",
            &path(&dir, "d.json")
        ])),
        3
    );
}

#[test]
fn eval_stroke_identical_peaks_score_one() {
    let dir = TempDir::new().unwrap();
    let s = svalue_file(&dir, "s.csv", 300, 1.0, true);
    let pred = write(
        &dir,
        "pred.json",
        r#"{"peaks": [10.0, 40.0, 70.0], "rates": []}"#,
    );
    let truth = write(
        &dir,
        "truth.json",
        r#"{"lanes": [{"track_id": 1, "peaks": [0.0]}, {"track_id": 2, "peaks": [10.0, 40.0, 70.0]}]}"#,
    );
    let out = swimtrack(&[
        "eval-stroke",
        "--pred",
        &pred,
        "--truth",
        &truth,
        "--track-id",
        "2",
        "--svalues-pred",
        &s,
        "--svalues-truth",
        &s,
        "--out",
        &path(&dir, "r.json"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = json(&path(&dir, "r.json"));
    assert_eq!(r["f1"], 1.0);
    assert_eq!(r["delta"], 0.0);
    assert_eq!(r["fn"], 0);

    let out = swimtrack(&[
        "eval-stroke",
        "--pred",
        &pred,
        "--truth",
        &truth,
        "--svalues-pred",
        &s,
        "--svalues-truth",
        &s,
        "--out",
        &path(&dir, "r2.json"),
    ]);
    assert_eq!(code(&out), 3);
    let shorter = svalue_file(&dir, "s2.csv", 200, 1.0, true);
    let out = swimtrack(&[
        "eval-stroke",
        "--pred",
        &pred,
        "--truth",
        &pred,
        "--svalues-pred",
        &s,
        "--svalues-truth",
        &shorter,
        "--out",
        &path(&dir, "r3.json"),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn pipeline_summarizes_every_track() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "config.json",
        r#"{"n_lanes": 3, "duration_s": 30, "stroke_freq_hz": [0.6, 1.0, 1.4]}"#,
    );
    swimtrack(&[
        "simulate",
        "--config",
        &cfg,
        "--out-dir",
        &path(&dir, "sim"),
    ]);
    fs::remove_file(dir.path().join("sim/svalues_lane2.csv")).unwrap();
    let run = |out: &str| {
        let o = swimtrack(&[
            "pipeline",
            "--detections",
            &path(&dir, "sim/detections.csv"),
            "--svalues-dir",
            &path(&dir, "sim"),
            "--fps",
            "30",
            "--out-dir",
            &path(&dir, out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        json(&path(&dir, &format!("{out}/summary.json")))
    };
    let summary = run("p1");
    assert_eq!(summary, run("p2"));
    let tracks = summary["tracks"].as_array().unwrap();
    assert_eq!(tracks.len(), 3);
    for (t, freq) in tracks.iter().zip([0.6, 1.0, 1.4]) {
        if t["lane"] == 2 {
            assert_eq!(t["status"], "no-svalues");
            assert!(t["mean_spm"].is_null());
            assert!(!Path::new(&path(
                &dir,
                &format!("p1/strokes_track{}.json", t["track_id"])
            ))
            .exists());
        } else {
            assert_eq!(t["status"], "ok");
            let spm = t["mean_spm"].as_f64().unwrap();
            assert!((spm / (60.0 * freq) - 1.0).abs() < 0.02, "{spm}");
        }
    }
    assert_eq!(
        fs::read(path(&dir, "p1/tracks.csv")).unwrap(),
        fs::read(path(&dir, "p2/tracks.csv")).unwrap()
    );
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&swimtrack(&["strokes", "--fps", "30"])), 2);
    assert_eq!(code(&swimtrack(&["frobnicate"])), 2);
}
