use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mellin-aer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path, name: &str, seed: u64, frames: usize) -> String {
    let path = dir.join(name).to_str().unwrap().to_owned();
    ok(&[
        "gen",
        "--seed",
        &seed.to_string(),
        "--width",
        "12",
        "--height",
        "12",
        "--frames",
        &frames.to_string(),
        "--out",
        &path,
    ]);
    path
}

#[test]
fn gen_then_tsm_reports_identity() {
    let dir = tempfile::tempdir().unwrap();
    let q = gen(dir.path(), "q.mtvc", 3, 120);
    let v: serde_json::Value =
        serde_json::from_str(&ok(&["tsm", "--query", &q, "--ref", &q])).unwrap();
    assert_eq!(v["matched"], true);
    assert_eq!(v["alpha"], 1.0);
    assert_eq!(v["event_frame"], 0);

    let out = dir.path().join("est.json");
    ok(&[
        "estimate",
        "--query",
        &q,
        "--ref",
        &q,
        "--method",
        "peak",
        "--out",
        out.to_str().unwrap(),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    assert_eq!(v["method"], "peak");
    assert_eq!(v["lag"], 0);
}

#[test]
fn missing_reference_exits_one_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let q = gen(dir.path(), "q.mtvc", 3, 60);
    let out = run(&["tsm", "--query", &q, "--ref", "/nonexistent/ref.mtvc"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/ref.mtvc"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["tsm", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        run(&["estimate", "--query", "a", "--ref", "b", "--method", "mean"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["mt", "--query", "a", "--pixel", "3"]).status.code(),
        Some(2)
    );
}

#[test]
fn mt_csv_has_one_row_per_tau() {
    let dir = tempfile::tempdir().unwrap();
    let q = gen(dir.path(), "q.mtvc", 5, 90);
    let text = ok(&[
        "mt", "--query", &q, "--pixel", "6,6", "--n-tau", "64", "--csv",
    ]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("tau,value"));
    assert_eq!(lines.count(), 64);
}

#[test]
fn pgm_sequence_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    ok(&[
        "gen",
        "--seed",
        "2",
        "--width",
        "8",
        "--height",
        "8",
        "--frames",
        "20",
        "--pgm",
        "--out",
        frames.to_str().unwrap(),
    ]);
    let pgm = std::fs::read_dir(&frames)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "pgm")
        })
        .count();
    assert_eq!(pgm, 20);
    let v: serde_json::Value = serde_json::from_str(&ok(&[
        "xcorr",
        "--query",
        frames.to_str().unwrap(),
        "--ref",
        frames.to_str().unwrap(),
        "--frames",
    ]))
    .unwrap();
    assert_eq!(v["peak"]["lag"], 0);
}

#[test]
fn calibrate_from_score_lists() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.json");
    std::fs::write(
        &scores,
        r#"{"matched": [0.9, 0.8, 0.95], "unmatched": [0.1, 0.3]}"#,
    )
    .unwrap();
    let v: serde_json::Value = serde_json::from_str(&ok(&[
        "calibrate",
        "--scores",
        scores.to_str().unwrap(),
        "--policy",
        "min-fp",
    ]))
    .unwrap();
    assert_eq!(v["value"], 0.3);
    assert_eq!(v["inclusive"], false);
    let v: serde_json::Value = serde_json::from_str(&ok(&[
        "calibrate",
        "--scores",
        scores.to_str().unwrap(),
        "--policy",
        "min-fn",
    ]))
    .unwrap();
    assert_eq!(v["value"], 0.8);
    assert_eq!(v["inclusive"], true);
}

#[test]
fn search_plans_segments() {
    let dir = tempfile::tempdir().unwrap();
    let q = gen(dir.path(), "q.mtvc", 4, 60);
    let db = gen(dir.path(), "db.mtvc", 9, 500);
    let v: serde_json::Value = serde_json::from_str(&ok(&[
        "search", "--query", &q, "--db", &db, "--t2", "200", "--t1", "50",
    ]))
    .unwrap();
    let segments = v["plan"]["segments"].as_array().unwrap();
    assert_eq!(segments.first().unwrap(), &serde_json::json!([0, 200]));
    assert_eq!(segments.last().unwrap()[1], 500);
    assert!(v["matches"].is_array());
}

#[test]
fn bench_sweep_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    std::fs::create_dir(&out).unwrap();
    let db = dir.path().join("db");
    ok(&[
        "bench-sweep",
        "--clips",
        "2",
        "--speeds",
        "1,2",
        "--width",
        "8",
        "--height",
        "8",
        "--frames",
        "60",
        "--save-db",
        db.to_str().unwrap(),
        "--csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(out.join("delta_vs_alpha.csv").exists());
    assert!(out.join("report.json").exists());
    assert_eq!(std::fs::read_dir(&db).unwrap().count(), 5);

    let detect = dir.path().join("detect.json");
    ok(&[
        "bench-detect",
        "--clips",
        "2",
        "--speeds",
        "1,2",
        "--width",
        "8",
        "--height",
        "8",
        "--frames",
        "60",
        "--out",
        detect.to_str().unwrap(),
    ]);
    let t: serde_json::Value = serde_json::from_str(&ok(&[
        "calibrate",
        "--scores",
        detect.to_str().unwrap(),
        "--policy",
        "min-fp",
    ]))
    .unwrap();
    assert!(t["value"].is_number());
}
