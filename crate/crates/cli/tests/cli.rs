use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    p.to_string_lossy().into_owned()
}

fn ratecov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratecov"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn exact_solve_succeeds_with_a_json_report() {
    let sc = scenario("three_bs");
    let out = ratecov(&["solve", "--scenario", &sc, "--trials", "20000"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["status"], "optimal");
    assert_eq!(v["cost"], 300.0);
    assert!(v.get("wall_time_s").is_none());
    assert_eq!(v["sps"].as_array().unwrap().len(), 3);
    let again = ratecov(&["solve", "--scenario", &sc, "--trials", "20000"]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn timing_adds_wall_time() {
    let out = ratecov(&[
        "solve",
        "--scenario",
        &scenario("single_bs"),
        "--trials",
        "0",
        "--timing",
    ]);
    assert!(json(&out)["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn fallback_exits_with_one() {
    let out = ratecov(&[
        "solve",
        "--scenario",
        &scenario("scenario_one"),
        "--trials",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["status"], "fallback");
    assert_eq!(v["fallback"], true);
}

#[test]
fn user_errors_exit_with_two_and_describe_themselves() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = ratecov(&["solve", "--scenario", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["error"]["exit_code"], 2);
    assert!(v["error"]["message"]
        .as_str()
        .unwrap()
        .contains("nope.toml"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "format_version = 1\n[region]\nwidth_km = -1.0\n").unwrap();
    let out = ratecov(&["solve", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["kind"], "scenario");

    let out = ratecov(&[
        "solve",
        "--scenario",
        &scenario("three_bs"),
        "--method",
        "magic",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["kind"], "usage");

    let out = ratecov(&[
        "sweep",
        "--scenario",
        &scenario("three_bs"),
        "--intensities",
        "2,1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["kind"], "argument");
}

#[test]
fn equal_split_gives_every_sp_a_third() {
    let out = ratecov(&[
        "solve",
        "--scenario",
        &scenario("three_bs"),
        "--method",
        "equal-split",
        "--trials",
        "0",
    ]);
    let v = json(&out);
    for row in v["allocation"]["slices"].as_array().unwrap() {
        for d in row.as_array().unwrap() {
            assert_eq!(d.as_f64(), Some(1.0 / 3.0));
        }
    }
}

#[test]
fn empty_sweep_writes_only_the_header() {
    let out = ratecov(&[
        "sweep",
        "--scenario",
        &scenario("three_bs"),
        "--intensities",
        "--trials",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("intensity_per_km2,method,status,cost"));
}

#[test]
fn sweep_and_csv_solve_share_a_layout() {
    let sc = scenario("three_bs");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = ratecov(&[
        "sweep",
        "--scenario",
        &sc,
        "--intensities",
        "0.5,2",
        "--methods",
        "exact,greedy,sequential",
        "--trials",
        "0",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    let width = lines[0].split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == width));

    let one = ratecov(&[
        "solve",
        "--scenario",
        &sc,
        "--format",
        "csv",
        "--intensity",
        "0.5",
        "--trials",
        "0",
    ]);
    let one = String::from_utf8(one.stdout).unwrap();
    assert_eq!(one.lines().next(), Some(lines[0]));
    assert_eq!(one.lines().nth(1), Some(lines[1]));
}

#[test]
fn validate_accepts_reports_and_flags_corruption() {
    let sc = scenario("three_bs");
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = ratecov(&[
        "solve",
        "--scenario",
        &sc,
        "--trials",
        "0",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));

    let out = ratecov(&[
        "validate",
        "--scenario",
        &sc,
        "--allocation",
        report.to_str().unwrap(),
        "--trials",
        "50000",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v = json(&out);
    assert_eq!(v["pass"], true);
    assert_eq!(v["sps"].as_array().unwrap().len(), 3);

    let zero = dir.path().join("zero.json");
    std::fs::write(
        &zero,
        r#"{"leased":[false,false,false],"slices":[[0,0,0],[0,0,0],[0,0,0]]}"#,
    )
    .unwrap();
    let out = ratecov(&[
        "validate",
        "--scenario",
        &sc,
        "--allocation",
        zero.to_str().unwrap(),
        "--trials",
        "1000",
    ]);
    assert_eq!(out.status.code(), Some(0));

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"leased":[true,true,true],"slices":[[0.9,0.9,0.9],[0,0,0],[0,0,0]]}"#,
    )
    .unwrap();
    let out = ratecov(&[
        "validate",
        "--scenario",
        &sc,
        "--allocation",
        bad.to_str().unwrap(),
        "--association",
        "voronoi",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!json(&out)["invariant_violations"]
        .as_array()
        .unwrap()
        .is_empty());

    let short = dir.path().join("short.json");
    std::fs::write(&short, r#"{"leased":[true],"slices":[[1,0,0]]}"#).unwrap();
    let out = ratecov(&[
        "validate",
        "--scenario",
        &sc,
        "--allocation",
        short.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["kind"], "allocation");
}
