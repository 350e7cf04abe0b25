mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn opennsq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opennsq"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn run_stage(stage: &str, manifest: &Path, out: &Path) -> Output {
    opennsq(&[stage, "--manifest", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn golden_manifest_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_ok(&run_stage("run", &fixture("golden/manifest.toml"), &out));
    let rows = read_csv(&out.join("results.csv"));
    assert_eq!(rows[0]["app_id"], "candidate-1");
    assert_eq!(rows[0]["passed"], "true");
    assert_eq!(rows[1]["passed"], "false");
    let level = fs::read_to_string(out.join("agreement_level.csv")).unwrap();
    assert!(level.contains("Overall agreement,50.00"), "{level}");
    assert!(out.join("charts/01-B1.svg").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_report.json")).unwrap()).unwrap();
    assert_eq!(report["evaluate"]["evaluated"], 2);
    assert_eq!(report["ingest"]["duplicate_rows"], 5);
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("e2e");
    prepare_e2e(&dir);
    let manifest = dir.join("manifest.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_ok(&run_stage("run", &manifest, &a));
    let m = manifest.to_str().unwrap();
    assert_ok(&opennsq(&["run", "--manifest", m, "--out", b.to_str().unwrap(), "--jobs", "1"]));
    for file in ["results.csv", "agreement_long.csv", "applications.jsonl", "records.jsonl", "citations.idx"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file} differs");
    }
}

#[test]
fn chained_stages_equal_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("e2e");
    prepare_e2e(&dir);
    let manifest = dir.join("manifest.toml");
    let whole = tmp.path().join("whole");
    let staged = tmp.path().join("staged");
    assert_ok(&run_stage("run", &manifest, &whole));
    for stage in ["extract", "resolve", "ingest", "evaluate", "report"] {
        assert_ok(&run_stage(stage, &manifest, &staged));
    }
    for file in [
        "extraction.jsonl",
        "applications.jsonl",
        "records.jsonl",
        "citations.idx",
        "results.csv",
        "agreement_level.csv",
        "agreement_sa_fp.csv",
        "agreement_rf_ap.csv",
        "agreement_long.csv",
        "ranking_sa.csv",
    ] {
        assert_eq!(fs::read(whole.join(file)).unwrap(), fs::read(staged.join(file)).unwrap(), "{file} differs");
    }
}

#[test]
fn empty_cv_directory_succeeds_with_zero_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::create_dir(dir.join("cvs")).unwrap();
    fs::write(dir.join("sidecar.csv"), "app_id,rf,level,session_year,official_a,official_b,official_c,official_passed\n").unwrap();
    fs::write(dir.join("thresholds.csv"), "rf,level,t_a,t_b,t_c\n").unwrap();
    fs::write(
        dir.join("manifest.toml"),
        "out_dir = \"out\"\n[inputs]\ncv_dir = \"cvs\"\nsidecar = \"sidecar.csv\"\nthresholds = \"thresholds.csv\"\n[policy]\noffline = true\n",
    )
    .unwrap();
    let out = opennsq(&["run", "--manifest", dir.join("manifest.toml").to_str().unwrap()]);
    assert_ok(&out);
    let results = fs::read_to_string(dir.join("out/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1);
    let level = fs::read_to_string(dir.join("out/agreement_level.csv")).unwrap();
    assert_eq!(level.lines().next(), Some("metric"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/run_report.json")).unwrap()).unwrap();
    assert_eq!(report["extract"]["cvs_read"], 0);
    assert_eq!(report["evaluate"]["evaluated"], 0);
    assert_eq!(report["ingest"]["edges"], 0);
}

#[test]
fn invalid_manifest_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    assert_eq!(opennsq(&["run", "--manifest", missing.to_str().unwrap()]).status.code(), Some(2));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "out_dir = \"o\"\n[inputs]\napplications = \"a.jsonl\"\nthresholds = \"t.csv\"\n").unwrap();
    let out = opennsq(&["run", "--manifest", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no such file"));

    let m = fixture("golden/manifest.toml");
    let out = opennsq(&["run", "--manifest", m.to_str().unwrap(), "--comparator", "eq"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_failures_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture("golden/manifest.toml");
    let out = run_stage("evaluate", &m, &tmp.path().join("fresh"));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage evaluate"));

    let dir = tmp.path().join("dup");
    copy_dir(&fixture("golden"), &dir);
    let apps = fs::read_to_string(dir.join("applications.jsonl")).unwrap();
    let first = apps.lines().next().unwrap();
    fs::write(dir.join("applications.jsonl"), format!("{apps}{first}\n")).unwrap();
    let out = run_stage("extract", &dir.join("manifest.toml"), &dir.join("out"));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate application id"));
}

#[test]
fn non_citation_fields_are_rejected_and_counted() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("nd");
    copy_dir(&fixture("golden"), &dir);
    let mut apps = fs::read_to_string(dir.join("applications.jsonl")).unwrap();
    apps.push_str(r#"{"app_id":"humanities","rf":"10/A1","level":"FP","session_year":2016,"dois":["10.5555/c1.j1"],"official_passed":false}"#);
    apps.push('\n');
    apps.push_str(r#"{"app_id":"broken","rf":"1/A","level":"FP","session_year":2016}"#);
    apps.push('\n');
    fs::write(dir.join("applications.jsonl"), apps).unwrap();
    assert_ok(&run_stage("run", &dir.join("manifest.toml"), &dir.join("out")));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/run_report.json")).unwrap()).unwrap();
    assert_eq!(report["extract"]["non_citation_rejected"], 1);
    assert_eq!(report["extract"]["rejected"].as_array().unwrap().len(), 2);
    assert_eq!(read_csv(&dir.join("out/results.csv")).len(), 2);
}

#[test]
fn comparator_and_normalization_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture("golden/manifest.toml");
    let m = m.to_str().unwrap();
    let gt = tmp.path().join("gt");
    assert_ok(&opennsq(&["run", "--manifest", m, "--out", gt.to_str().unwrap(), "--comparator", "gt"]));
    let rows = read_csv(&gt.join("results.csv"));
    // C = 1 against a threshold of 1 no longer counts
    assert_eq!(rows[1]["exceeds_c"], "false");
    assert_eq!(rows[0]["passed"], "true");

    let age = tmp.path().join("age");
    assert_ok(&opennsq(&["run", "--manifest", m, "--out", age.to_str().unwrap(), "--normalization", "age"]));
    let rows = read_csv(&age.join("results.csv"));
    let (a, age_years): (f64, f64) = (rows[0]["a"].parse().unwrap(), rows[0]["scientific_age"].parse().unwrap());
    assert!((a - 5.0 / age_years).abs() < 1e-12);
    assert_eq!(rows[0]["c"], "4");
}

#[test]
fn offline_without_fixture_marks_records_failed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("offline");
    copy_dir(&fixture("golden"), &dir);
    let manifest = fs::read_to_string(dir.join("manifest.toml"))
        .unwrap()
        .replace("metadata_fixture = \"works.jsonl\"\n", "")
        + "\n[crossref]\nbase_url = \"http://127.0.0.1:9\"\n";
    fs::write(dir.join("manifest.toml"), manifest).unwrap();
    assert_ok(&run_stage("run", &dir.join("manifest.toml"), &dir.join("out")));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/run_report.json")).unwrap()).unwrap();
    assert_eq!(report["resolve"]["failed"], 12);
    assert_eq!(report["resolve"]["found"], 0);
    let rows = read_csv(&dir.join("out/results.csv"));
    assert!(rows.iter().all(|r| r["a"] == "0.0" && r["passed"] == "false"));
}

#[test]
fn metadata_cache_is_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cached");
    copy_dir(&fixture("golden"), &dir);
    let with_cache = fs::read_to_string(dir.join("manifest.toml"))
        .unwrap()
        .replace("[policy]", "metadata_cache = \"cache.jsonl\"\n\n[policy]");
    fs::write(dir.join("manifest.toml"), &with_cache).unwrap();
    assert_ok(&run_stage("run", &dir.join("manifest.toml"), &dir.join("out")));
    assert!(dir.join("cache.jsonl").exists());
    // second run answers from the cache even without the fixture store
    let no_fixture = with_cache.replace("metadata_fixture = \"works.jsonl\"\n", "");
    fs::write(dir.join("manifest.toml"), no_fixture).unwrap();
    assert_ok(&run_stage("run", &dir.join("manifest.toml"), &dir.join("out2")));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out2/run_report.json")).unwrap()).unwrap();
    assert_eq!(report["resolve"]["cache_hits"], 12);
    assert_eq!(
        fs::read(dir.join("out/results.csv")).unwrap(),
        fs::read(dir.join("out2/results.csv")).unwrap()
    );
}
