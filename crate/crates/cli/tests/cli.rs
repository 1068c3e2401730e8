use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use colloc_core::regression::{Orientation, RegressionFit, Transform};
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colloc-eval"))
        .args(args)
        .env("COLLOC_EVAL_THREADS", "2")
        .output()
        .unwrap()
}

fn run_in(dir: &Path, verb: &str, extra: &[&str]) -> Output {
    let input = fixture("readings.csv");
    let config = fixture("config.json");
    let mut args = vec![verb, "--input", input.to_str().unwrap(), "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", dir.to_str().unwrap()]);
    run(&args)
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn assert_golden(dir: &Path, name: &str) {
    let got = read(dir, name);
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("COLLOC_UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &got).unwrap();
    }
    let want = fs::read_to_string(&golden).unwrap_or_else(|e| panic!("{}: {e}", golden.display()));
    assert_eq!(got, want, "{name} differs from golden");
}

#[test]
fn evaluate_matches_golden_outputs() {
    let dir = TempDir::new().unwrap();
    ok(&run_in(dir.path(), "evaluate", &["--avg", "hourly"]));
    for name in ["rejected_rows.csv", "summary.csv", "metrics_units.csv", "metrics_groups.csv", "report.md", "report.json"] {
        assert_golden(dir.path(), name);
    }
    let rejected = rows(&read(dir.path(), "rejected_rows.csv"));
    assert_eq!(rejected.len(), 3);
}

#[test]
fn runs_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(&run_in(a.path(), "evaluate", &[]));
    ok(&run_in(b.path(), "evaluate", &[]));
    let manifest: serde_json::Value = serde_json::from_str(&read(a.path(), "manifest.json")).unwrap();
    for name in manifest["outputs"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let strip = |dir: &Path| {
        let mut m: serde_json::Value = serde_json::from_str(&read(dir, "manifest.json")).unwrap();
        m["parameters"].as_object_mut().unwrap().remove("out");
        m
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn thread_count_does_not_change_results() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(&run_in(a.path(), "evaluate", &[]));
    let input = fixture("readings.csv");
    let config = fixture("config.json");
    let single = Command::new(env!("CARGO_BIN_EXE_colloc-eval"))
        .args(["evaluate", "--input", input.to_str().unwrap(), "--config", config.to_str().unwrap()])
        .args(["--out", b.path().to_str().unwrap()])
        .env("COLLOC_EVAL_THREADS", "1")
        .output()
        .unwrap();
    ok(&single);
    assert_eq!(read(a.path(), "metrics_units.csv"), read(b.path(), "metrics_units.csv"));
}

#[test]
fn manifest_records_inputs_and_outputs() {
    let dir = TempDir::new().unwrap();
    ok(&run_in(dir.path(), "evaluate", &[]));
    let m: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(m["tool"], "colloc-eval");
    assert_eq!(m["subcommand"], "evaluate");
    let inputs = m["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 2);
    for i in inputs {
        assert_eq!(i["sha256"].as_str().unwrap().len(), 64);
    }
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for name in &outputs {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert!(outputs.contains(&"report.md") && outputs.contains(&"manifest.json"));
    assert!(!read(dir.path(), "manifest.json").contains("T00:00"), "manifest must not carry timestamps");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let input = fixture("readings.csv");
    let input = input.to_str().unwrap();

    let missing_config = run(&["evaluate", "--input", input, "--out", out]);
    assert_eq!(missing_config.status.code(), Some(2));

    let unreadable = run(&["evaluate", "--input", "/nonexistent.csv", "--config", fixture("config.json").to_str().unwrap(), "--out", out]);
    assert_eq!(unreadable.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&unreadable.stderr).is_empty());

    let tmp = TempDir::new().unwrap();
    let disjoint = tmp.path().join("disjoint.csv");
    fs::write(
        &disjoint,
        "timestamp,device_id,pm25,temperature,humidity\n\
         2021-11-05T00:00:00Z,BAM,10,20,50\n\
         2021-11-05T00:15:00Z,BAM,10,20,50\n\
         2021-11-05T00:30:00Z,BAM,10,20,50\n\
         2021-11-05T00:45:00Z,BAM,10,20,50\n\
         2021-11-05T05:00:00Z,S1,10,,\n\
         2021-11-05T05:15:00Z,S1,10,,\n\
         2021-11-05T05:30:00Z,S1,10,,\n\
         2021-11-05T05:45:00Z,S1,10,,\n",
    )
    .unwrap();
    let no_overlap = run(&["evaluate", "--input", disjoint.to_str().unwrap(), "--config", fixture("config.json").to_str().unwrap(), "--avg", "hourly", "--out", out]);
    assert_eq!(no_overlap.status.code(), Some(3), "{}", String::from_utf8_lossy(&no_overlap.stderr));

    let zeros = tmp.path().join("zeros.csv");
    let mut body = String::from("timestamp,device_id,pm25,temperature,humidity\n");
    for h in 0..6 {
        for q in 0..4 {
            let ts = format!("2021-11-05T{h:02}:{:02}:00Z", 15 * q);
            body.push_str(&format!("{ts},BAM,{},20,50\n", 10 + h * 5));
            body.push_str(&format!("{ts},S1,{},,\n", if h == 2 { 0 } else { 12 + h * 7 }));
        }
    }
    fs::write(&zeros, body).unwrap();
    let log_fit = run(&["intervals", "--input", zeros.to_str().unwrap(), "--config", fixture("config.json").to_str().unwrap(), "--unit", "S1", "--values", "50", "--out", out]);
    assert_eq!(log_fit.status.code(), Some(2), "{}", String::from_utf8_lossy(&log_fit.stderr));

    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["no-such-verb"]).status.code(), Some(2));
}

#[test]
fn daily_average_of_one_day_is_one_row() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(fixture("readings.csv")).unwrap();
    let one_day: String = text
        .lines()
        .filter(|l| l.starts_with("timestamp") || l.starts_with("2021-11-05T"))
        .map(|l| format!("{l}\n"))
        .collect();
    let input = tmp.path().join("day.csv");
    fs::write(&input, one_day).unwrap();
    let out = tmp.path().join("out");
    ok(&run(&[
        "evaluate", "--input", input.to_str().unwrap(), "--config", fixture("config.json").to_str().unwrap(),
        "--avg", "daily", "--out", out.to_str().unwrap(),
    ]));
    assert_eq!(rows(&read(&out, "panel.csv")).len(), 1);
}

#[test]
fn fewer_minimum_hours_keep_more_bins() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(&run_in(a.path(), "bins", &[]));
    ok(&run_in(b.path(), "bins", &["--min-hours", "1"]));
    let kept = |d: &Path| rows(&read(d, "bins_long.csv")).len();
    assert!(kept(b.path()) > kept(a.path()));
    assert!(rows(&read(b.path(), "bins_excluded.csv")).len() < rows(&read(a.path(), "bins_excluded.csv")).len());
    assert_golden(a.path(), "bins_long.csv");
}

fn published_model(dir: &Path) -> PathBuf {
    let fit = RegressionFit::from_summary(Transform::LogLog, Orientation::ReferenceOnSensor, 0.8259, 0.4058, 978, 4.366082523, 326.1566, 0.02793705).unwrap();
    let path = dir.join("model.json");
    fs::write(&path, serde_json::to_string(&fit).unwrap()).unwrap();
    path
}

fn interval_row(dir: &Path) -> Vec<f64> {
    rows(&read(dir, "intervals.csv"))[0][1..].iter().map(|v| v.parse().unwrap()).collect()
}

#[test]
fn intervals_from_saved_model() {
    let tmp = TempDir::new().unwrap();
    let model = published_model(tmp.path());
    let wide = tmp.path().join("wide");
    let narrow = tmp.path().join("narrow");
    ok(&run(&["intervals", "--fit", model.to_str().unwrap(), "--values", "147", "--out", wide.to_str().unwrap()]));
    ok(&run(&["intervals", "--fit", model.to_str().unwrap(), "--values", "147", "--confidence", "0.5", "--out", narrow.to_str().unwrap()]));
    let w = interval_row(&wide);
    let n = interval_row(&narrow);
    assert!((w[1] - 91.10).abs() < 0.02 && (w[2] - 93.96).abs() < 0.02);
    assert!((w[3] - 66.62).abs() < 0.02 && (w[4] - 128.48).abs() < 0.02);
    assert!(w[3] < n[3] && n[3] < n[1] && n[1] <= n[0] && n[0] <= n[2] && n[2] < n[4] && n[4] < w[4]);
    assert!(!wide.join("model.json").exists());
}

#[test]
fn intervals_fitted_from_readings_write_a_model() {
    let dir = TempDir::new().unwrap();
    ok(&run_in(dir.path(), "intervals", &["--unit", "P1", "--values", "20,80,200"]));
    assert_eq!(rows(&read(dir.path(), "intervals.csv")).len(), 3);
    let fit = RegressionFit::from_json(&read(dir.path(), "model.json")).unwrap();
    assert_eq!(fit.transform, Transform::LogLog);
    assert!(fit.slope > 0.0);
}

#[test]
fn humidity_significance_flag() {
    let s1 = TempDir::new().unwrap();
    let p1 = TempDir::new().unwrap();
    ok(&run_in(s1.path(), "significance", &["--unit", "S1"]));
    ok(&run_in(p1.path(), "significance", &["--unit", "P1"]));
    let flag = |d: &Path| rows(&read(d, "significance.csv")).last().unwrap().last().unwrap().clone();
    assert_eq!(flag(s1.path()), "true");
    assert_eq!(flag(p1.path()), "false");
}

#[test]
fn correction_is_seeded() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    ok(&run_in(a.path(), "correct", &["--unit", "P1", "--seed", "7"]));
    ok(&run_in(b.path(), "correct", &["--unit", "P1", "--seed", "7"]));
    ok(&run_in(c.path(), "correct", &["--unit", "P1", "--seed", "8"]));
    assert_eq!(read(a.path(), "correction.csv"), read(b.path(), "correction.csv"));
    assert_ne!(read(a.path(), "correction.csv"), read(c.path(), "correction.csv"));
}

#[test]
fn diurnal_of_repeated_day_equals_single_day() {
    let tmp = TempDir::new().unwrap();
    let mut day = String::from("timestamp,device_id,pm25,temperature,humidity\n");
    let mut twice = day.clone();
    for h in 0..24 {
        for q in 0..4 {
            let v = 20.0 + 3.0 * h as f64 + q as f64;
            for d in [5, 6] {
                let row = format!("2021-11-{d:02}T{h:02}:{:02}:00Z,BAM,{v},20,50\n2021-11-{d:02}T{h:02}:{:02}:00Z,S1,{},,\n", 15 * q, 15 * q, 1.4 * v);
                if d == 5 {
                    day.push_str(&row);
                }
                twice.push_str(&row);
            }
        }
    }
    let (one, two) = (tmp.path().join("one.csv"), tmp.path().join("two.csv"));
    fs::write(&one, day).unwrap();
    fs::write(&two, twice).unwrap();
    let config = fixture("config.json");
    for (input, out) in [(&one, "o1"), (&two, "o2")] {
        ok(&run(&["diurnal", "--input", input.to_str().unwrap(), "--config", config.to_str().unwrap(), "--out", tmp.path().join(out).to_str().unwrap()]));
    }
    let strip = |t: String| -> Vec<Vec<String>> {
        let header: Vec<String> = t.lines().next().unwrap().split(',').map(str::to_string).collect();
        let keep: Vec<usize> = (0..header.len()).filter(|&i| !header[i].starts_with('n')).collect();
        rows(&t).into_iter().map(|r| keep.iter().map(|&i| r[i].clone()).collect()).collect()
    };
    let a = strip(read(&tmp.path().join("o1"), "diurnal.csv"));
    let b = strip(read(&tmp.path().join("o2"), "diurnal.csv"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn monthly_on_the_fixture() {
    let dir = TempDir::new().unwrap();
    ok(&run_in(dir.path(), "monthly", &[]));
    assert!(!rows(&read(dir.path(), "monthly.csv")).is_empty());
}

#[test]
fn select_from_bundled_catalog() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&run(&["select", "--out", out]));
    let selection: serde_json::Value = serde_json::from_str(&read(dir.path(), "selection.json")).unwrap();
    assert_eq!(selection["selected"].as_array().unwrap().len(), 7);
    assert_golden(dir.path(), "selection.csv");

    let capped = TempDir::new().unwrap();
    ok(&run(&["select", "--max-price", "30", "--out", capped.path().to_str().unwrap()]));
    let selection: serde_json::Value = serde_json::from_str(&read(capped.path(), "selection.json")).unwrap();
    assert_eq!(selection["selected"].as_array().unwrap().len(), 1);
}

#[test]
fn quality_flags_the_fixture_gap() {
    let dir = TempDir::new().unwrap();
    ok(&run_in(dir.path(), "quality", &[]));
    let flags = read(dir.path(), "quality_flags.csv");
    assert!(flags.lines().any(|l| l.starts_with("S2,gap")), "{flags}");
}
