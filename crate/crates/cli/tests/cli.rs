use std::path::Path;
use std::process::{Command, Output};

use bubblediag::bubblescale::BubblePreset;
use bubblediag::lppls::{lppls_value, LpplsParams};
use bubblediag::simulate::{ar1_path, substream};
use bubblediag::timeseries::{date, load_series, write_series, ColumnSpec, Instant, TimeSeries, SECONDS_PER_DAY};
use serde_json::Value;
use tempfile::TempDir;

const DAY: i64 = SECONDS_PER_DAY;

fn bubble_truth() -> LpplsParams {
    LpplsParams { a: 0.0, b: -1.9, c_cos: 0.06, d_sin: 0.06, m: 0.3, omega: Some(9.0), t_c: 1.05, phi: 0.0 }
}

fn write(dir: &Path, name: &str, ts: &[Instant], values: Vec<f64>) {
    let series = TimeSeries::new(ts.to_vec(), values).unwrap();
    write_series(dir.join(name), &series, &ColumnSpec::default()).unwrap();
}

/// Users on a saturating curve and a cap on the Metcalfe support line,
/// lifted by an LPPLS run-up over the second preset bubble.
fn history() -> TempDir {
    let dir = TempDir::new().unwrap();
    let (start, end) = (date(2010, 10, 24), date(2018, 2, 26));
    let ts: Vec<Instant> = (0..=(end - start) / DAY).map(|k| start + k * DAY).collect();
    let span = (end - start) as f64;
    let ln_u: Vec<f64> = ts.iter().map(|&t| 15.0 - 6.0 * (-2.0 * ((t - start) as f64 / span).powf(0.8)).exp()).collect();
    let bubble = BubblePreset::by_name("bubble2").unwrap();
    let noise = ar1_path(ts.len(), 0.5, 0.002, &mut substream(9, 0));
    let ln_cap: Vec<f64> = ts
        .iter()
        .zip(&ln_u)
        .zip(&noise)
        .map(|((&t, lu), e)| {
            let lift = if t >= bubble.start && t <= bubble.end {
                let s = (t - bubble.start) as f64 / (bubble.end - bubble.start) as f64;
                lppls_value(&bubble_truth(), s).unwrap() - lppls_value(&bubble_truth(), 0.0).unwrap()
            } else {
                0.0
            };
            -3.0 + 2.0 * lu + lift + e
        })
        .collect();
    write(dir.path(), "users.csv", &ts, ln_u.iter().map(|v| v.exp()).collect());
    write(dir.path(), "cap.csv", &ts, ln_cap.iter().map(|v| v.exp()).collect());
    dir
}

/// A steep linear decline feeding into an LPPLS trend halfway through; no
/// single LPPLS window fits it at this noise level.
fn kinked() -> TempDir {
    let dir = TempDir::new().unwrap();
    let n = 400;
    let ts: Vec<Instant> = (0..n as i64).map(|k| date(2016, 1, 1) + k * DAY).collect();
    let p = LpplsParams { a: 2.0, phi: 0.0, ..bubble_truth() };
    let level = lppls_value(&p, 0.5).unwrap();
    let e = ar1_path(n, 0.9, 0.002, &mut substream(77, 0));
    let cap = (0..n)
        .map(|k| {
            let x = k as f64 / (n - 1) as f64;
            let trend = if x < 0.5 { level + 3.0 * (0.5 - x) } else { lppls_value(&p, x).unwrap() };
            (trend + e[k]).exp()
        })
        .collect();
    write(dir.path(), "cap.csv", &ts, cap);
    write(dir.path(), "users.csv", &ts, vec![1e5; n]);
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bubblediag")).args(args).output().unwrap()
}

fn error_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&out.stderr)))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn metcalfe_report_recovers_the_generating_exponent() {
    let data = history();
    let out = TempDir::new().unwrap();
    let o = run(&["metcalfe", "--data-dir", s(data.path()), "--out", s(out.path()), "--support", "metcalfe-support", "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let report = read_json(&out.path().join("metcalfe.json"));
    let beta = report["generalized"]["beta"].as_f64().unwrap();
    assert!((beta - 2.0).abs() < 0.1, "{beta}");
    assert_eq!(report["supports"][0]["alpha0"], -3.0);
    assert_eq!(report["supports"][0]["beta0"], 2.0);
    assert_eq!(report["config"]["metcalfe"]["rolling_window_days"], 365);
    assert!(out.path().join("predicted_cap_metcalfe-support.csv").exists());
    assert!(!out.path().join("predicted_cap_ols.csv").exists());
    // artifacts load back through the series reader
    let mmv = load_series(out.path().join("mmv.csv"), &ColumnSpec::default()).unwrap();
    assert!(mmv.len() > 2000);
    load_series(out.path().join("predicted_cap_metcalfe-support.csv"), &ColumnSpec::default()).unwrap();
}

#[test]
fn missing_users_file_is_a_validation_error() {
    let empty = TempDir::new().unwrap();
    let out = TempDir::new().unwrap();
    let o = run(&["metcalfe", "--data-dir", s(empty.path()), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = error_json(&o);
    assert_eq!(err["error"], "FileNotFound");
    assert_eq!(err["exit_status"], 2);
}

#[test]
fn lppls_preset_fit_locates_the_critical_time() {
    let data = history();
    let out = TempDir::new().unwrap();
    let o = run(&["lppls", "--preset", "bubble2", "--grid", "coarse", "--data-dir", s(data.path()), "--out", s(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.path().join("lppls.json"));
    let tc = report["lppls"]["params"]["t_c"].as_f64().unwrap();
    assert!((tc - 1.05).abs() <= 0.03, "{tc}");
    assert_eq!(report["config"]["lppls"]["bubble"], 2);
    assert_eq!(report["config"]["lppls"]["t1"], "2013-01-03");
    assert!(report["lr_test"]["p_value"].as_f64().unwrap() < 0.05);
    let table = std::fs::read_to_string(out.path().join("ci_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.starts_with("bubble,fraction,t_c,lower,upper"));
}

#[test]
fn fraction_outside_the_unit_interval_is_rejected_before_any_work() {
    let out = TempDir::new().unwrap();
    let target = out.path().join("never");
    let o = run(&["lppls", "--preset", "bubble2", "--fraction", "1.5", "--out", s(&target)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "InvalidFraction");
    assert!(!target.exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "preset = \"bubble2\"\n[lppls]\nfraction = 1.5\n").unwrap();
    let o = run(&["lppls", "--config", s(&cfg)]);
    assert_eq!(error_json(&o)["error"], "InvalidFraction");
    std::fs::write(&cfg, "preset = \"bubble2\"\n[lppls]\nfraction = 0.5\n").unwrap();
    let o = run(&["lppls", "--config", s(&cfg), "--fraction", "1.5"]);
    assert_eq!(error_json(&o)["error"], "InvalidFraction");
    std::fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    let o = run(&["lppls", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "InvalidConfig");
}

#[test]
fn fixed_seed_scans_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        let o = run(&["scan", "--preset", "fig5", "--grid", "coarse", "--seed", "11", "--out", s(dir.path()), "--quiet"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["scan.json", "aggregated_profile.csv", "scan_series.csv"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let report = read_json(&a.path().join("scan.json"));
    assert_eq!(report["result"]["windows"].as_array().unwrap().len(), 4);
    assert_eq!(report["result"]["config"]["seed"], 11);
}

#[test]
fn empty_candidate_list_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("scan.toml");
    std::fs::write(&cfg, "[scan]\nt0 = \"2016-01-01\"\nt2 = \"2016-12-01\"\nt1_candidates = []\n").unwrap();
    let o = run(&["scan", "--config", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "InvalidConfig");
}

#[test]
fn rejected_scan_exits_with_diagnostics() {
    let data = kinked();
    let out = TempDir::new().unwrap();
    let o = run(&[
        "scan", "--series", "cap", "--grid", "coarse", "--seed", "1", "--t0", "2015-12-31", "--t2", "2017-02-03", "--t1", "2016-01-31", "--t1",
        "2016-04-10", "--data-dir", s(data.path()), "--out", s(out.path()),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let err = error_json(&o);
    assert_eq!(err["error"], "NoWindowAccepted");
    let windows = err["diagnostics"]["windows"].as_array().unwrap();
    assert_eq!(windows.len(), 2);
    assert!(windows.iter().all(|w| w["residual_error"].as_f64() > w["quantile"].as_f64()));
    assert!(out.path().join("scan_rejection.json").exists());
}

#[test]
fn far_projections_are_flagged_as_extrapolation() {
    let data = history();
    let out = TempDir::new().unwrap();
    let o = run(&["usergrowth", "--preset", "2012-start", "--project-to", "2030", "--data-dir", s(data.path()), "--out", s(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.path().join("projections.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 13);
    // twice the 2012-01-01..2018-02-26 span ends in 2024
    for row in &rows {
        let year: i32 = row[0][..4].parse().unwrap();
        assert_eq!(&row[3] == "extrapolation", year >= 2025, "{row:?}");
    }
    let report = read_json(&out.path().join("usergrowth.json"));
    assert_eq!(report["growth_rates"].as_array().unwrap().len(), 12);
    assert_eq!(report["config"]["usergrowth"]["start"], "2012-01-01");
}

#[test]
fn bubble_table_and_json_tables() {
    let data = history();
    let out = TempDir::new().unwrap();
    let o = run(&["bubbles", "--grid", "coarse", "--format", "json", "--data-dir", s(data.path()), "--out", s(out.path()), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = read_json(&out.path().join("bubble_table.json"));
    assert_eq!(table["columns"][0], "bubble");
    assert_eq!(table["rows"].as_array().unwrap().len(), 5);
    let curves = read_json(&out.path().join("scaled_bubbles.json"));
    let averaged = curves["rows"].as_array().unwrap().iter().filter(|r| r[0] == "average").count();
    assert_eq!(averaged, 200);
    assert!(read_json(&out.path().join("bubbles.json"))["average_fit"]["fit"]["params"]["t_c"].is_number());
}

#[test]
fn unwritable_output_is_an_io_failure() {
    let data = history();
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = run(&["usergrowth", "--data-dir", s(data.path()), "--out", s(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_json(&o)["error"], "Io");
}

#[test]
fn unknown_presets_and_flags_are_usage_errors() {
    assert_eq!(error_json(&run(&["lppls", "--preset", "bubble9"]))["error"], "UnknownPreset");
    assert_eq!(error_json(&run(&["scan", "--preset", "bubble1"]))["error"], "UnknownPreset");
    let o = run(&["metcalfe", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "Usage");
}
