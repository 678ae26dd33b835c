mod common;

use bubblediag::simulate::{ar1_path, substream};
use bubblediag::timeseries::*;
use common::*;

#[test]
fn csv_round_trip_preserves_the_series() {
    let ts = daily(30);
    let v: Vec<f64> = (0..30).map(|i| 1.0 + i as f64 * 0.37).collect();
    let series = TimeSeries::new(ts, v).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cap.csv");
    let cols = ColumnSpec::new("date", "market_cap");
    write_series(&path, &series, &cols).unwrap();
    assert_eq!(load_series(&path, &cols).unwrap(), series);
    assert_eq!(load_series(dir.path().join("missing.csv"), &cols).unwrap_err().kind(), "FileNotFound");
}

#[test]
fn local_quadratic_reproduces_quadratics() {
    // a local polynomial of degree 2 has zero bias on any quadratic
    let x: Vec<f64> = (0..150).map(|i| (i as f64).powf(1.2)).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.5 - 0.02 * v + 3e-4 * v * v).collect();
    for df in [4.0, 8.0, 15.0] {
        let fit = local_regression(&x, &y, &SmoothingSpec::fixed(df, 2)).unwrap();
        let worst = fit.fitted.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-8, "df {df}: {worst}");
        assert!((fit.trace - df).abs() < 0.1);
    }
}

#[test]
fn smoothing_beats_raw_data_on_average() {
    let n = 300;
    let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let truth: Vec<f64> = x.iter().map(|v| (6.0 * v).sin() + 2.0 * v).collect();
    let (mut raw, mut smoothed) = (0.0, 0.0);
    for rep in 0..20 {
        let e = ar1_path(n, 0.0, 0.2, &mut substream(61, rep));
        let y: Vec<f64> = truth.iter().zip(&e).map(|(a, b)| a + b).collect();
        let fit = local_regression(&x, &y, &SmoothingSpec::aic(20.0, 2)).unwrap();
        raw += e.iter().map(|v| v * v).sum::<f64>();
        smoothed += fit.fitted.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    assert!(smoothed < 0.25 * raw, "{smoothed} vs {raw}");
}

#[test]
fn resampling_takes_the_last_value_at_or_before_each_boundary() {
    let start = date(2017, 3, 1);
    let ts: Vec<Instant> = (0..48).map(|h| start + h * SECONDS_PER_HOUR).collect();
    let v: Vec<f64> = (1..=48).map(|h| h as f64).collect();
    let series = TimeSeries::new(ts, v).unwrap();
    let day = resample(&series, SECONDS_PER_DAY).unwrap();
    // boundaries at midnight: hour 0 and hour 24 of the input
    assert_eq!(day.timestamps(), &[start, start + SECONDS_PER_DAY]);
    assert_eq!(day.values(), &[1.0, 25.0]);
    assert_eq!(resample(&day, SECONDS_PER_DAY).unwrap(), day);
}
