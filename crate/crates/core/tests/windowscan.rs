mod common;

use bubblediag::lppls::{lppls_value, GridSpec, LpplsParams};
use bubblediag::simulate::{ar1_path, substream};
use bubblediag::timeseries::{Instant, SmoothingSpec, TimeSeries};
use bubblediag::windowscan::*;
use common::*;

fn smooth_trend_series(n: usize, phi: f64, rep: u64) -> TimeSeries {
    let ts = daily(n);
    let s = unit_positions(&ts);
    let e = ar1_path(n, phi, 0.02, &mut substream(41, rep));
    let v = s.iter().zip(&e).map(|(x, e)| (1.0 + x + 3.0 * x * x + 0.3 * (5.0 * x).sin() + e).exp()).collect();
    TimeSeries::new(ts, v).unwrap()
}

fn detrended_phi(n: usize, phi: f64, rep: u64) -> f64 {
    let data = smooth_trend_series(n, phi, rep);
    detrend_and_fit_errors(&data, data.start(), data.end(), &SmoothingSpec::aic(10.0, 2)).unwrap().phi0
}

#[test]
fn detrending_recovers_ar1_coefficient() {
    for phi in [0.0, 0.9] {
        let est = median((0..20).map(|r| detrended_phi(1000, phi, r)).collect());
        assert!((est - phi).abs() <= 0.05, "phi {phi}: median estimate {est}");
    }
}

#[test]
fn noiseless_trend_has_zero_phi() {
    let ts = daily(200);
    let v = unit_positions(&ts).iter().map(|x| (1.0 + 2.0 * x).exp()).collect();
    let data = TimeSeries::new(ts, v).unwrap();
    let d = detrend_and_fit_errors(&data, data.start(), data.end(), &SmoothingSpec::aic(10.0, 2)).unwrap();
    let var = d.residuals.iter().map(|e| e * e).sum::<f64>() / d.residuals.len() as f64;
    assert!(var < 1e-12);
    assert_eq!(d.phi0, 0.0);
}

#[test]
fn detrending_needs_fifty_points() {
    let data = smooth_trend_series(49, 0.0, 0);
    let err = detrend_and_fit_errors(&data, data.start(), data.end(), &SmoothingSpec::aic(10.0, 2)).unwrap_err();
    assert!(matches!(err, ScanError::WindowTooSmall { n: 49, min: 50 }));
}

#[test]
fn white_noise_bootstrap_mean_matches_chi_square_mean() {
    let residuals = ar1_path(3000, 0.0, 1.0, &mut substream(5, 0));
    let (n, p) = (400, 7);
    let d = bootstrap_error_distribution(&residuals, 0.0, &[n], 4000, p, 17).unwrap();
    // Resampling draws from the centered innovation pool, so its variance
    // is the population variance of each draw.
    let eta: Vec<f64> = residuals.windows(2).map(|w| w[1]).collect();
    let mean = eta.iter().sum::<f64>() / eta.len() as f64;
    let pool_var = eta.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / eta.len() as f64;
    let expected = n as f64 / (n - p) as f64 * pool_var;
    let got = d.samples[0].iter().sum::<f64>() / d.samples[0].len() as f64;
    assert!((got / expected - 1.0).abs() < 0.01, "{got} vs {expected}");
    assert!(!d.low_resolution);
}

#[test]
fn persistence_widens_the_error_distribution() {
    let residuals = ar1_path(1000, 0.0, 1.0, &mut substream(6, 0));
    let cv = |phi: f64| {
        let d = bootstrap_error_distribution(&residuals, phi, &[200], 2000, 7, 3).unwrap();
        let s = &d.samples[0];
        let m = s.iter().sum::<f64>() / s.len() as f64;
        (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64).sqrt() / m
    };
    assert!(cv(0.9) > 2.0 * cv(0.0));
}

struct Setup {
    data: TimeSeries,
    t0: Instant,
    t2: Instant,
    candidates: Vec<Instant>,
}

fn bubble_setup(rep: u64) -> Setup {
    let ts = daily(300);
    let data = lppls_prices(&reference_bubble(), &ts, 0.02, 3, rep);
    let candidates = [0.1, 0.2, 0.3, 0.4].iter().map(|f| ts[(f * 300.0) as usize]).collect();
    Setup { data, t0: ts[0] - DAY, t2: ts[299], candidates }
}

#[test]
fn fixed_seed_scans_are_byte_identical() {
    let s = bubble_setup(0);
    let config = ScanConfig::new(s.t0, s.t2, s.candidates.clone(), 11);
    let a = serde_json::to_string(&scan_windows(&s.data, &config, &GridSpec::coarse()).unwrap()).unwrap();
    let b = serde_json::to_string(&scan_windows(&s.data, &config, &GridSpec::coarse()).unwrap()).unwrap();
    assert_eq!(a, b);
    assert!(a.contains("\"seed\":11"));
}

#[test]
fn raising_the_level_never_rejects_more() {
    let s = bubble_setup(1);
    let verdicts = |level: f64| {
        let mut config = ScanConfig::new(s.t0, s.t2, s.candidates.clone(), 5);
        config.acceptance_level = level;
        match scan_windows(&s.data, &config, &GridSpec::coarse()) {
            Ok(r) => r.windows,
            Err(ScanError::NoWindowAccepted(rej)) => rej.windows,
            Err(e) => panic!("{e}"),
        }
    };
    let levels = [0.5, 0.8, 0.95, 0.99];
    let all: Vec<Vec<WindowVerdict>> = levels.iter().map(|&l| verdicts(l)).collect();
    for pair in all.windows(2) {
        for (lo, hi) in pair[0].iter().zip(&pair[1]) {
            assert!(!lo.accepted || hi.accepted);
            assert!(lo.quantile <= hi.quantile);
        }
    }
}

#[test]
fn single_candidate_follows_the_median_rule() {
    let s = bubble_setup(2);
    let mut config = ScanConfig::new(s.t0, s.t2, vec![s.candidates[0]], 9);
    config.acceptance_level = 0.5;
    let verdict = match scan_windows(&s.data, &config, &GridSpec::coarse()) {
        Ok(r) => {
            let w = r.windows[0].clone();
            assert_eq!(r.selected_t1, w.t1);
            // one accepted window: the averaged profile is that window's profile
            assert_eq!(r.aggregated_interval, w.interval);
            w
        }
        Err(ScanError::NoWindowAccepted(rej)) => rej.windows[0].clone(),
        Err(e) => panic!("{e}"),
    };
    assert_eq!(verdict.accepted, verdict.residual_error <= verdict.quantile);
}

/// Declining log price before the bubble start, LPPLS growth after it.
fn kinked_series(rep: u64, start_frac: f64, sigma: f64) -> TimeSeries {
    let n = 400;
    let ts = daily(n);
    let s = unit_positions(&ts);
    let p = LpplsParams { phi: 0.0, ..reference_bubble() };
    let level = lppls_value(&p, start_frac).unwrap();
    let e = ar1_path(n, 0.9, sigma, &mut substream(77, rep));
    let v = s
        .iter()
        .zip(&e)
        .map(|(&x, e)| {
            let trend = if x < start_frac { level + 3.0 * (start_frac - x) } else { lppls_value(&p, x).unwrap() };
            (trend + e).exp()
        })
        .collect();
    TimeSeries::new(ts, v).unwrap()
}

#[test]
fn bubble_start_is_located_within_one_candidate_step() {
    let reps = reps("BUBBLEDIAG_SCAN_REPS", 100);
    let fracs = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let truth = 0.3;
    let ts = daily(400);
    let candidates: Vec<Instant> = fracs.iter().map(|f| ts[(f * 399.0_f64).round() as usize]).collect();
    let spacing = candidates[1] - candidates[0];
    let true_start = ts[(truth * 399.0_f64).round() as usize];
    let mut hits = 0;
    for rep in 0..reps as u64 {
        let data = kinked_series(rep, truth, 0.02);
        let config = ScanConfig::new(ts[0] - DAY, ts[399], candidates.clone(), rep);
        if let Ok(r) = scan_windows(&data, &config, &GridSpec::coarse()) {
            if (r.selected_t1 - true_start).abs() <= spacing {
                hits += 1;
            }
        }
    }
    assert!(hits as f64 >= 0.8 * reps as f64, "{hits}/{reps}");
}

#[test]
fn misfit_windows_are_reported_with_diagnostics() {
    let data = kinked_series(0, 0.5, 0.002);
    let ts = daily(400);
    let config = ScanConfig::new(ts[0] - DAY, ts[399], vec![ts[30], ts[100]], 1);
    match scan_windows(&data, &config, &GridSpec::coarse()) {
        Err(ScanError::NoWindowAccepted(rej)) => {
            assert_eq!(rej.windows.len(), 2);
            assert!(rej.least_rejected < 2);
            assert!(rej.windows.iter().all(|w| !w.accepted && w.residual_error > w.quantile));
        }
        other => panic!("expected rejection, got {:?}", other.map(|r| r.selected_t1)),
    }
}

#[test]
fn noiseless_power_law_accepts_the_latest_end() {
    let ts = daily(300);
    let mut config = ScanConfig::new(ts[0] - DAY, ts[299], vec![ts[50]], 2);
    config.model = bubblediag::lppls::Model::PowerLaw;
    let p = LpplsParams { a: 2.0, b: -1.5, c_cos: 0.0, d_sin: 0.0, m: 0.5, omega: None, t_c: 1.2, phi: 0.0 };
    let v = ts.iter().map(|&t| lppls_value(&p, config.scale(t)).unwrap().exp()).collect();
    let data = TimeSeries::new(ts.clone(), v).unwrap();
    // the true critical time is on the grid for every candidate end
    let mut grid = GridSpec::coarse();
    grid.tc_values = Some((0..=20).map(|k| 1.1 + 0.01 * k as f64).collect());
    let ends = [ts[200], ts[250], ts[299]];
    let picked = select_t2(&data, &config, &grid, ts[50], &ends).unwrap();
    assert_eq!(picked.selected_t2, ts[299]);
    assert_eq!(picked.windows.len(), 3);

    let single = select_t2(&data, &config, &grid, ts[50], &ends[..1]).unwrap();
    assert_eq!(single.selected_t2, ts[200]);
}

#[test]
fn scan_config_errors() {
    let s = bubble_setup(0);
    let mut config = ScanConfig::new(s.t0, s.t2, vec![], 1);
    assert_eq!(scan_windows(&s.data, &config, &GridSpec::coarse()).unwrap_err().kind(), "InvalidConfig");
    config.t1_candidates = vec![s.t2 - 5 * DAY];
    assert_eq!(scan_windows(&s.data, &config, &GridSpec::coarse()).unwrap_err().kind(), "WindowTooSmall");
}
