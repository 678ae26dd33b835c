#![allow(dead_code)]

use bubblediag::lppls::LpplsParams;
use bubblediag::simulate::{ar1_path, lppls_sample, substream};
use bubblediag::timeseries::{date, Instant, TimeSeries, SECONDS_PER_DAY};
use nalgebra::{DMatrix, DVector};

pub const DAY: i64 = SECONDS_PER_DAY;

/// Truth used by the synthetic recovery experiments.
pub fn reference_bubble() -> LpplsParams {
    LpplsParams { a: 2.0, b: -1.9, c_cos: 0.06, d_sin: 0.06, m: 0.3, omega: Some(9.0), t_c: 1.05, phi: 0.9 }
}

/// `n` daily timestamps starting 2016-01-01.
pub fn daily(n: usize) -> Vec<Instant> {
    let start = date(2016, 1, 1);
    (0..n as i64).map(|i| start + i * DAY).collect()
}

/// Positions on `[0, 1]` with the first stamp at 0 and the last at 1.
pub fn unit_positions(ts: &[Instant]) -> Vec<f64> {
    let (a, b) = (ts[0], ts[ts.len() - 1]);
    ts.iter().map(|&t| (t - a) as f64 / (b - a) as f64).collect()
}

/// Price series whose log follows `params` on the unit positions of `ts`.
pub fn lppls_prices(params: &LpplsParams, ts: &[Instant], sigma: f64, seed: u64, rep: u64) -> TimeSeries {
    let s = unit_positions(ts);
    let sample = lppls_sample(params, &s, sigma, &mut substream(seed, rep)).unwrap();
    TimeSeries::new(ts.to_vec(), sample.values().iter().map(|v| v.exp()).collect()).unwrap()
}

/// `exp(level + AR(1))`: no trend at all.
pub fn flat_noise(ts: &[Instant], phi: f64, sigma: f64, seed: u64, rep: u64) -> TimeSeries {
    let e = ar1_path(ts.len(), phi, sigma, &mut substream(seed, rep));
    TimeSeries::new(ts.to_vec(), e.iter().map(|v| (2.0 + v).exp()).collect()).unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Replication count from `var`, falling back to `default`.
pub fn reps(var: &str, default: usize) -> usize {
    std::env::var(var).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

/// LPPLS design matrix `[1, p, p cos, p sin]` with `p = (t_c - t)^m`.
pub fn design(t: &[f64], m: f64, omega: f64, t_c: f64) -> DMatrix<f64> {
    DMatrix::from_fn(t.len(), 4, |i, j| {
        let dt = t_c - t[i];
        let p = dt.powf(m);
        match j {
            0 => 1.0,
            1 => p,
            2 => p * (omega * dt.ln()).cos(),
            _ => p * (omega * dt.ln()).sin(),
        }
    })
}

/// Log density of `N(0, Σ)` with the stationary AR(1) covariance.
pub fn ar1_density(r: &[f64], phi: f64, sigma2: f64) -> f64 {
    let n = r.len();
    let cov = DMatrix::from_fn(n, n, |i, j| sigma2 * phi.powi((i as i32 - j as i32).abs()) / (1.0 - phi * phi));
    let chol = cov.cholesky().unwrap();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let rv = DVector::from_column_slice(r);
    let quad = rv.dot(&chol.solve(&rv));
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
}
