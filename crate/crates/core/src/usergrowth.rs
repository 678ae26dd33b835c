//! Saturating user-growth curve `ln(u) = a - b exp(-c t^d) + ε`.
//!
//! Both `ln(u)` and time are mapped affinely onto `(0, 1)` over the fit
//! window before fitting; the maps are kept in [`Normalization`] so the curve
//! can be evaluated on the original scale.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{date, Instant, TimeSeries, TimeSeriesError};

const MIN_POINTS: usize = 20;
const MAX_ITERATIONS: usize = 500;
const RELATIVE_TOLERANCE: f64 = 1e-10;
const START_B: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const START_C: [f64; 4] = [0.2, 0.5, 1.0, 2.0];
const START_D: [f64; 4] = [0.3, 0.5, 0.7, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UserGrowthError {
    #[error("fit window holds {n} observations, at least {min} needed")]
    WindowTooSmall { n: usize, min: usize },
    #[error("no starting point converged to an increasing saturating curve")]
    NonConvergence,
    #[error("ln(users) is constant over the fit window")]
    DegenerateSeries,
    #[error("date precedes the fit start")]
    DateBeforeFitStart(Instant),
    #[error(transparent)]
    TimeSeries(#[from] TimeSeriesError),
}

impl UserGrowthError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::WindowTooSmall { .. } => "WindowTooSmall",
            Self::NonConvergence => "NonConvergence",
            Self::DegenerateSeries => "DegenerateSeries",
            Self::DateBeforeFitStart(_) => "DateBeforeFitStart",
            Self::TimeSeries(e) => e.kind(),
        }
    }
}

/// `ln(u) = log_shift + log_scale * y` and `time = t0 + t_scale * t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub log_shift: f64,
    pub log_scale: f64,
    pub t0: Instant,
    /// Seconds.
    pub t_scale: i64,
}

impl Normalization {
    pub fn scale_time(&self, t: Instant) -> f64 {
        (t - self.t0) as f64 / self.t_scale as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcoGrowthFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub se_c: f64,
    pub se_d: f64,
    /// Covariance of `(a, b, c, d)` from the Gauss-Newton Hessian.
    pub covariance: [[f64; 4]; 4],
    pub normalization: Normalization,
    pub fit_start: Instant,
    pub fit_end: Instant,
    pub n: usize,
    pub rss: f64,
    pub iterations: usize,
    #[serde(default, skip_serializing)]
    pub residuals: Vec<f64>,
}

/// Projected users with delta-method standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub timestamps: Vec<Instant>,
    pub users: Vec<f64>,
    /// Standard error of `ln(u)`, i.e. the relative standard error of `u`.
    pub relative_se: Vec<f64>,
    /// More than twice the fit span past the fit start.
    pub extrapolation: Vec<bool>,
}

impl Projection {
    pub fn to_series(&self) -> Result<TimeSeries, TimeSeriesError> {
        TimeSeries::new(self.timestamps.clone(), self.users.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRate {
    pub from_year: i32,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarryingCapacity {
    pub value: f64,
    pub relative_se: f64,
}

/// Normalized curve value and its gradient in `(a, b, c, d)`.
fn curve(p: &Vector4<f64>, t: f64) -> (f64, Vector4<f64>) {
    let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
    let td = if t > 0.0 { t.powf(d) } else { 0.0 };
    let lt = if t > 0.0 { t.ln() } else { 0.0 };
    let e = (-c * td).exp();
    let grad = Vector4::new(1.0, -e, b * td * e, b * c * td * lt * e);
    (a - b * e, grad)
}

fn rss_at(p: &Vector4<f64>, t: &[f64], y: &[f64]) -> f64 {
    t.iter().zip(y).map(|(&ti, &yi)| (yi - curve(p, ti).0).powi(2)).sum()
}

struct LmOutcome {
    params: Vector4<f64>,
    rss: f64,
    iterations: usize,
    converged: bool,
}

/// Levenberg-Marquardt with Marquardt's diagonal scaling.
fn levenberg_marquardt(start: Vector4<f64>, t: &[f64], y: &[f64]) -> LmOutcome {
    let mut p = start;
    let mut rss = rss_at(&p, t, y);
    let mut lambda = 1e-3;
    for it in 1..=MAX_ITERATIONS {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (&ti, &yi) in t.iter().zip(y) {
            let (f, g) = curve(&p, ti);
            jtj += g * g.transpose();
            jtr += g * (yi - f);
        }
        loop {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&jtr),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        return LmOutcome { params: p, rss, iterations: it, converged: true };
                    }
                    continue;
                }
            };
            let cand = p + step;
            let cand_rss = rss_at(&cand, t, y);
            if cand_rss.is_finite() && cand_rss <= rss {
                let change = (rss - cand_rss) / rss.max(f64::MIN_POSITIVE);
                p = cand;
                rss = cand_rss;
                lambda = (lambda / 10.0).max(1e-12);
                if change < RELATIVE_TOLERANCE || rss < 1e-28 {
                    return LmOutcome { params: p, rss, iterations: it, converged: true };
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // no descent direction left: a stationary point
                return LmOutcome { params: p, rss, iterations: it, converged: true };
            }
        }
    }
    LmOutcome { params: p, rss, iterations: MAX_ITERATIONS, converged: false }
}

/// Least-squares fit of the growth curve on `[fit_start, fit_end]`.
pub fn fit_user_growth(users: &TimeSeries, fit_start: Instant, fit_end: Instant) -> Result<EcoGrowthFit, UserGrowthError> {
    let window = users.between(fit_start, fit_end).map_err(|_| UserGrowthError::WindowTooSmall { n: 0, min: MIN_POINTS })?;
    let n = window.len();
    if n < MIN_POINTS || fit_end <= fit_start {
        return Err(UserGrowthError::WindowTooSmall { n, min: MIN_POINTS });
    }
    let logs = window.ln_values();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(UserGrowthError::DegenerateSeries);
    }
    let norm = Normalization { log_shift: lo, log_scale: hi - lo, t0: fit_start, t_scale: fit_end - fit_start };
    let t: Vec<f64> = window.timestamps().iter().map(|&s| norm.scale_time(s)).collect();
    let y: Vec<f64> = logs.iter().map(|v| (v - lo) / norm.log_scale).collect();

    let mut starts = Vec::with_capacity(64);
    for &b in &START_B {
        for &c in &START_C {
            for &d in &START_D {
                let a = t.iter().zip(&y).map(|(&ti, &yi)| yi + b * (-c * ti.powf(d)).exp()).sum::<f64>() / n as f64;
                starts.push(Vector4::new(a, b, c, d));
            }
        }
    }
    let outcomes: Vec<LmOutcome> = starts.par_iter().map(|s| levenberg_marquardt(*s, &t, &y)).collect();
    // starts are in lexicographic (b, c, d) order, so strict `<` keeps the smallest on ties
    let best = outcomes
        .iter()
        .filter(|o| o.converged && o.params[1] > 0.0 && o.params[2] > 0.0 && o.params[3] > 0.0)
        .fold(None, |acc: Option<&LmOutcome>, o| match acc {
            Some(b) if b.rss <= o.rss => acc,
            _ => Some(o),
        })
        .ok_or(UserGrowthError::NonConvergence)?;

    let p = best.params;
    let mut jtj = Matrix4::zeros();
    let mut residuals = Vec::with_capacity(n);
    for (&ti, &yi) in t.iter().zip(&y) {
        let (f, g) = curve(&p, ti);
        jtj += g * g.transpose();
        residuals.push(yi - f);
    }
    let sigma2 = best.rss / (n - 4) as f64;
    let cov = jtj.try_inverse().map(|m| m * sigma2).unwrap_or_else(|| Matrix4::from_element(f64::NAN));
    let mut covariance = [[0.0; 4]; 4];
    for (j, row) in covariance.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = cov[(j, k)];
        }
    }
    Ok(EcoGrowthFit {
        a: p[0],
        b: p[1],
        c: p[2],
        d: p[3],
        se_a: cov[(0, 0)].sqrt(),
        se_b: cov[(1, 1)].sqrt(),
        se_c: cov[(2, 2)].sqrt(),
        se_d: cov[(3, 3)].sqrt(),
        covariance,
        normalization: norm,
        fit_start,
        fit_end,
        n,
        rss: best.rss,
        iterations: best.iterations,
        residuals,
    })
}

impl EcoGrowthFit {
    fn params(&self) -> Vector4<f64> {
        Vector4::new(self.a, self.b, self.c, self.d)
    }

    fn cov(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|j, k| self.covariance[j][k])
    }

    /// `ln(u)` on the original scale and its delta-method standard error.
    pub fn log_users(&self, at: Instant) -> Result<(f64, f64), UserGrowthError> {
        if at < self.fit_start {
            return Err(UserGrowthError::DateBeforeFitStart(at));
        }
        let norm = &self.normalization;
        let (f, g) = curve(&self.params(), norm.scale_time(at));
        let var = (g.transpose() * self.cov() * g)[(0, 0)];
        Ok((norm.log_shift + norm.log_scale * f, norm.log_scale * var.max(0.0).sqrt()))
    }
}

pub fn project_users(fit: &EcoGrowthFit, dates: &[Instant]) -> Result<Projection, UserGrowthError> {
    let limit = fit.fit_start + 2 * (fit.fit_end - fit.fit_start);
    let mut values = Vec::with_capacity(dates.len());
    let mut relative_se = Vec::with_capacity(dates.len());
    for &at in dates {
        let (lu, se) = fit.log_users(at)?;
        values.push(lu.exp());
        relative_se.push(se);
    }
    Ok(Projection {
        timestamps: dates.to_vec(),
        users: values,
        relative_se,
        extrapolation: dates.iter().map(|&at| at > limit).collect(),
    })
}

/// Year-over-year change of projected users between consecutive January 1
/// boundaries from `first_year` to `last_year`.
pub fn annual_growth_rates(fit: &EcoGrowthFit, first_year: i32, last_year: i32) -> Result<Vec<GrowthRate>, UserGrowthError> {
    let mut out = Vec::new();
    for year in first_year..last_year {
        let (now, _) = fit.log_users(date(year, 1, 1))?;
        let (next, _) = fit.log_users(date(year + 1, 1, 1))?;
        out.push(GrowthRate { from_year: year, rate: (next - now).exp() - 1.0 });
    }
    Ok(out)
}

/// Asymptote `e^a` on the original scale with its delta-method relative
/// standard error.
pub fn carrying_capacity(fit: &EcoGrowthFit) -> CarryingCapacity {
    let norm = &fit.normalization;
    CarryingCapacity {
        value: (norm.log_shift + norm.log_scale * fit.a).exp(),
        relative_se: norm.log_scale * fit.se_a,
    }
}
