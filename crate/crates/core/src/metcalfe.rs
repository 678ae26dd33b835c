//! Generalized Metcalfe regression `ln(cap) = α + β ln(users) + ε`, fixed
//! support lines, rolling exponents and the Market-to-Metcalfe Value ratio.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use thiserror::Error;

use crate::timeseries::{align_forward, Instant, TimeSeries, TimeSeriesError, SECONDS_PER_DAY};

const MIN_ROLLING_POINTS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetcalfeError {
    #[error("regression needs at least {min} aligned observations, got {n}")]
    InsufficientData { n: usize, min: usize },
    #[error("ln(users) has zero variance")]
    DegenerateRegressor,
    #[error("restricted model must have fewer free parameters than the full model")]
    NotNested,
    #[error("fits were computed on different samples")]
    MismatchedSamples,
    #[error("rolling window holds {n} observations, at least {min} needed")]
    WindowTooSmall { n: usize, min: usize },
    #[error("series do not overlap in time")]
    EmptyOverlap,
    #[error("support line slope must be positive, got {0}")]
    InvalidSupport(f64),
    #[error("unknown support line preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    TimeSeries(#[from] TimeSeriesError),
}

impl MetcalfeError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InsufficientData { .. } => "InsufficientData",
            Self::DegenerateRegressor => "DegenerateRegressor",
            Self::NotNested => "NotNested",
            Self::MismatchedSamples => "MismatchedSamples",
            Self::WindowTooSmall { .. } => "WindowTooSmall",
            Self::EmptyOverlap => "EmptyOverlap",
            Self::InvalidSupport(_) => "InvalidSupport",
            Self::UnknownPreset(_) => "UnknownPreset",
            Self::TimeSeries(e) => e.kind(),
        }
    }
}

/// OLS fit of log market cap on log active users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetcalfeFit {
    pub alpha: f64,
    pub beta: f64,
    pub se_alpha: f64,
    /// Zero when β was fixed.
    pub se_beta: f64,
    pub r_squared: f64,
    pub n: usize,
    /// First and last aligned timestamps.
    pub window: (Instant, Instant),
    pub rss: f64,
    /// Number of estimated coefficients (2 free, 1 with β fixed).
    pub free_params: usize,
    #[serde(default, skip_serializing)]
    pub residuals: Vec<f64>,
    #[serde(default, skip_serializing)]
    pub fingerprint: u64,
}

/// Fixed `(α₀, β₀)` valuation line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportLine {
    pub alpha0: f64,
    pub beta0: f64,
}

impl SupportLine {
    pub const PRESETS: [(&'static str, SupportLine); 3] = [
        ("ols", SupportLine { alpha0: 1.51, beta0: 1.69 }),
        ("support", SupportLine { alpha0: 0.0, beta0: 1.75 }),
        ("metcalfe-support", SupportLine { alpha0: -3.0, beta0: 2.0 }),
    ];

    pub fn new(alpha0: f64, beta0: f64) -> Result<Self, MetcalfeError> {
        if !(beta0 > 0.0 && beta0.is_finite() && alpha0.is_finite()) {
            return Err(MetcalfeError::InvalidSupport(beta0));
        }
        Ok(Self { alpha0, beta0 })
    }

    pub fn preset(name: &str) -> Result<Self, MetcalfeError> {
        Self::PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, line)| *line)
            .ok_or_else(|| MetcalfeError::UnknownPreset(name.to_string()))
    }
}

/// Anything that maps users to a predicted market cap `e^α u^β`.
pub trait Valuation {
    fn coefficients(&self) -> (f64, f64);
}

impl Valuation for SupportLine {
    fn coefficients(&self) -> (f64, f64) {
        (self.alpha0, self.beta0)
    }
}

impl Valuation for MetcalfeFit {
    fn coefficients(&self) -> (f64, f64) {
        (self.alpha, self.beta)
    }
}

/// Market-to-Metcalfe Value ratio series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmvSeries {
    pub ratio: TimeSeries,
    pub support: SupportLine,
}

/// Rolling-window exponents, indexed by the right end of each window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingBeta {
    pub window: i64,
    pub timestamps: Vec<Instant>,
    pub beta: Vec<f64>,
    pub se_beta: Vec<f64>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    /// `H1: β < threshold`.
    OneSided,
    /// `H1: β ≠ threshold`, counted only when the estimate is below it.
    TwoSided,
}

impl RollingBeta {
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        if self.beta.is_empty() {
            return f64::NAN;
        }
        self.beta.iter().filter(|&&b| b < threshold).count() as f64 / self.beta.len() as f64
    }

    /// Share of windows whose β is significantly below `threshold` by a
    /// t-test with `n - 2` degrees of freedom.
    pub fn fraction_significantly_below(&self, threshold: f64, level: f64, sided: Sidedness) -> f64 {
        if self.beta.is_empty() {
            return f64::NAN;
        }
        let hits = (0..self.beta.len())
            .filter(|&i| {
                let (b, se, n) = (self.beta[i], self.se_beta[i], self.n[i]);
                if !(b < threshold) || se <= 0.0 {
                    return false;
                }
                let dist = StudentsT::new(0.0, 1.0, (n - 2) as f64).expect("positive dof");
                let p = dist.cdf((b - threshold) / se);
                let p = match sided {
                    Sidedness::OneSided => p,
                    Sidedness::TwoSided => 2.0 * p,
                };
                p < level
            })
            .count();
        hits as f64 / self.beta.len() as f64
    }
}

/// Pairs users and cap by UTC calendar day, keeping the last observation of
/// each day.
pub fn align_daily(users: &TimeSeries, cap: &TimeSeries) -> (Vec<Instant>, Vec<f64>, Vec<f64>) {
    let daily = |s: &TimeSeries| {
        let mut out: Vec<(i64, f64)> = Vec::new();
        for (t, v) in s.iter() {
            let day = t.div_euclid(SECONDS_PER_DAY);
            match out.last_mut() {
                Some(last) if last.0 == day => last.1 = v,
                _ => out.push((day, v)),
            }
        }
        out
    };
    let (u, c) = (daily(users), daily(cap));
    let (mut i, mut j) = (0, 0);
    let (mut ts, mut uv, mut cv) = (Vec::new(), Vec::new(), Vec::new());
    while i < u.len() && j < c.len() {
        match u[i].0.cmp(&c[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                ts.push(u[i].0 * SECONDS_PER_DAY);
                uv.push(u[i].1);
                cv.push(c[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    (ts, uv, cv)
}

fn sample_fingerprint(ts: &[Instant], y: &[f64]) -> u64 {
    crate::hash::fnv1a(ts.iter().map(|&t| t as u64).chain(y.iter().map(|v| v.to_bits())))
}

fn total_ss(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean).powi(2)).sum()
}

/// OLS of `y` on `x` with an intercept.
fn ols(ts: &[Instant], x: &[f64], y: &[f64]) -> Result<MetcalfeFit, MetcalfeError> {
    let n = x.len();
    if n < 3 {
        return Err(MetcalfeError::InsufficientData { n, min: 3 });
    }
    let nf = n as f64;
    let xm = x.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    if !(sxx > 1e-12 * x.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE)) {
        return Err(MetcalfeError::DegenerateRegressor);
    }
    let beta = sxy / sxx;
    let alpha = ym - beta * xm;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - alpha - beta * a).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let tss = total_ss(y);
    let s2 = rss / (nf - 2.0);
    Ok(MetcalfeFit {
        alpha,
        beta,
        se_alpha: (s2 * (1.0 / nf + xm * xm / sxx)).sqrt(),
        se_beta: (s2 / sxx).sqrt(),
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
        n,
        window: (ts[0], ts[n - 1]),
        rss,
        free_params: 2,
        residuals,
        fingerprint: sample_fingerprint(ts, y),
    })
}

fn aligned_logs(users: &TimeSeries, cap: &TimeSeries) -> (Vec<Instant>, Vec<f64>, Vec<f64>) {
    let (ts, u, c) = align_daily(users, cap);
    (ts, u.iter().map(|v| v.ln()).collect(), c.iter().map(|v| v.ln()).collect())
}

pub fn fit_generalized_metcalfe(users: &TimeSeries, cap: &TimeSeries) -> Result<MetcalfeFit, MetcalfeError> {
    let (ts, x, y) = aligned_logs(users, cap);
    ols(&ts, &x, &y)
}

/// Intercept-only fit of `ln(cap) - beta_fixed ln(users)`.
///
/// `r_squared` is `1 - RSS/TSS` of `ln(cap)`, floored at 0.
pub fn fit_constrained_metcalfe(users: &TimeSeries, cap: &TimeSeries, beta_fixed: f64) -> Result<MetcalfeFit, MetcalfeError> {
    let (ts, x, y) = aligned_logs(users, cap);
    let n = x.len();
    if n < 2 {
        return Err(MetcalfeError::InsufficientData { n, min: 2 });
    }
    let nf = n as f64;
    let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - beta_fixed * a).collect();
    let alpha = z.iter().sum::<f64>() / nf;
    let residuals: Vec<f64> = z.iter().map(|v| v - alpha).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let tss = total_ss(&y);
    Ok(MetcalfeFit {
        alpha,
        beta: beta_fixed,
        se_alpha: (rss / (nf - 1.0) / nf).sqrt(),
        se_beta: 0.0,
        r_squared: if tss > 0.0 { (1.0 - rss / tss).max(0.0) } else { 1.0 },
        n,
        window: (ts[0], ts[n - 1]),
        rss,
        free_params: 1,
        residuals,
        fingerprint: sample_fingerprint(&ts, &y),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub statistic: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p_value: f64,
}

/// ANOVA F-test of a restricted fit against the full fit on the same data.
pub fn compare_nested_ftest(restricted: &MetcalfeFit, full: &MetcalfeFit) -> Result<FTest, MetcalfeError> {
    if restricted.free_params >= full.free_params {
        return Err(MetcalfeError::NotNested);
    }
    if restricted.n != full.n || restricted.fingerprint != full.fingerprint {
        return Err(MetcalfeError::MismatchedSamples);
    }
    let df_num = full.free_params - restricted.free_params;
    let df_den = full.n - full.free_params;
    let diff = (restricted.rss - full.rss).max(0.0);
    if diff == 0.0 {
        return Ok(FTest { statistic: 0.0, df_num, df_den, p_value: 1.0 });
    }
    let statistic = (diff / df_num as f64) / (full.rss / df_den as f64);
    let p_value = FisherSnedecor::new(df_num as f64, df_den as f64).expect("positive dof").sf(statistic);
    Ok(FTest { statistic, df_num, df_den, p_value: p_value.clamp(0.0, 1.0) })
}

/// Exponent on causal windows `(t - window, t]`.
///
/// A window is evaluated at every aligned timestamp `t` for which it is fully
/// covered by data, meaning `t - window >= start - spacing` with `spacing`
/// the median gap between aligned observations.
pub fn rolling_beta(users: &TimeSeries, cap: &TimeSeries, window: i64) -> Result<RollingBeta, MetcalfeError> {
    if window <= 0 {
        return Err(MetcalfeError::WindowTooSmall { n: 0, min: MIN_ROLLING_POINTS });
    }
    let (ts, x, y) = aligned_logs(users, cap);
    if ts.len() < MIN_ROLLING_POINTS {
        return Err(MetcalfeError::WindowTooSmall { n: ts.len(), min: MIN_ROLLING_POINTS });
    }
    let mut gaps: Vec<i64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_unstable();
    let spacing = gaps[gaps.len() / 2];
    let ends: Vec<usize> = (0..ts.len()).filter(|&i| ts[i] - window >= ts[0] - spacing).collect();
    if ends.is_empty() {
        return Err(MetcalfeError::WindowTooSmall { n: ts.len(), min: MIN_ROLLING_POINTS });
    }
    let fits: Vec<Result<(f64, f64, usize), MetcalfeError>> = ends
        .par_iter()
        .map(|&i| {
            let lo = ts.partition_point(|&s| s <= ts[i] - window);
            let n = i + 1 - lo;
            if n < MIN_ROLLING_POINTS {
                return Err(MetcalfeError::WindowTooSmall { n, min: MIN_ROLLING_POINTS });
            }
            let fit = ols(&ts[lo..=i], &x[lo..=i], &y[lo..=i])?;
            Ok((fit.beta, fit.se_beta, n))
        })
        .collect();
    let mut out = RollingBeta { window, timestamps: Vec::new(), beta: Vec::new(), se_beta: Vec::new(), n: Vec::new() };
    for (&i, fit) in ends.iter().zip(fits) {
        let (b, se, n) = fit?;
        out.timestamps.push(ts[i]);
        out.beta.push(b);
        out.se_beta.push(se);
        out.n.push(n);
    }
    Ok(out)
}

/// `e^α u^β` at every user observation.
pub fn predict_cap(relation: &impl Valuation, users: &TimeSeries) -> Result<TimeSeries, MetcalfeError> {
    let (alpha, beta) = relation.coefficients();
    Ok(users.map_values(|u| (alpha + beta * u.ln()).exp())?)
}

/// Market cap over the support-line valuation, with users carried forward
/// to the cap timestamps.
pub fn mmv_ratio(cap: &TimeSeries, smoothed_users: &TimeSeries, support: &SupportLine) -> Result<MmvSeries, MetcalfeError> {
    let support = SupportLine::new(support.alpha0, support.beta0)?;
    let (ts, c, u) = align_forward(cap, smoothed_users);
    if ts.len() < 2 {
        return Err(MetcalfeError::EmptyOverlap);
    }
    let ratio = c
        .iter()
        .zip(&u)
        .map(|(cv, uv)| (cv.ln() - support.alpha0 - support.beta0 * uv.ln()).exp())
        .collect();
    Ok(MmvSeries { ratio: TimeSeries::new(ts, ratio)?, support })
}
