//! Fitting-window selection: nonparametric detrending, an AR(1) error model
//! for the detrended residuals, bootstrap distributions of the residual
//! error by window size, and accept/reject of LPPLS fits on many windows.
//!
//! Scaled time in this module maps `t0 -> 0` and `t2 -> 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lppls::{
    ar1_loglik, fit_model, lppls_value, maximize_phi, profile_interval, whiten, FitResult, GridSpec, LpplsError, Model,
    Sample, TcInterval,
};
use crate::simulate::{ar1_from_innovations, substream};
use crate::timeseries::{
    candidate_fits, local_regression, Instant, SelectionMode, SmoothFit, SmoothingSpec, TimeSeries, TimeSeriesError, SECONDS_PER_DAY};

const MIN_DETREND_POINTS: usize = 50;
const MIN_RESIDUALS: usize = 30;
const MIN_WINDOW_POINTS: usize = 20;
const MIN_SCAN_BOOTSTRAP: usize = 1000;
const NOISELESS_VARIANCE: f64 = 1e-12;
/// Residual errors this small relative to the data are rounding, not misfit.
const ROUNDOFF_FLOOR: f64 = 1e-24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error("window holds {n} observations, at least {min} needed")]
    WindowTooSmall { n: usize, min: usize },
    #[error("bootstrap needs at least {min} residuals, got {n}")]
    TooFewResiduals { n: usize, min: usize },
    #[error("invalid scan configuration: {0}")]
    InvalidConfig(String),
    #[error("every window was rejected")]
    NoWindowAccepted(Box<Rejection>),
    #[error(transparent)]
    Lppls(#[from] LpplsError),
    #[error(transparent)]
    TimeSeries(#[from] TimeSeriesError),
}

impl ScanError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::WindowTooSmall { .. } => "WindowTooSmall",
            Self::TooFewResiduals { .. } => "TooFewResiduals",
            Self::InvalidConfig(_) => "InvalidConfig",
            Self::NoWindowAccepted(_) => "NoWindowAccepted",
            Self::Lppls(e) => e.kind(),
            Self::TimeSeries(e) => e.kind(),
        }
    }
}

/// Diagnostics carried by [`ScanError::NoWindowAccepted`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub windows: Vec<WindowVerdict>,
    /// Index of the window with the smallest residual error to quantile ratio.
    pub least_rejected: usize,
}

/// Which residuals feed the bootstrap of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    /// Only the detrended residuals inside `(T1, T2)`.
    WindowLocal,
    /// All detrended residuals of `(T0, T2)`.
    Global,
}

/// How a bootstrap replicate is turned into a residual error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BootstrapMode {
    /// Error energy against the zero trend.
    ZeroTrend,
    /// Simulated errors added to the window's fitted trend and refit with
    /// the full grid. Costs one calibration per replicate.
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub t0: Instant,
    pub t2: Instant,
    pub t1_candidates: Vec<Instant>,
    /// Recorded in every output.
    pub seed: u64,
    #[serde(default = "default_n_bootstrap")]
    pub n_bootstrap: usize,
    #[serde(default = "default_dof_penalty")]
    pub dof_penalty: usize,
    #[serde(default = "default_acceptance_level")]
    pub acceptance_level: f64,
    #[serde(default = "default_model")]
    pub model: Model,
    #[serde(default = "default_resampling")]
    pub resampling: Resampling,
    #[serde(default = "default_bootstrap_mode")]
    pub bootstrap: BootstrapMode,
    #[serde(default = "default_smoothing")]
    pub smoothing: SmoothingSpec,
}

fn default_n_bootstrap() -> usize {
    MIN_SCAN_BOOTSTRAP
}
fn default_dof_penalty() -> usize {
    7
}
fn default_acceptance_level() -> f64 {
    0.95
}
fn default_model() -> Model {
    Model::Lppls
}
fn default_resampling() -> Resampling {
    Resampling::WindowLocal
}
fn default_bootstrap_mode() -> BootstrapMode {
    BootstrapMode::ZeroTrend
}
fn default_smoothing() -> SmoothingSpec {
    SmoothingSpec::aic(10.0, 2)
}

impl ScanConfig {
    pub fn new(t0: Instant, t2: Instant, t1_candidates: Vec<Instant>, seed: u64) -> Self {
        Self {
            t0,
            t2,
            t1_candidates,
            seed,
            n_bootstrap: default_n_bootstrap(),
            dof_penalty: default_dof_penalty(),
            acceptance_level: default_acceptance_level(),
            model: default_model(),
            resampling: default_resampling(),
            bootstrap: default_bootstrap_mode(),
            smoothing: default_smoothing(),
        }
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        let bad = |m: String| Err(ScanError::InvalidConfig(m));
        if self.t1_candidates.is_empty() {
            return bad("t1_candidates is empty".into());
        }
        let lo = *self.t1_candidates.iter().min().expect("non-empty");
        let hi = *self.t1_candidates.iter().max().expect("non-empty");
        if !(self.t0 < lo && hi < self.t2) {
            return bad("candidates must satisfy t0 < t1 < t2".into());
        }
        if self.n_bootstrap < MIN_SCAN_BOOTSTRAP {
            return bad(format!("n_bootstrap must be at least {MIN_SCAN_BOOTSTRAP}"));
        }
        if !(self.acceptance_level > 0.0 && self.acceptance_level < 1.0) {
            return bad(format!("acceptance_level {} outside (0, 1)", self.acceptance_level));
        }
        self.smoothing.validate()?;
        Ok(())
    }

    /// Scaled time with `t0 -> 0` and `t2 -> 1`.
    pub fn scale(&self, t: Instant) -> f64 {
        (t - self.t0) as f64 / (self.t2 - self.t0) as f64
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.t0 as f64 + s * (self.t2 - self.t0) as f64
    }
}

/// Output of the detrending step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detrended {
    /// `exp` of the smoothed log series.
    pub trend: TimeSeries,
    /// Log-space residuals, one per observation in `[t0, t2]`.
    pub residuals: Vec<f64>,
    pub phi0: f64,
    pub innovation_sd: f64,
    pub equivalent_df: f64,
    pub span: f64,
}

/// Exact-likelihood AR(1) fit of zero-mean errors; `(phi, innovation sd)`.
/// Errors with variance below `1e-12` are treated as absent: `phi = 0`.
pub fn fit_ar1(errors: &[f64]) -> (f64, f64) {
    let n = errors.len();
    let var = errors.iter().map(|e| e * e).sum::<f64>() / n.max(1) as f64;
    if n < 3 || var < NOISELESS_VARIANCE {
        return (0.0, var.sqrt());
    }
    let loglik = |phi: f64| {
        let rss: f64 = whiten(errors, phi).iter().map(|e| e * e).sum();
        (rss > 0.0).then(|| ar1_loglik(rss, n, phi))
    };
    match maximize_phi(loglik) {
        Some((phi, _)) => {
            let rss: f64 = whiten(errors, phi).iter().map(|e| e * e).sum();
            (phi, (rss / n as f64).sqrt())
        }
        None => (0.0, var.sqrt()),
    }
}

fn residuals_of(y: &[f64], fitted: &[f64]) -> Vec<f64> {
    y.iter().zip(fitted).map(|(a, b)| a - b).collect()
}

/// AICc of each candidate smoother with the residuals scored by the exact
/// AR(1) likelihood rather than as white noise. Under autocorrelated errors
/// the white-noise criterion keeps adding df to chase the noise.
fn select_under_ar1(x: &[f64], y: &[f64], spec: &SmoothingSpec) -> Result<(SmoothFit, Vec<f64>, (f64, f64)), ScanError> {
    let n = y.len() as f64;
    let mut best: Option<(f64, SmoothFit, Vec<f64>, (f64, f64))> = None;
    for fit in candidate_fits(x, y, spec)? {
        let residuals = residuals_of(y, &fit.fitted);
        let (phi, sd) = fit_ar1(&residuals);
        let loglik = ar1_loglik(sd * sd * n, y.len(), phi);
        let k = fit.trace + 2.0;
        let aicc = -2.0 * loglik + 2.0 * k * n / (n - k - 1.0);
        if best.as_ref().map_or(true, |b| aicc < b.0) {
            best = Some((aicc, fit, residuals, (phi, sd)));
        }
    }
    let (_, fit, residuals, ar) = best.ok_or(ScanError::WindowTooSmall { n: y.len(), min: MIN_DETREND_POINTS })?;
    Ok((fit, residuals, ar))
}

/// Local-regression trend of `ln(data)` on `[t0, t2]` and an AR(1) fit to
/// what is left.
pub fn detrend_and_fit_errors(data: &TimeSeries, t0: Instant, t2: Instant, spec: &SmoothingSpec) -> Result<Detrended, ScanError> {
    let window = data.between(t0, t2).map_err(|_| ScanError::WindowTooSmall { n: 0, min: MIN_DETREND_POINTS })?;
    if window.len() < MIN_DETREND_POINTS {
        return Err(ScanError::WindowTooSmall { n: window.len(), min: MIN_DETREND_POINTS });
    }
    let x: Vec<f64> = window.timestamps().iter().map(|&t| (t - t0) as f64 / SECONDS_PER_DAY as f64).collect();
    let y = window.ln_values();
    let (fit, residuals, (phi0, innovation_sd)) = match spec.selection_mode {
        SelectionMode::FixedDf => {
            let fit = local_regression(&x, &y, spec)?;
            let residuals = residuals_of(&y, &fit.fitted);
            let ar = fit_ar1(&residuals);
            (fit, residuals, ar)
        }
        SelectionMode::InformationCriterion => select_under_ar1(&x, &y, spec)?,
    };
    Ok(Detrended {
        trend: TimeSeries::new(window.timestamps().to_vec(), fit.fitted.iter().map(|v| v.exp()).collect())?,
        residuals,
        phi0,
        innovation_sd,
        equivalent_df: fit.trace,
        span: fit.span,
    })
}

/// Sorted bootstrap samples of `RSS / (n - p)` per window size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapErrorDist {
    pub phi0: f64,
    pub dof_penalty: usize,
    pub n_bootstrap: usize,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub samples: Vec<Vec<f64>>,
    /// Fewer than 1000 replicates.
    pub low_resolution: bool,
}

impl BootstrapErrorDist {
    pub fn samples_for(&self, n: usize) -> Option<&[f64]> {
        self.sizes.iter().position(|&s| s == n).map(|i| self.samples[i].as_slice())
    }

    /// Inverse of the empirical distribution function at `level`.
    pub fn quantile(&self, n: usize, level: f64) -> Option<f64> {
        self.samples_for(n).map(|s| empirical_quantile(s, level))
    }
}

fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let k = ((level * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Centered innovations `ε_i - φ ε_{i-1}` of a residual sequence.
fn innovations(residuals: &[f64], phi: f64) -> Vec<f64> {
    let eta: Vec<f64> = residuals.windows(2).map(|w| w[1] - phi * w[0]).collect();
    let mean = eta.iter().sum::<f64>() / eta.len() as f64;
    eta.iter().map(|e| e - mean).collect()
}

/// One simulated AR(1) error path of length `n` from resampled innovations.
fn simulate_path(pool: &[f64], phi: f64, n: usize, seed: u64, stream: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = substream(seed, stream);
    let eta: Vec<f64> = (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    ar1_from_innovations(&eta, phi)
}

fn stream_id(group: usize, replicate: usize) -> u64 {
    ((group as u64) << 32) | replicate as u64
}

fn zero_trend_samples(pool: &[f64], phi: f64, n: usize, n_bootstrap: usize, dof_penalty: usize, seed: u64, group: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..n_bootstrap)
        .into_par_iter()
        .map(|r| {
            let path = simulate_path(pool, phi, n, seed, stream_id(group, r));
            path.iter().map(|e| e * e).sum::<f64>() / (n - dof_penalty) as f64
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Residual-error distributions for each window size: innovations of
/// `residuals` are resampled i.i.d., fed through the AR(1) recursion with
/// `phi0` from its stationary start, and summarized by `RSS / (n - p)`
/// against the zero trend.
pub fn bootstrap_error_distribution(
    residuals: &[f64],
    phi0: f64,
    window_sizes: &[usize],
    n_bootstrap: usize,
    dof_penalty: usize,
    seed: u64,
) -> Result<BootstrapErrorDist, ScanError> {
    if residuals.len() < MIN_RESIDUALS {
        return Err(ScanError::TooFewResiduals { n: residuals.len(), min: MIN_RESIDUALS });
    }
    if n_bootstrap == 0 {
        return Err(ScanError::InvalidConfig("n_bootstrap must be positive".into()));
    }
    if !(phi0.abs() < 1.0) {
        return Err(ScanError::InvalidConfig(format!("|phi0| = {} must be below 1", phi0.abs())));
    }
    if let Some(&n) = window_sizes.iter().find(|&&n| n <= dof_penalty) {
        return Err(ScanError::InvalidConfig(format!("window size {n} does not exceed the dof penalty {dof_penalty}")));
    }
    let pool = innovations(residuals, phi0);
    let samples = window_sizes
        .iter()
        .enumerate()
        .map(|(j, &n)| zero_trend_samples(&pool, phi0, n, n_bootstrap, dof_penalty, seed, j))
        .collect();
    Ok(BootstrapErrorDist {
        phi0,
        dof_penalty,
        n_bootstrap,
        seed,
        sizes: window_sizes.to_vec(),
        samples,
        low_resolution: n_bootstrap < MIN_SCAN_BOOTSTRAP,
    })
}

/// Fit and verdict for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowVerdict {
    pub t1: Instant,
    pub t2: Instant,
    pub n: usize,
    pub fit: FitResult,
    pub residual_error: f64,
    /// Bootstrap quantile at the acceptance level.
    pub quantile: f64,
    pub accepted: bool,
    /// Profile interval of this fit alone; `None` when degenerate.
    pub interval: Option<TcInterval>,
    /// Calendar `t_c` in fractional epoch seconds.
    pub t_c_calendar: f64,
}

impl WindowVerdict {
    fn rejection_ratio(&self) -> f64 {
        if self.quantile > 0.0 {
            self.residual_error / self.quantile
        } else if self.residual_error > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub config: ScanConfig,
    pub grid: GridSpec,
    pub phi0: f64,
    pub detrend_df: f64,
    pub windows: Vec<WindowVerdict>,
    pub selected_t1: Instant,
    /// Accepted windows of the same size as the selected one.
    pub alternates: Vec<Instant>,
    /// Mean of the max-normalized profiles of accepted fits.
    pub aggregated_profile: Vec<(f64, f64)>,
    /// `None` when the averaged profile covers the whole grid.
    pub aggregated_interval: Option<TcInterval>,
}

impl ScanResult {
    pub fn accepted(&self) -> impl Iterator<Item = &WindowVerdict> {
        self.windows.iter().filter(|w| w.accepted)
    }

    /// True when the averaged profile pins `t_c` inside the grid on both sides.
    pub fn has_confident_tc(&self) -> bool {
        self.aggregated_interval.as_ref().is_some_and(|iv| !iv.is_censored())
    }
}

struct WindowJob<'a> {
    data: &'a TimeSeries,
    config: &'a ScanConfig,
    grid: &'a GridSpec,
    detrended: &'a Detrended,
    detrend_start: Instant,
}

impl WindowJob<'_> {
    fn sample(&self, t1: Instant, t2: Instant) -> Result<Sample, ScanError> {
        let (t, y): (Vec<f64>, Vec<f64>) = self
            .data
            .iter()
            .filter(|(t, _)| *t >= t1 && *t <= t2)
            .map(|(t, v)| (self.config.scale(t), v.ln()))
            .unzip();
        if t.len() < MIN_WINDOW_POINTS {
            return Err(ScanError::WindowTooSmall { n: t.len(), min: MIN_WINDOW_POINTS });
        }
        Ok(Sample::with_window(t, y, self.config.scale(t1), self.config.scale(t2))?)
    }

    fn residual_pool(&self, t1: Instant, t2: Instant) -> &[f64] {
        match self.config.resampling {
            Resampling::Global => &self.detrended.residuals,
            Resampling::WindowLocal => {
                let ts = self.detrended.trend.timestamps();
                let lo = ts.partition_point(|&t| t < t1.max(self.detrend_start));
                let hi = ts.partition_point(|&t| t <= t2);
                &self.detrended.residuals[lo..hi]
            }
        }
    }

    fn evaluate(&self, t1: Instant, t2: Instant, group: usize) -> Result<WindowVerdict, ScanError> {
        let config = self.config;
        let sample = self.sample(t1, t2)?;
        let n = sample.len();
        if n <= config.dof_penalty {
            return Err(ScanError::WindowTooSmall { n, min: config.dof_penalty + 1 });
        }
        let fit = fit_model(&sample, self.grid, config.model)?;
        let residual_error = fit.residual_error(config.dof_penalty);
        let residuals = self.residual_pool(t1, t2);
        if residuals.len() < MIN_RESIDUALS {
            return Err(ScanError::TooFewResiduals { n: residuals.len(), min: MIN_RESIDUALS });
        }
        let phi = self.detrended.phi0;
        let pool = innovations(residuals, phi);
        let samples = match config.bootstrap {
            BootstrapMode::ZeroTrend => {
                zero_trend_samples(&pool, phi, n, config.n_bootstrap, config.dof_penalty, config.seed, group)
            }
            BootstrapMode::Refit => self.refit_samples(&sample, &fit, &pool, phi, group)?,
        };
        let quantile = empirical_quantile(&samples, config.acceptance_level);
        let mean_sq = sample.values().iter().map(|v| v * v).sum::<f64>() / n as f64;
        let floor = ROUNDOFF_FLOOR * mean_sq.max(1.0);
        Ok(WindowVerdict {
            t1,
            t2,
            n,
            residual_error,
            quantile,
            accepted: residual_error <= quantile.max(floor),
            interval: profile_interval(&fit.profile_tc, config.acceptance_level).ok(),
            t_c_calendar: config.unscale(fit.params.t_c),
            fit,
        })
    }

    fn refit_samples(&self, sample: &Sample, fit: &FitResult, pool: &[f64], phi: f64, group: usize) -> Result<Vec<f64>, ScanError> {
        let config = self.config;
        let trend = sample.times().iter().map(|&t| lppls_value(&fit.params, t)).collect::<Result<Vec<_>, _>>()?;
        let (s1, s2) = sample.window();
        let mut out = (0..config.n_bootstrap)
            .map(|r| {
                let path = simulate_path(pool, phi, trend.len(), config.seed, stream_id(group, r));
                let y = trend.iter().zip(&path).map(|(a, e)| a + e).collect();
                let boot = Sample::with_window(sample.times().to_vec(), y, s1, s2)?;
                Ok(fit_model(&boot, self.grid, config.model)?.residual_error(config.dof_penalty))
            })
            .collect::<Result<Vec<f64>, ScanError>>()?;
        out.sort_by(f64::total_cmp);
        Ok(out)
    }
}

/// Grid on which every window's profile is evaluated: the configured
/// explicit values, or the default construction on the largest window.
fn common_grid(config: &ScanConfig, grid: &GridSpec) -> GridSpec {
    let mut g = grid.clone();
    if g.tc_values.is_none() {
        let t1 = *config.t1_candidates.iter().min().expect("validated");
        g.tc_values = Some(grid.tc_grid(config.scale(t1), 1.0));
    }
    g
}

/// Mean of max-normalized profiles; `-inf` wherever any input is.
fn average_profiles(profiles: &[&[(f64, f64)]]) -> Vec<(f64, f64)> {
    let Some(first) = profiles.first() else { return Vec::new() };
    let maxima: Vec<f64> = profiles
        .iter()
        .map(|p| p.iter().map(|q| q.1).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    (0..first.len())
        .map(|i| {
            let mut sum = 0.0;
            for (p, max) in profiles.iter().zip(&maxima) {
                sum += p[i].1 - max;
            }
            (first[i].0, sum / profiles.len() as f64)
        })
        .collect()
}

/// Fits every candidate window `(T1, T2)`, accepts those whose residual
/// error does not exceed the bootstrap quantile for their size, and averages
/// the accepted `t_c` profiles.
pub fn scan_windows(data: &TimeSeries, config: &ScanConfig, grid: &GridSpec) -> Result<ScanResult, ScanError> {
    config.validate()?;
    let detrended = detrend_and_fit_errors(data, config.t0, config.t2, &config.smoothing)?;
    let grid = common_grid(config, grid);
    let job = WindowJob { data, config, grid: &grid, detrended: &detrended, detrend_start: config.t0 };
    let windows = config
        .t1_candidates
        .iter()
        .enumerate()
        .map(|(j, &t1)| job.evaluate(t1, config.t2, j))
        .collect::<Result<Vec<_>, _>>()?;

    let Some(selected) = select_largest(&windows) else {
        return Err(no_window_accepted(windows));
    };
    let selected_t1 = windows[selected].t1;
    let alternates = windows
        .iter()
        .enumerate()
        .filter(|(i, w)| *i != selected && w.accepted && w.n == windows[selected].n)
        .map(|(_, w)| w.t1)
        .collect();
    let profiles: Vec<&[(f64, f64)]> = windows.iter().filter(|w| w.accepted).map(|w| w.fit.profile_tc.as_slice()).collect();
    let aggregated_profile = average_profiles(&profiles);
    let aggregated_interval = profile_interval(&aggregated_profile, config.acceptance_level).ok();
    Ok(ScanResult {
        config: config.clone(),
        grid,
        phi0: detrended.phi0,
        detrend_df: detrended.equivalent_df,
        windows,
        selected_t1,
        alternates,
        aggregated_profile,
        aggregated_interval,
    })
}

/// Accepted window with the most observations, ties to the higher loglik.
fn select_largest(windows: &[WindowVerdict]) -> Option<usize> {
    windows
        .iter()
        .enumerate()
        .filter(|(_, w)| w.accepted)
        .fold(None, |best: Option<usize>, (i, w)| match best {
            Some(b) if (windows[b].n, windows[b].fit.loglik) >= (w.n, w.fit.loglik) => Some(b),
            _ => Some(i),
        })
}

fn no_window_accepted(windows: Vec<WindowVerdict>) -> ScanError {
    let least_rejected = windows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.rejection_ratio().total_cmp(&b.1.rejection_ratio()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    ScanError::NoWindowAccepted(Box::new(Rejection { windows, least_rejected }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2Selection {
    pub selected_t2: Instant,
    pub windows: Vec<WindowVerdict>,
}

/// Same accept/reject rule with `T1` fixed and `T2` varying; returns the
/// latest accepted `T2`. Each candidate is detrended on `(t0, T2)` only.
pub fn select_t2(
    data: &TimeSeries,
    config: &ScanConfig,
    grid: &GridSpec,
    t1: Instant,
    t2_candidates: &[Instant],
) -> Result<T2Selection, ScanError> {
    if t2_candidates.is_empty() {
        return Err(ScanError::InvalidConfig("t2 candidate grid is empty".into()));
    }
    if t2_candidates.iter().any(|&t2| t2 <= t1) || t1 <= config.t0 {
        return Err(ScanError::InvalidConfig("candidates must satisfy t0 < t1 < t2".into()));
    }
    let mut probe = config.clone();
    probe.t1_candidates = vec![t1];
    probe.t2 = config.t2.max(*t2_candidates.iter().max().expect("non-empty") + 1);
    probe.validate()?;
    let scale_config = ScanConfig { t2: config.t2, ..probe.clone() };
    let mut windows = Vec::with_capacity(t2_candidates.len());
    for (j, &t2) in t2_candidates.iter().enumerate() {
        let detrended = detrend_and_fit_errors(data, config.t0, t2, &config.smoothing)?;
        let job = WindowJob { data, config: &scale_config, grid, detrended: &detrended, detrend_start: config.t0 };
        windows.push(job.evaluate(t1, t2, j)?);
    }
    let best = windows.iter().filter(|w| w.accepted).map(|w| w.t2).max();
    match best {
        Some(selected_t2) => Ok(T2Selection { selected_t2, windows }),
        None => Err(no_window_accepted(windows)),
    }
}
