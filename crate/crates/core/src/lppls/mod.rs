//! LPPLS and hyperbolic power-law calibration by GLS with AR(1) errors.
//!
//! The trend is
//!
//! ```text
//! y(t) = a + (tc - t)^m * (b + c cos(ω ln(tc - t)) + d sin(ω ln(tc - t)))
//! ```
//!
//! with `y = ln(price)` and errors `ε_i = φ ε_{i-1} + η_i`. The linear
//! coefficients `(a, b, c, d)` are solved in closed form for every grid point
//! of the nonlinear parameters `(m, ω, tc)`; `φ` is maximized per grid point.

mod gls;
mod grid;
mod inference;
mod profile;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{Instant, TimeSeries};

pub use gls::{ar1_loglik, gls_linear_solve, LinearSolution};
pub use grid::{GridSpec, ParamRange, PhiMode};
pub use inference::{likelihood_ratio_test, profile_ci_tc, profile_interval, profile_threshold, LrTest, TcInterval};
pub use profile::{fit_lppls, fit_model, fit_power_law};

pub(crate) use gls::whiten;
pub(crate) use profile::maximize_phi;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpplsError {
    #[error("t = {t} is at or beyond the critical time {t_c}")]
    AtOrBeyondSingularity { t: f64, t_c: f64 },
    #[error("design matrix is singular")]
    SingularDesign,
    #[error("every grid point produced a singular design")]
    AllGridPointsSingular,
    #[error("window has {n} usable points, need at least {min}")]
    WindowTooSmall { n: usize, min: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("profile is flat: the confidence set covers the whole t_c grid")]
    DegenerateProfile,
    #[error("profile has no finite points")]
    EmptyProfile,
    #[error("fits were computed on different data")]
    NotSameData,
    #[error("negative likelihood ratio {0}: the nested fit beat the full model")]
    NegativeLr(f64),
}

impl LpplsError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::AtOrBeyondSingularity { .. } => "AtOrBeyondSingularity",
            Self::SingularDesign => "SingularDesign",
            Self::AllGridPointsSingular => "AllGridPointsSingular",
            Self::WindowTooSmall { .. } => "WindowTooSmall",
            Self::InvalidGrid(_) => "InvalidGrid",
            Self::InvalidParameter(_) => "InvalidParameter",
            Self::InvalidSample(_) => "InvalidSample",
            Self::DegenerateProfile => "DegenerateProfile",
            Self::EmptyProfile => "EmptyProfile",
            Self::NotSameData => "NotSameData",
            Self::NegativeLr(_) => "NegativeLR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Lppls,
    PowerLaw,
}

impl Model {
    /// Number of linear coefficients.
    pub fn n_linear(self) -> usize {
        match self {
            Model::Lppls => 4,
            Model::PowerLaw => 2,
        }
    }
}

/// Full parameter vector. The power law has `c_cos = d_sin = 0` and no `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpplsParams {
    pub a: f64,
    pub b: f64,
    pub c_cos: f64,
    pub d_sin: f64,
    pub m: f64,
    pub omega: Option<f64>,
    pub t_c: f64,
    pub phi: f64,
}

impl LpplsParams {
    pub fn power_law(a: f64, b: f64, m: f64, t_c: f64, phi: f64) -> Self {
        Self { a, b, c_cos: 0.0, d_sin: 0.0, m, omega: None, t_c, phi }
    }

    pub fn model(&self) -> Model {
        if self.omega.is_some() {
            Model::Lppls
        } else {
            Model::PowerLaw
        }
    }

    /// Price level at the singularity, `exp(a)`.
    pub fn critical_level(&self) -> f64 {
        self.a.exp()
    }
}

/// Deterministic trend value at scaled time `t`.
pub fn lppls_value(params: &LpplsParams, t: f64) -> Result<f64, LpplsError> {
    if t >= params.t_c {
        return Err(LpplsError::AtOrBeyondSingularity { t, t_c: params.t_c });
    }
    let dt = params.t_c - t;
    let pow = dt.powf(params.m);
    let osc = match params.omega {
        Some(w) => {
            let phase = w * dt.ln();
            params.c_cos * phase.cos() + params.d_sin * phase.sin()
        }
        None => 0.0,
    };
    Ok(params.a + pow * (params.b + osc))
}

/// Log-values on a scaled time axis, with the fitting window `(t1, t2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    t: Vec<f64>,
    y: Vec<f64>,
    t1: f64,
    t2: f64,
}

impl Sample {
    /// Window bounds default to the first and last time.
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self, LpplsError> {
        let (t1, t2) = match (t.first(), t.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(LpplsError::InvalidSample("empty sample".into())),
        };
        Self::with_window(t, y, t1, t2)
    }

    pub fn with_window(t: Vec<f64>, y: Vec<f64>, t1: f64, t2: f64) -> Result<Self, LpplsError> {
        if t.len() != y.len() {
            return Err(LpplsError::InvalidSample("time and value lengths differ".into()));
        }
        if t.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(LpplsError::InvalidSample("non-finite entry".into()));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LpplsError::InvalidSample("times not strictly increasing".into()));
        }
        if !(t1 < t2) {
            return Err(LpplsError::InvalidSample("window start must precede window end".into()));
        }
        Ok(Self { t, y, t1, t2 })
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn window(&self) -> (f64, f64) {
        (self.t1, self.t2)
    }

    /// Points with `t1 <= t <= t2`, windowed to `(t1, t2)`.
    pub fn restrict(&self, t1: f64, t2: f64) -> Result<Self, LpplsError> {
        let lo = self.t.partition_point(|&v| v < t1);
        let hi = self.t.partition_point(|&v| v <= t2);
        Self::with_window(self.t[lo..hi].to_vec(), self.y[lo..hi].to_vec(), t1, t2)
    }

    /// Adds `k` to every value.
    pub fn shifted(&self, k: f64) -> Self {
        Self { y: self.y.iter().map(|v| v + k).collect(), ..self.clone() }
    }

    /// Identifies the data a fit was computed on.
    pub fn fingerprint(&self) -> u64 {
        crate::hash::fnv1a(self.t.iter().chain(&self.y).chain([&self.t1, &self.t2]).map(|v| v.to_bits()))
    }
}

/// Calendar window `(T1, T2)` with the time scaling `T1 -> 0`, `peak -> 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitWindow {
    pub t1: Instant,
    pub t2: Instant,
    pub peak: Instant,
}

impl FitWindow {
    pub fn new(t1: Instant, t2: Instant, peak: Instant) -> Result<Self, LpplsError> {
        if !(t1 < t2 && t1 < peak) {
            return Err(LpplsError::InvalidSample("window requires t1 < t2 and t1 < peak".into()));
        }
        Ok(Self { t1, t2, peak })
    }

    /// Window ending at `fraction` of the bubble length `(t1, peak)`.
    pub fn fraction_of(t1: Instant, peak: Instant, fraction: f64) -> Result<Self, LpplsError> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(LpplsError::InvalidParameter(format!("fraction {fraction} outside (0, 1]")));
        }
        let t2 = t1 + ((peak - t1) as f64 * fraction).round() as Instant;
        Self::new(t1, t2, peak)
    }

    pub fn scale(&self, t: Instant) -> f64 {
        (t - self.t1) as f64 / (self.peak - self.t1) as f64
    }

    /// Inverse of [`FitWindow::scale`], in fractional epoch seconds.
    pub fn unscale(&self, s: f64) -> f64 {
        self.t1 as f64 + s * (self.peak - self.t1) as f64
    }

    /// Log-values of the observations inside the window on the scaled axis.
    pub fn sample(&self, series: &TimeSeries) -> Result<Sample, LpplsError> {
        let (t, y): (Vec<f64>, Vec<f64>) = series
            .iter()
            .filter(|(t, _)| *t >= self.t1 && *t <= self.t2)
            .map(|(t, v)| (self.scale(t), v.ln()))
            .unzip();
        Sample::with_window(t, y, 0.0, self.scale(self.t2))
    }
}

/// Maximum-likelihood fit over the nonlinear grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: Model,
    pub params: LpplsParams,
    pub loglik: f64,
    /// Residual sum of squares of the (unwhitened) residuals.
    pub rss: f64,
    pub rss_whitened: f64,
    pub n: usize,
    pub residuals: Vec<f64>,
    pub innovations: Vec<f64>,
    /// `(t_c, max loglik over the remaining parameters)` per grid value.
    pub profile_tc: Vec<(f64, f64)>,
    pub window: (f64, f64),
    pub phi_at_boundary: bool,
    pub fingerprint: u64,
}

impl FitResult {
    /// Residual standard error `RSS / (n - p)`.
    pub fn residual_error(&self, dof_penalty: usize) -> f64 {
        self.rss / (self.n.saturating_sub(dof_penalty).max(1)) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_when_b_c_d_vanish() {
        let p = LpplsParams { a: 1.3, b: 0.0, c_cos: 0.0, d_sin: 0.0, m: 0.5, omega: Some(8.0), t_c: 1.1, phi: 0.0 };
        for t in [-3.0, 0.0, 0.5, 1.09] {
            assert_eq!(lppls_value(&p, t).unwrap(), 1.3);
        }
    }

    #[test]
    fn approaches_a_at_singularity() {
        let p = LpplsParams { a: 2.0, b: -1.5, c_cos: 0.1, d_sin: 0.1, m: 0.4, omega: Some(9.0), t_c: 1.0, phi: 0.5 };
        let v = lppls_value(&p, 1.0 - 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-4);
        assert_eq!(lppls_value(&p, 1.0), Err(LpplsError::AtOrBeyondSingularity { t: 1.0, t_c: 1.0 }));
    }

    #[test]
    fn averaged_bubble_parameters_at_origin() {
        // Oracle: (1.03)^0.23 * (-1.97 - 0.020 cos(10.79 ln 1.03) + 0.013 sin(10.79 ln 1.03)) + 2
        // evaluated with 50-digit arithmetic (mpmath) before implementation.
        let p = LpplsParams { a: 2.00, b: -1.97, c_cos: -0.020, d_sin: 0.013, m: 0.23, omega: Some(10.79), t_c: 1.03, phi: 0.87 };
        let v = lppls_value(&p, 0.0).unwrap();
        assert!((v - ORACLE_AT_ZERO).abs() < 1e-14, "{v}");
    }

    const ORACLE_AT_ZERO: f64 = 0.001_544_436_892_757_927_1;

    #[test]
    fn fraction_window() {
        let w = FitWindow::fraction_of(0, 1000, 0.95).unwrap();
        assert_eq!(w.t2, 950);
        assert_eq!(w.scale(950), 0.95);
        assert_eq!(w.unscale(1.0), 1000.0);
        assert!(FitWindow::fraction_of(0, 1000, 1.5).is_err());
        assert!(FitWindow::fraction_of(0, 1000, 0.0).is_err());
    }

    #[test]
    fn sample_validation() {
        assert!(Sample::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(Sample::new(vec![], vec![]).is_err());
        let s = Sample::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 3.0]).unwrap();
        let r = s.restrict(0.2, 1.0).unwrap();
        assert_eq!(r.times(), &[0.5, 1.0]);
        assert_eq!(r.window(), (0.2, 1.0));
        assert_ne!(s.fingerprint(), s.shifted(1e-12).fingerprint());
    }
}
