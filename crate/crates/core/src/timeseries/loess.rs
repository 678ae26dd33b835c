//! Local polynomial regression with tricube weights, parameterized by
//! equivalent degrees of freedom (the trace of the smoother matrix).

use serde::{Deserialize, Serialize};

use super::{TimeSeries, TimeSeriesError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Tune the span so the smoother trace equals `equivalent_df`.
    FixedDf,
    /// Pick the df minimizing AICc; `equivalent_df` caps the search.
    InformationCriterion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub equivalent_df: f64,
    pub polynomial_degree: usize,
    pub selection_mode: SelectionMode,
}

impl SmoothingSpec {
    pub fn fixed(equivalent_df: f64, polynomial_degree: usize) -> Self {
        Self { equivalent_df, polynomial_degree, selection_mode: SelectionMode::FixedDf }
    }

    pub fn aic(max_df: f64, polynomial_degree: usize) -> Self {
        Self { equivalent_df: max_df, polynomial_degree, selection_mode: SelectionMode::InformationCriterion }
    }

    pub fn validate(&self) -> Result<(), TimeSeriesError> {
        if !(1..=2).contains(&self.polynomial_degree) {
            return Err(TimeSeriesError::InvalidSpec("polynomial degree must be 1 or 2".into()));
        }
        if !(self.equivalent_df >= self.polynomial_degree as f64 + 1.0) {
            return Err(TimeSeriesError::InvalidSpec(format!(
                "equivalent df {} below degree + 1",
                self.equivalent_df
            )));
        }
        Ok(())
    }
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self::fixed(5.0, 2)
    }
}

/// A fitted smoother on generic `(x, y)` data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothFit {
    pub fitted: Vec<f64>,
    pub span: f64,
    pub trace: f64,
    pub rss: f64,
    pub aicc: f64,
}

const DF_TOLERANCE: f64 = 0.1;
const MAX_SPAN: f64 = 1e4;

/// Smooths `ln(values)` and maps back with `exp`, on the same timestamps.
pub fn smooth(series: &TimeSeries, spec: &SmoothingSpec) -> Result<TimeSeries, TimeSeriesError> {
    let x = unit_times(series);
    let fit = local_regression(&x, &series.ln_values(), spec)?;
    TimeSeries::new(series.timestamps().to_vec(), fit.fitted.iter().map(|v| v.exp()).collect())
}

/// Trace of the smoother matrix for the given span on the series' time axis.
pub fn smoother_trace(series: &TimeSeries, span: f64, degree: usize) -> f64 {
    let x = unit_times(series);
    let y = vec![0.0; x.len()];
    Loess::new(&x, degree).evaluate(&y, span).1
}

fn unit_times(series: &TimeSeries) -> Vec<f64> {
    let t0 = series.start() as f64;
    let len = (series.end() - series.start()) as f64;
    series.timestamps().iter().map(|&t| (t as f64 - t0) / len).collect()
}

/// Fits a local polynomial smoother to `(x, y)` with `x` sorted ascending.
pub fn local_regression(x: &[f64], y: &[f64], spec: &SmoothingSpec) -> Result<SmoothFit, TimeSeriesError> {
    spec.validate()?;
    let n = x.len();
    if (n as f64) <= spec.equivalent_df || n < spec.polynomial_degree + 3 {
        return Err(TimeSeriesError::TooFewPoints { n, df: spec.equivalent_df });
    }
    match spec.selection_mode {
        SelectionMode::FixedDf => {
            let xs = unit_scale(x);
            let loess = Loess::new(&xs, spec.polynomial_degree);
            let span = loess.span_for_df(spec.equivalent_df)?;
            Ok(loess.fit(y, span))
        }
        SelectionMode::InformationCriterion => candidate_fits(x, y, spec)?
            .into_iter()
            .reduce(|best, fit| if fit.aicc < best.aicc { fit } else { best })
            .ok_or(TimeSeriesError::SpanSearchFailed { target: spec.polynomial_degree as f64 + 1.5, achieved: f64::NAN }),
    }
}

/// Fits for every df on the information-criterion search path: from
/// `degree + 1.5` up to `spec.equivalent_df` in steps of 0.5. Lets callers
/// apply their own selection rule.
pub fn candidate_fits(x: &[f64], y: &[f64], spec: &SmoothingSpec) -> Result<Vec<SmoothFit>, TimeSeriesError> {
    spec.validate()?;
    let n = x.len();
    if (n as f64) <= spec.equivalent_df || n < spec.polynomial_degree + 3 {
        return Err(TimeSeriesError::TooFewPoints { n, df: spec.equivalent_df });
    }
    let xs = unit_scale(x);
    let loess = Loess::new(&xs, spec.polynomial_degree);
    let mut fits = Vec::new();
    let mut df = spec.polynomial_degree as f64 + 1.5;
    while df <= spec.equivalent_df + 1e-9 && df < n as f64 - 3.0 {
        if let Ok(span) = loess.span_for_df(df) {
            fits.push(loess.fit(y, span));
        }
        df += 0.5;
    }
    Ok(fits)
}

fn unit_scale(x: &[f64]) -> Vec<f64> {
    let (lo, hi) = (x[0], x[x.len() - 1]);
    x.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

struct Loess<'a> {
    x: &'a [f64],
    degree: usize,
}

impl<'a> Loess<'a> {
    fn new(x: &'a [f64], degree: usize) -> Self {
        Self { x, degree }
    }

    fn min_span(&self) -> f64 {
        (self.degree as f64 + 2.0) / self.x.len() as f64
    }

    fn span_for_df(&self, df: f64) -> Result<f64, TimeSeriesError> {
        let zeros = vec![0.0; self.x.len()];
        let trace = |s: f64| self.evaluate(&zeros, s).1;
        let (mut lo, mut hi) = (self.min_span().ln(), MAX_SPAN.ln());
        let (t_lo, t_hi) = (trace(lo.exp()), trace(hi.exp()));
        if df > t_lo {
            return Err(TimeSeriesError::SpanSearchFailed { target: df, achieved: t_lo });
        }
        if df < t_hi {
            return Err(TimeSeriesError::SpanSearchFailed { target: df, achieved: t_hi });
        }
        // trace decreases with span
        let mut best = (f64::INFINITY, lo);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let t = trace(mid.exp());
            if (t - df).abs() < best.0 {
                best = ((t - df).abs(), mid);
            }
            if (t - df).abs() < 1e-6 {
                break;
            }
            if t > df {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if best.0 > DF_TOLERANCE {
            let achieved = trace(best.1.exp());
            return Err(TimeSeriesError::SpanSearchFailed { target: df, achieved });
        }
        Ok(best.1.exp())
    }

    fn fit(&self, y: &[f64], span: f64) -> SmoothFit {
        let (fitted, trace) = self.evaluate(y, span);
        let n = y.len() as f64;
        let rss: f64 = fitted.iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum();
        let sigma2 = (rss / n).max(f64::MIN_POSITIVE);
        let aicc = sigma2.ln() + 1.0 + 2.0 * (trace + 1.0) / (n - trace - 2.0);
        SmoothFit { fitted, span, trace, rss, aicc }
    }

    /// Bandwidth at point `i`: the distance to the `span * n`-th nearest
    /// neighbour, interpolated between ranks so the trace varies continuously.
    fn bandwidth(&self, i: usize, span: f64) -> f64 {
        let x = self.x;
        let n = x.len();
        if span >= 1.0 {
            return span * (x[i] - x[0]).max(x[n - 1] - x[i]);
        }
        let rank = (span * n as f64).clamp(self.degree as f64 + 2.0, (n - 1) as f64);
        let q = rank.floor() as usize;
        let frac = rank - q as f64;
        // self is rank 1; after q expansions `prev` is rank q, `cur` rank q + 1
        let (mut l, mut r) = (i, i);
        let (mut prev, mut cur) = (0.0, 0.0);
        let mut floor = 0.0;
        for k in 0..q {
            let dl = if l > 0 { x[i] - x[l - 1] } else { f64::INFINITY };
            let dr = if r + 1 < n { x[r + 1] - x[i] } else { f64::INFINITY };
            prev = cur;
            cur = if dl <= dr {
                l -= 1;
                dl
            } else {
                r += 1;
                dr
            };
            if k + 2 == self.degree + 2 {
                floor = cur;
            }
        }
        // at least degree + 2 points (ties included) keep positive weight
        (prev + frac * (cur - prev)).max(floor * (1.0 + 1e-6))
    }

    /// Fitted values and smoother trace for one span.
    fn evaluate(&self, y: &[f64], span: f64) -> (Vec<f64>, f64) {
        let x = self.x;
        let n = x.len();
        let mut fitted = vec![0.0; n];
        let mut trace = 0.0;
        for i in 0..n {
            let h = self.bandwidth(i, span);
            let start = x.partition_point(|&v| v <= x[i] - h);
            let end = x.partition_point(|&v| v < x[i] + h);
            let mut s = [0.0f64; 5];
            let mut t = [0.0f64; 3];
            for j in start..end {
                let d = x[j] - x[i];
                let u = (d.abs() / h).min(1.0);
                let w = {
                    let c = 1.0 - u * u * u;
                    c * c * c
                };
                let mut p = w;
                for (k, sk) in s.iter_mut().enumerate().take(2 * self.degree + 1) {
                    *sk += p;
                    if k <= self.degree {
                        t[k] += p * y[j];
                    }
                    p *= d;
                }
            }
            let (value, lii) = if self.degree == 1 {
                let det = s[0] * s[2] - s[1] * s[1];
                ((s[2] * t[0] - s[1] * t[1]) / det, s[2] / det)
            } else {
                let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
                let inv = inverse3(&m);
                (inv[0][0] * t[0] + inv[0][1] * t[1] + inv[0][2] * t[2], inv[0][0])
            };
            fitted[i] = value;
            // self weight is 1 at zero distance
            trace += lii;
        }
        (fitted, trace)
    }
}

fn inverse3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let inv_det = 1.0 / det;
    [
        [c00 * inv_det, (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det, (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det],
        [c01 * inv_det, (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det, (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det],
        [c02 * inv_det, (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det, (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::SECONDS_PER_DAY;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn daily(values: Vec<f64>) -> TimeSeries {
        let ts = (0..values.len() as i64).map(|k| 1_500_000_000 + k * SECONDS_PER_DAY).collect();
        TimeSeries::new(ts, values).unwrap()
    }

    #[test]
    fn reproduces_log_linear_data() {
        let s = daily((0..300).map(|k| (3.0 + 0.01 * k as f64).exp()).collect());
        for spec in [SmoothingSpec::fixed(5.0, 1), SmoothingSpec::fixed(5.0, 2), SmoothingSpec::fixed(12.0, 2)] {
            let out = smooth(&s, &spec).unwrap();
            for (a, b) in out.values().iter().zip(s.values()) {
                assert!(((a - b) / b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn trace_matches_requested_df() {
        let s = daily((0..400).map(|k| 1.0 + k as f64).collect());
        let x = unit_times(&s);
        let loess = Loess::new(&x, 2);
        let span = loess.span_for_df(5.0).unwrap();
        let trace = smoother_trace(&s, span, 2);
        assert!((trace - 5.0).abs() <= 0.1, "trace {trace}");
    }

    #[test]
    fn trace_decreases_with_span() {
        let s = daily((0..200).map(|k| 1.0 + k as f64).collect());
        let mut prev = f64::INFINITY;
        for span in [0.05, 0.1, 0.2, 0.4, 0.8, 1.5, 10.0] {
            let t = smoother_trace(&s, span, 1);
            assert!(t < prev);
            prev = t;
        }
        assert!((prev - 2.0).abs() < 0.05);
    }

    #[test]
    fn smoothing_reduces_error_against_truth() {
        // Monte Carlo oracle: mean squared error to the known trend, raw vs smoothed
        let normal = Normal::new(0.0, 0.1).unwrap();
        let truth: Vec<f64> = (0..500).map(|k| 2.0 + (k as f64 / 80.0).sin()).collect();
        let (mut raw_mse, mut smooth_mse) = (0.0, 0.0);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy: Vec<f64> = truth.iter().map(|t| (t + normal.sample(&mut rng)).exp()).collect();
            let out = smooth(&daily(noisy.clone()), &SmoothingSpec::fixed(5.0, 2)).unwrap();
            for k in 0..truth.len() {
                raw_mse += (noisy[k].ln() - truth[k]).powi(2);
                smooth_mse += (out.values()[k].ln() - truth[k]).powi(2);
            }
        }
        assert!(smooth_mse < raw_mse / 5.0, "{smooth_mse} vs {raw_mse}");
    }

    #[test]
    fn preserves_positivity_and_rejects_short_input() {
        let s = daily(vec![1e-8, 5.0, 1e8, 2.0, 1e-3]);
        assert!(matches!(
            smooth(&s, &SmoothingSpec::fixed(5.0, 2)),
            Err(TimeSeriesError::TooFewPoints { .. })
        ));
        let s = daily((0..40).map(|k| if k % 2 == 0 { 1e-6 } else { 1e6 }).collect());
        let out = smooth(&s, &SmoothingSpec::fixed(5.0, 2)).unwrap();
        assert!(out.values().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn invalid_spec() {
        let s = daily((0..40).map(|k| 1.0 + k as f64).collect());
        assert!(matches!(smooth(&s, &SmoothingSpec::fixed(2.5, 2)), Err(TimeSeriesError::InvalidSpec(_))));
        assert!(matches!(smooth(&s, &SmoothingSpec::fixed(5.0, 3)), Err(TimeSeriesError::InvalidSpec(_))));
        // a global line has trace 2; any finite span sits strictly above it
        assert!(matches!(
            smooth(&s, &SmoothingSpec::fixed(2.0, 1)),
            Err(TimeSeriesError::SpanSearchFailed { .. })
        ));
    }

    #[test]
    fn information_criterion_prefers_low_df_for_linear_trend() {
        let normal = Normal::new(0.0, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..200).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.01 * v + normal.sample(&mut rng)).collect();
        let fit = local_regression(&x, &y, &SmoothingSpec::aic(15.0, 1)).unwrap();
        assert!(fit.trace < 5.0, "chose df {}", fit.trace);
    }
}
