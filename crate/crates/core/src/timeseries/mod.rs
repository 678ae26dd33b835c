//! Timestamped positive-valued series and the operations that prepare them
//! for regression: CSV ingestion, supply alignment, resampling and
//! log-space local regression smoothing.

mod csvio;
mod loess;

use std::path::PathBuf;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csvio::{load_series, read_series, write_series, write_series_to, ColumnSpec};
pub use loess::{candidate_fits, local_regression, smooth, smoother_trace, SelectionMode, SmoothingSpec, SmoothFit};

/// Seconds since the Unix epoch, UTC.
pub type Instant = i64;

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const SECONDS_PER_HOUR: i64 = 3_600;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeSeriesError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("parse error at row {row}, column `{column}`")]
    ParseError { row: usize, column: String },
    #[error("non-positive or non-finite value at row {row}")]
    NonPositiveValue { row: usize },
    #[error("timestamps not strictly increasing at row {row}")]
    NonMonotoneTimestamps { row: usize },
    #[error("series needs at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("timestamps and values differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series do not overlap in time")]
    EmptyOverlap,
    #[error("resampling leaves fewer than 2 observations")]
    EmptySeries,
    #[error("interval must be positive")]
    InvalidInterval,
    #[error("smoothing needs more than {df} points, got {n}")]
    TooFewPoints { n: usize, df: f64 },
    #[error("no span achieves {target} equivalent degrees of freedom (closest {achieved:.3})")]
    SpanSearchFailed { target: f64, achieved: f64 },
    #[error("invalid smoothing spec: {0}")]
    InvalidSpec(String),
}

impl TimeSeriesError {
    /// Stable variant name, used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::FileNotFound(_) => "FileNotFound",
            Self::Io(_) => "Io",
            Self::MissingColumn(_) => "MissingColumn",
            Self::ParseError { .. } => "ParseError",
            Self::NonPositiveValue { .. } => "NonPositiveValue",
            Self::NonMonotoneTimestamps { .. } => "NonMonotoneTimestamps",
            Self::TooShort(_) => "TooShort",
            Self::LengthMismatch(..) => "LengthMismatch",
            Self::EmptyOverlap => "EmptyOverlap",
            Self::EmptySeries => "EmptySeries",
            Self::InvalidInterval => "InvalidInterval",
            Self::TooFewPoints { .. } => "TooFewPoints",
            Self::SpanSearchFailed { .. } => "SpanSearchFailed",
            Self::InvalidSpec(_) => "InvalidSpec",
        }
    }
}

/// Strictly increasing timestamps with finite positive values.
///
/// Construction validates every invariant, so any `TimeSeries` in hand is
/// safe to log-transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries")]
pub struct TimeSeries {
    timestamps: Vec<Instant>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSeries {
    timestamps: Vec<Instant>,
    values: Vec<f64>,
}

impl TryFrom<RawSeries> for TimeSeries {
    type Error = TimeSeriesError;

    fn try_from(raw: RawSeries) -> Result<Self, Self::Error> {
        TimeSeries::new(raw.timestamps, raw.values)
    }
}

impl TimeSeries {
    /// Errors carry 1-based row positions.
    pub fn new(timestamps: Vec<Instant>, values: Vec<f64>) -> Result<Self, TimeSeriesError> {
        if timestamps.len() != values.len() {
            return Err(TimeSeriesError::LengthMismatch(timestamps.len(), values.len()));
        }
        for (i, v) in values.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(TimeSeriesError::NonPositiveValue { row: i + 1 });
            }
        }
        for i in 1..timestamps.len() {
            if timestamps[i] <= timestamps[i - 1] {
                return Err(TimeSeriesError::NonMonotoneTimestamps { row: i + 1 });
            }
        }
        if timestamps.len() < 2 {
            return Err(TimeSeriesError::TooShort(timestamps.len()));
        }
        Ok(Self { timestamps, values })
    }

    pub fn timestamps(&self) -> &[Instant] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start(&self) -> Instant {
        self.timestamps[0]
    }

    pub fn end(&self) -> Instant {
        self.timestamps[self.timestamps.len() - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Instant, f64)> + '_ {
        self.timestamps.iter().copied().zip(self.values.iter().copied())
    }

    pub fn ln_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.ln()).collect()
    }

    /// Applies `f` to every value; the result must still satisfy the invariants.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self, TimeSeriesError> {
        Self::new(self.timestamps.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Observations with `start <= t <= end`.
    pub fn between(&self, start: Instant, end: Instant) -> Result<Self, TimeSeriesError> {
        let lo = self.timestamps.partition_point(|&t| t < start);
        let hi = self.timestamps.partition_point(|&t| t <= end);
        if hi <= lo {
            return Err(TimeSeriesError::EmptyOverlap);
        }
        Self::new(self.timestamps[lo..hi].to_vec(), self.values[lo..hi].to_vec())
    }

    /// Index of the last observation at or before `t`.
    pub fn index_at_or_before(&self, t: Instant) -> Option<usize> {
        self.timestamps.partition_point(|&s| s <= t).checked_sub(1)
    }

    /// Index of the observation closest to `t` (earlier one on ties).
    pub fn nearest_index(&self, t: Instant) -> usize {
        let i = self.timestamps.partition_point(|&s| s < t);
        if i == 0 {
            return 0;
        }
        if i == self.len() {
            return self.len() - 1;
        }
        if t - self.timestamps[i - 1] <= self.timestamps[i] - t {
            i - 1
        } else {
            i
        }
    }

    /// Value at `t` carried forward from the most recent observation.
    pub fn value_at_or_before(&self, t: Instant) -> Option<f64> {
        self.index_at_or_before(t).map(|i| self.values[i])
    }
}

/// Parses `YYYY-MM-DD` (pinned to 00:00 UTC) or `YYYY-MM-DDTHH:MM:SSZ`.
pub fn parse_instant(s: &str) -> Option<Instant> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%SZ") {
        return Some(dt.and_utc().timestamp());
    }
    DateTime::parse_from_rfc3339(s).ok().map(|dt| dt.timestamp())
}

/// Inverse of [`parse_instant`]; midnight instants print as plain dates.
pub fn format_instant(t: Instant) -> String {
    let dt = Utc.timestamp_opt(t, 0).single().expect("timestamp in chrono range");
    if t.rem_euclid(SECONDS_PER_DAY) == 0 {
        dt.format("%Y-%m-%d").to_string()
    } else {
        dt.format("%Y-%m-%dT%H:%M:%SZ").to_string()
    }
}

/// `YYYY-MM-DD` at 00:00 UTC. Panics on an invalid calendar date, so only
/// use it with literals.
pub fn date(year: i32, month: u32, day: u32) -> Instant {
    NaiveDate::from_ymd_opt(year, month, day)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid calendar date")
        .and_utc()
        .timestamp()
}

/// Market capitalization as price times circulating supply.
///
/// Supply is carried forward (step interpolation) to each price timestamp.
/// Price observations before the first supply point, or more than one supply
/// sampling interval after the last, fall outside the overlap.
pub fn market_cap(price: &TimeSeries, supply: &TimeSeries) -> Result<TimeSeries, TimeSeriesError> {
    let n = supply.len();
    let step = supply.timestamps[n - 1] - supply.timestamps[n - 2];
    let horizon = supply.end() + step;
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (t, p) in price.iter() {
        if t >= horizon {
            break;
        }
        if let Some(s) = supply.value_at_or_before(t) {
            ts.push(t);
            vs.push(p * s);
        }
    }
    if ts.len() < 2 {
        return Err(TimeSeriesError::EmptyOverlap);
    }
    TimeSeries::new(ts, vs)
}

/// One observation per epoch-aligned boundary `k * interval`, taken as the
/// last observation at or before the boundary.
pub fn resample(series: &TimeSeries, interval: i64) -> Result<TimeSeries, TimeSeriesError> {
    if interval <= 0 {
        return Err(TimeSeriesError::InvalidInterval);
    }
    let first = series.start().div_euclid(interval) + i64::from(series.start().rem_euclid(interval) != 0);
    let last = series.end().div_euclid(interval);
    if last - first + 1 < 2 {
        return Err(TimeSeriesError::EmptySeries);
    }
    let mut ts = Vec::with_capacity((last - first + 1) as usize);
    let mut vs = Vec::with_capacity(ts.capacity());
    let mut idx = 0usize;
    for k in first..=last {
        let boundary = k * interval;
        while idx + 1 < series.len() && series.timestamps[idx + 1] <= boundary {
            idx += 1;
        }
        ts.push(boundary);
        vs.push(series.values[idx]);
    }
    TimeSeries::new(ts, vs)
}

/// Pairs of values on timestamps present in both series.
pub fn intersect(a: &TimeSeries, b: &TimeSeries) -> (Vec<Instant>, Vec<f64>, Vec<f64>) {
    let (mut i, mut j) = (0, 0);
    let (mut ts, mut va, mut vb) = (Vec::new(), Vec::new(), Vec::new());
    while i < a.len() && j < b.len() {
        match a.timestamps[i].cmp(&b.timestamps[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                ts.push(a.timestamps[i]);
                va.push(a.values[i]);
                vb.push(b.values[j]);
                i += 1;
                j += 1;
            }
        }
    }
    (ts, va, vb)
}

/// Carries `source` forward onto the timestamps of `target` inside the
/// overlap, returning aligned (timestamps, target values, source values).
pub fn align_forward(target: &TimeSeries, source: &TimeSeries) -> (Vec<Instant>, Vec<f64>, Vec<f64>) {
    let n = source.len();
    let horizon = source.end() + (source.timestamps[n - 1] - source.timestamps[n - 2]);
    let (mut ts, mut vt, mut vs) = (Vec::new(), Vec::new(), Vec::new());
    for (t, v) in target.iter() {
        if t >= horizon {
            break;
        }
        if let Some(s) = source.value_at_or_before(t) {
            ts.push(t);
            vt.push(v);
            vs.push(s);
        }
    }
    (ts, vt, vs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hourly(n: usize, start: Instant) -> TimeSeries {
        let ts = (0..n as i64).map(|k| start + k * SECONDS_PER_HOUR).collect();
        let vs = (0..n).map(|k| 1.0 + k as f64).collect();
        TimeSeries::new(ts, vs).unwrap()
    }

    #[test]
    fn rejects_invariant_violations() {
        assert_eq!(
            TimeSeries::new(vec![1, 2, 3], vec![1.0, 0.0, 2.0]),
            Err(TimeSeriesError::NonPositiveValue { row: 2 })
        );
        assert_eq!(
            TimeSeries::new(vec![1, 3, 3], vec![1.0, 1.0, 2.0]),
            Err(TimeSeriesError::NonMonotoneTimestamps { row: 3 })
        );
        assert_eq!(TimeSeries::new(vec![1], vec![1.0]), Err(TimeSeriesError::TooShort(1)));
        assert!(TimeSeries::new(vec![1, 2], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn instants_round_trip() {
        assert_eq!(parse_instant("2017-12-18"), Some(date(2017, 12, 18)));
        assert_eq!(parse_instant("1970-01-01T01:00:00Z"), Some(3600));
        assert_eq!(format_instant(3600), "1970-01-01T01:00:00Z");
        assert_eq!(format_instant(date(2013, 4, 11)), "2013-04-11");
        assert_eq!(parse_instant("2013-13-01"), None);
    }

    #[test]
    fn market_cap_pointwise_product() {
        let p = TimeSeries::new(vec![0, 10], vec![10.0, 11.0]).unwrap();
        let s = TimeSeries::new(vec![0, 10], vec![100.0, 100.0]).unwrap();
        let cap = market_cap(&p, &s).unwrap();
        assert_eq!(cap.values(), &[1000.0, 1100.0]);
    }

    #[test]
    fn market_cap_carries_daily_supply_forward() {
        let d0 = date(2017, 1, 1);
        let price = hourly(48, d0);
        let supply = TimeSeries::new(vec![d0, d0 + SECONDS_PER_DAY], vec![2.0, 3.0]).unwrap();
        let cap = market_cap(&price, &supply).unwrap();
        assert_eq!(cap.len(), 48);
        assert_eq!(cap.values()[23], 24.0 * 2.0);
        assert_eq!(cap.values()[24], 25.0 * 3.0);
    }

    #[test]
    fn market_cap_without_overlap() {
        let price = hourly(5, 0);
        let supply = TimeSeries::new(vec![1_000_000, 1_000_100], vec![1.0, 1.0]).unwrap();
        assert_eq!(market_cap(&price, &supply), Err(TimeSeriesError::EmptyOverlap));
    }

    #[test]
    fn resample_hourly_to_three_hours() {
        let s = hourly(30, 0);
        let r = resample(&s, 3 * SECONDS_PER_HOUR).unwrap();
        assert_eq!(r.len(), 10);
        for (k, (t, v)) in r.iter().enumerate() {
            assert_eq!(t, 3 * k as i64 * SECONDS_PER_HOUR);
            assert_eq!(v, s.values()[3 * k]);
        }
    }

    #[test]
    fn resample_longer_than_span() {
        let s = hourly(5, 1);
        assert_eq!(resample(&s, SECONDS_PER_DAY), Err(TimeSeriesError::EmptySeries));
        assert_eq!(resample(&s, 0), Err(TimeSeriesError::InvalidInterval));
    }

    proptest! {
        #[test]
        fn resample_is_idempotent(
            gaps in prop::collection::vec(1i64..5000, 2..200),
            interval in 600i64..20_000,
        ) {
            let mut t = 0;
            let ts: Vec<i64> = gaps.iter().map(|g| { t += g; t }).collect();
            let vs = (0..ts.len()).map(|k| 1.0 + k as f64).collect();
            let s = TimeSeries::new(ts, vs).unwrap();
            if let Ok(once) = resample(&s, interval) {
                let twice = resample(&once, interval).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
