//! Bubble summary statistics and rescaling of bubbles onto the unit square.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lppls::{LpplsError, Sample};
use crate::timeseries::{date, Instant, TimeSeries, SECONDS_PER_DAY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BubbleError {
    #[error("bubble window lies outside the series or is empty")]
    OutOfRange,
    #[error("peak value does not exceed the start value")]
    NonPositiveHeight,
    #[error("scaled bubbles must share one grid")]
    MismatchedGrids,
    #[error("need at least 10 scaled points, got {0}")]
    TooFewPoints(usize),
    #[error("unknown bubble preset `{0}`")]
    UnknownPreset(String),
}

impl BubbleError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::OutOfRange => "OutOfRange",
            Self::NonPositiveHeight => "NonPositiveHeight",
            Self::MismatchedGrids => "MismatchedGrids",
            Self::TooFewPoints(_) => "TooFewPoints",
            Self::UnknownPreset(_) => "UnknownPreset",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleRecord {
    pub start: Instant,
    /// Time of the peak value.
    pub end: Instant,
    pub days: i64,
    pub mcap_start: f64,
    pub mcap_peak: f64,
    pub growth_factor: f64,
    pub mean_daily_log_return: f64,
}

/// A bubble window as printed in the bubble statistics table, with the
/// table's rounded columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubblePreset {
    pub id: u8,
    pub start: Instant,
    pub end: Instant,
    pub days: i64,
    pub mcap_start: f64,
    pub mcap_peak: f64,
    pub growth: f64,
    pub mean_return: f64,
}

impl BubblePreset {
    pub fn all() -> [BubblePreset; 5] {
        let row = |id, s: (i32, u32, u32), e: (i32, u32, u32), days, m0, m1, growth, mean_return| BubblePreset {
            id,
            start: date(s.0, s.1, s.2),
            end: date(e.0, e.1, e.2),
            days,
            mcap_start: m0,
            mcap_peak: m1,
            growth,
            mean_return,
        };
        [
            row(1, (2012, 5, 25), (2012, 8, 18), 84, 4.65e7, 1.45e8, 3.1, 0.013),
            row(2, (2013, 1, 3), (2013, 4, 11), 98, 1.39e8, 2.84e9, 20.4, 0.031),
            row(3, (2013, 10, 7), (2013, 11, 23), 47, 1.45e9, 9.8e9, 6.8, 0.042),
            row(4, (2015, 6, 8), (2017, 12, 18), 924, 3.17e9, 3.27e11, 103.0, 0.005),
            row(5, (2017, 3, 31), (2017, 12, 18), 155, 1.69e10, 3.27e11, 21.0, 0.02),
        ]
    }

    /// `bubble1` to `bubble5`.
    pub fn by_name(name: &str) -> Result<BubblePreset, BubbleError> {
        Self::all()
            .into_iter()
            .find(|p| format!("bubble{}", p.id) == name)
            .ok_or_else(|| BubbleError::UnknownPreset(name.to_string()))
    }

    /// `ln(growth) / days` from the printed columns.
    pub fn implied_mean_return(&self) -> f64 {
        self.growth.ln() / self.days as f64
    }
}

/// Affine maps behind a [`ScaledBubble`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMap {
    pub start: Instant,
    pub peak: Instant,
    pub log_start: f64,
    pub log_peak: f64,
    /// The running maximum was reached before the requested end.
    pub peak_before_end: bool,
}

/// Bubble on `[0, 1] x [0, 1]`: scaled time against scaled log-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledBubble {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `None` for averages.
    pub map: Option<ScaleMap>,
}

impl ScaledBubble {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// LPPLS sample on the window `(0, 1)`.
    pub fn to_sample(&self) -> Result<Sample, LpplsError> {
        Sample::with_window(self.times.clone(), self.values.clone(), 0.0, 1.0)
    }
}

fn check_range(cap: &TimeSeries, start: Instant, end: Instant) -> Result<(), BubbleError> {
    if !(start < end && start >= cap.start() && end <= cap.end()) {
        return Err(BubbleError::OutOfRange);
    }
    Ok(())
}

/// Statistics from the observations nearest `start` and `end`.
pub fn bubble_stats(cap: &TimeSeries, start: Instant, end: Instant) -> Result<BubbleRecord, BubbleError> {
    check_range(cap, start, end)?;
    let v = cap.values();
    let mcap_start = v[cap.nearest_index(start)];
    let mcap_peak = v[cap.nearest_index(end)];
    let days = ((end - start) as f64 / SECONDS_PER_DAY as f64).round() as i64;
    let growth_factor = mcap_peak / mcap_start;
    Ok(BubbleRecord {
        start,
        end,
        days,
        mcap_start,
        mcap_peak,
        growth_factor,
        mean_daily_log_return: growth_factor.ln() / days.max(1) as f64,
    })
}

/// Linear interpolation of `ln(cap)` at `t` (epoch seconds) inside the
/// series span.
fn log_at(cap: &TimeSeries, t: f64) -> f64 {
    let ts = cap.timestamps();
    let v = cap.values();
    let i = ts.partition_point(|&s| s as f64 <= t);
    if i == 0 {
        return v[0].ln();
    }
    if ts[i - 1] as f64 == t || i == ts.len() {
        return v[i - 1].ln();
    }
    let w = (t - ts[i - 1] as f64) / (ts[i] - ts[i - 1]) as f64;
    (1.0 - w) * v[i - 1].ln() + w * v[i].ln()
}

/// Log-cap on `n_points` equidistant scaled times, mapped so that the start
/// goes to `(0, 0)` and the running maximum in `(start, end]` to `(1, 1)`.
pub fn rescale_bubble(cap: &TimeSeries, start: Instant, end: Instant, n_points: usize) -> Result<ScaledBubble, BubbleError> {
    check_range(cap, start, end)?;
    if n_points < 10 {
        return Err(BubbleError::TooFewPoints(n_points));
    }
    let ts = cap.timestamps();
    let v = cap.values();
    let lo = ts.partition_point(|&s| s <= start);
    let hi = ts.partition_point(|&s| s <= end);
    if hi <= lo {
        return Err(BubbleError::OutOfRange);
    }
    let mut peak_idx = lo;
    for i in lo..hi {
        // later index wins ties so a plateau peaks at its end
        if v[i] >= v[peak_idx] {
            peak_idx = i;
        }
    }
    let peak = ts[peak_idx];
    let log_start = log_at(cap, start as f64);
    let log_peak = v[peak_idx].ln();
    if !(log_peak > log_start) {
        return Err(BubbleError::NonPositiveHeight);
    }
    let span = (peak - start) as f64;
    let height = log_peak - log_start;
    let mut times = Vec::with_capacity(n_points);
    let mut values = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let s = k as f64 / (n_points - 1) as f64;
        let y = if k == 0 {
            0.0
        } else if k + 1 == n_points {
            1.0
        } else {
            (log_at(cap, start as f64 + s * span) - log_start) / height
        };
        times.push(s);
        values.push(y);
    }
    Ok(ScaledBubble {
        times,
        values,
        map: Some(ScaleMap { start, peak, log_start, log_peak, peak_before_end: peak < end }),
    })
}

/// Pointwise mean over bubbles sharing one scaled grid.
pub fn average_scaled_bubbles(bubbles: &[ScaledBubble]) -> Result<ScaledBubble, BubbleError> {
    let first = bubbles.first().ok_or(BubbleError::MismatchedGrids)?;
    if bubbles.iter().any(|b| b.times != first.times || b.values.len() != first.times.len()) {
        return Err(BubbleError::MismatchedGrids);
    }
    let k = bubbles.len() as f64;
    let values = (0..first.len()).map(|i| bubbles.iter().map(|b| b.values[i]).sum::<f64>() / k).collect();
    Ok(ScaledBubble { times: first.times.clone(), values, map: None })
}
