//! Historical inputs read from a data directory, and the MMV series the
//! bubble fits run on.
//!
//! Layout: `users.csv` plus either `cap.csv` or both `price.csv` and
//! `supply.csv`. Every file has a header with `date` and `value` columns.

use std::path::Path;

use crate::bubblescale::BubblePreset;
use crate::lppls::{FitWindow, LpplsError, Sample};
use crate::metcalfe::{mmv_ratio, MetcalfeError, MmvSeries, SupportLine};
use crate::timeseries::{load_series, market_cap, resample, smooth, ColumnSpec, SmoothingSpec, TimeSeries, TimeSeriesError, SECONDS_PER_HOUR};

pub const USERS_FILE: &str = "users.csv";
pub const CAP_FILE: &str = "cap.csv";
pub const PRICE_FILE: &str = "price.csv";
pub const SUPPLY_FILE: &str = "supply.csv";

/// Equivalent degrees of freedom of the user smoother behind the MMV ratio.
pub const USER_SMOOTHING_DF: f64 = 5.0;
/// Sampling interval of MMV series handed to the LPPLS fits.
pub const MMV_INTERVAL: i64 = 3 * SECONDS_PER_HOUR;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub users: TimeSeries,
    pub cap: TimeSeries,
}

impl Dataset {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, TimeSeriesError> {
        let dir = dir.as_ref();
        let cols = ColumnSpec::default();
        let users = load_series(dir.join(USERS_FILE), &cols)?;
        let cap_path = dir.join(CAP_FILE);
        let cap = if cap_path.exists() {
            load_series(cap_path, &cols)?
        } else {
            let price = load_series(dir.join(PRICE_FILE), &cols)?;
            let supply = load_series(dir.join(SUPPLY_FILE), &cols)?;
            market_cap(&price, &supply)?
        };
        Ok(Self { users, cap })
    }

    /// Market cap over `support`, with users smoothed first. Sub-daily caps
    /// are thinned to one value every three hours.
    pub fn mmv(&self, support: &SupportLine) -> Result<MmvSeries, MetcalfeError> {
        let smoothed = smooth(&self.users, &SmoothingSpec::fixed(USER_SMOOTHING_DF, 2))?;
        let mut mmv = mmv_ratio(&self.cap, &smoothed, support)?;
        let ts = mmv.ratio.timestamps();
        let finest = ts.windows(2).map(|w| w[1] - w[0]).min().unwrap_or(MMV_INTERVAL);
        if finest < MMV_INTERVAL {
            mmv.ratio = resample(&mmv.ratio, MMV_INTERVAL)?;
        }
        Ok(mmv)
    }
}

/// Window ending at `fraction` of a preset bubble, and the log-series on it.
pub fn bubble_sample(series: &TimeSeries, preset: &BubblePreset, fraction: f64) -> Result<(FitWindow, Sample), LpplsError> {
    let window = FitWindow::fraction_of(preset.start, preset.end, fraction)?;
    Ok((window, window.sample(series)?))
}
