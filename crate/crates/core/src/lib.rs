pub mod bubblescale;
pub mod dataset;
mod hash;
pub mod lppls;
pub mod metcalfe;
pub mod simulate;
pub mod timeseries;
pub mod usergrowth;
pub mod windowscan;
