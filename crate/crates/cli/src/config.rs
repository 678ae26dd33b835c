//! Run configuration: built-in defaults, then the TOML file, then flags.

use std::path::{Path, PathBuf};

use bubblediag::bubblescale::BubblePreset;
use bubblediag::lppls::GridSpec;
use bubblediag::metcalfe::SupportLine;
use bubblediag::timeseries::{format_instant, parse_instant, Instant};
use bubblediag::windowscan::{BootstrapMode, Resampling};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    #[default]
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// Which series the LPPLS machinery runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    #[default]
    Mmv,
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GridChoice {
    #[default]
    Default,
    Coarse,
}

impl GridChoice {
    pub fn spec(self) -> GridSpec {
        match self {
            GridChoice::Default => GridSpec::default(),
            GridChoice::Coarse => GridSpec::coarse(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub preset: Option<String>,
    pub quiet: Option<bool>,
    #[serde(default)]
    pub metcalfe: MetcalfeBlock,
    #[serde(default)]
    pub usergrowth: UserGrowthBlock,
    #[serde(default)]
    pub lppls: LpplsBlock,
    #[serde(default)]
    pub scan: ScanBlock,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::usage("FileNotFound", format!("config file {} not found", path.display())),
            _ => CliError::io(format!("{}: {e}", path.display())),
        })?;
        toml::from_str(&text).map_err(|e| CliError::usage("InvalidConfig", format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct MetcalfeBlock {
    /// Support line presets to predict caps with (repeatable).
    #[arg(long = "support")]
    #[serde(default)]
    pub supports: Vec<String>,
    /// Support line the MMV ratio is taken against.
    #[arg(long)]
    pub mmv_support: Option<String>,
    #[arg(long)]
    pub rolling_window_days: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct UserGrowthBlock {
    /// Fit start (ISO-8601); overrides the preset.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub end: Option<String>,
    /// Last year projected on January 1.
    #[arg(long)]
    pub project_to: Option<i32>,
}

#[derive(Debug, Clone, Default, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct LpplsBlock {
    /// Share of the bubble length covered by the fit window, in (0, 1].
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Bubble start; the window starts here.
    #[arg(long)]
    pub t1: Option<String>,
    /// Explicit window end; overrides the fraction.
    #[arg(long)]
    pub t2: Option<String>,
    /// Bubble peak, used with the fraction.
    #[arg(long)]
    pub peak: Option<String>,
    #[arg(long, value_enum)]
    pub series: Option<SeriesKind>,
    /// Support line dividing the cap for the MMV series.
    #[arg(long)]
    pub support: Option<String>,
    #[arg(long, value_enum)]
    pub grid: Option<GridChoice>,
    /// Confidence level of the t_c interval.
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    /// Start of the scan's time axis (scaled time 0).
    #[arg(long)]
    pub t0: Option<String>,
    /// Common window end (scaled time 1).
    #[arg(long)]
    pub t2: Option<String>,
    /// Candidate window starts (repeatable).
    #[arg(long = "t1")]
    pub t1_candidates: Option<Vec<String>>,
    /// Bootstrap replicates per window, at least 1000.
    #[arg(long)]
    pub n_bootstrap: Option<usize>,
    /// Extra parameters charged to the LPPLS residual error.
    #[arg(long)]
    pub dof_penalty: Option<usize>,
    /// Bootstrap quantile a window must stay below to be accepted.
    #[arg(long)]
    pub acceptance_level: Option<f64>,
    #[arg(long, value_enum)]
    pub series: Option<SeriesKind>,
    /// Support line dividing the cap for the MMV series.
    #[arg(long)]
    pub support: Option<String>,
    #[arg(long, value_enum)]
    pub grid: Option<GridChoice>,
    /// window-local or global innovation pool.
    #[arg(long, value_parser = parse_resampling)]
    pub resampling: Option<Resampling>,
    /// zero-trend or refit.
    #[arg(long, value_parser = parse_bootstrap)]
    pub bootstrap: Option<BootstrapMode>,
}

fn parse_resampling(s: &str) -> Result<Resampling, String> {
    match s {
        "window-local" => Ok(Resampling::WindowLocal),
        "global" => Ok(Resampling::Global),
        _ => Err("expected window-local or global".into()),
    }
}

fn parse_bootstrap(s: &str) -> Result<BootstrapMode, String> {
    match s {
        "zero-trend" => Ok(BootstrapMode::ZeroTrend),
        "refit" => Ok(BootstrapMode::Refit),
        _ => Err("expected zero-trend or refit".into()),
    }
}

/// Settings shared by every command after merging.
#[derive(Debug, Clone, Serialize)]
pub struct Common {
    pub data_dir: PathBuf,
    /// Output location and verbosity stay out of reports so they do not
    /// change with where or how loudly a run writes.
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    pub format: Format,
    pub preset: Option<String>,
    #[serde(skip)]
    pub quiet: bool,
}

pub fn date_arg(field: &str, value: &str) -> Result<Instant, CliError> {
    parse_instant(value).ok_or_else(|| CliError::usage("InvalidConfig", format!("{field}: cannot parse {value:?} as an ISO-8601 date")))
}

pub fn support_arg(name: &str) -> Result<SupportLine, CliError> {
    SupportLine::preset(name).map_err(CliError::from)
}

pub fn bubble_preset(name: &str) -> Result<BubblePreset, CliError> {
    BubblePreset::by_name(name).map_err(CliError::from)
}

#[derive(Debug, Clone, Serialize)]
pub struct MetcalfeSettings {
    pub supports: Vec<String>,
    pub mmv_support: String,
    pub rolling_window_days: i64,
}

impl MetcalfeSettings {
    pub fn resolve(flags: MetcalfeBlock, file: MetcalfeBlock) -> Result<Self, CliError> {
        let mut supports = if flags.supports.is_empty() { file.supports } else { flags.supports };
        if supports.is_empty() {
            supports = SupportLine::PRESETS.iter().map(|(n, _)| n.to_string()).collect();
        }
        let s = Self {
            supports,
            mmv_support: flags.mmv_support.or(file.mmv_support).unwrap_or_else(|| "metcalfe-support".into()),
            rolling_window_days: flags.rolling_window_days.or(file.rolling_window_days).unwrap_or(365),
        };
        for name in s.supports.iter().chain([&s.mmv_support]) {
            support_arg(name)?;
        }
        if s.rolling_window_days < 2 {
            return Err(CliError::usage("InvalidConfig", "rolling_window_days must be at least 2"));
        }
        Ok(s)
    }
}

/// Named fit windows for the user-growth curve.
pub const GROWTH_PRESETS: [(&str, (i32, u32, u32), (i32, u32, u32)); 2] =
    [("2012-start", (2012, 1, 1), (2018, 2, 26)), ("2010-start", (2010, 10, 24), (2018, 2, 26))];

#[derive(Debug, Clone, Serialize)]
pub struct UserGrowthSettings {
    pub start: String,
    pub end: String,
    pub project_to: i32,
    #[serde(skip)]
    pub window: (Instant, Instant),
}

impl UserGrowthSettings {
    pub fn resolve(preset: Option<&str>, flags: UserGrowthBlock, file: UserGrowthBlock) -> Result<Self, CliError> {
        let name = preset.unwrap_or("2012-start");
        let (_, s, e) = GROWTH_PRESETS
            .iter()
            .find(|(n, _, _)| *n == name)
            .ok_or_else(|| CliError::usage("UnknownPreset", format!("unknown user-growth preset {name:?}")))?;
        let start = match flags.start.or(file.start) {
            Some(v) => date_arg("start", &v)?,
            None => bubblediag::timeseries::date(s.0, s.1, s.2),
        };
        let end = match flags.end.or(file.end) {
            Some(v) => date_arg("end", &v)?,
            None => bubblediag::timeseries::date(e.0, e.1, e.2),
        };
        if start >= end {
            return Err(CliError::usage("InvalidConfig", "user-growth start must precede end"));
        }
        Ok(Self {
            start: format_instant(start),
            end: format_instant(end),
            project_to: flags.project_to.or(file.project_to).unwrap_or(2023),
            window: (start, end),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LpplsSettings {
    pub bubble: Option<u8>,
    pub t1: String,
    pub t2: String,
    pub peak: String,
    pub fraction: f64,
    pub series: SeriesKind,
    pub support: String,
    pub grid: GridChoice,
    pub level: f64,
    #[serde(skip)]
    pub instants: (Instant, Instant, Instant),
}

impl LpplsSettings {
    pub fn resolve(preset: Option<&str>, flags: LpplsBlock, file: LpplsBlock) -> Result<Self, CliError> {
        let fraction = flags.fraction.or(file.fraction).unwrap_or(1.0);
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(CliError::usage("InvalidFraction", format!("fraction {fraction} outside (0, 1]")));
        }
        let level = flags.level.or(file.level).unwrap_or(0.95);
        if !(level > 0.0 && level < 1.0) {
            return Err(CliError::usage("InvalidConfig", format!("level {level} outside (0, 1)")));
        }
        let bubble = preset.map(bubble_preset).transpose()?;
        let pick = |field: &str, flag: Option<String>, from_file: Option<String>, fallback: Option<Instant>| -> Result<Option<Instant>, CliError> {
            match flag.or(from_file) {
                Some(v) => date_arg(field, &v).map(Some),
                None => Ok(fallback),
            }
        };
        let t1 = pick("t1", flags.t1, file.t1, bubble.map(|b| b.start))?;
        let peak = pick("peak", flags.peak, file.peak, bubble.map(|b| b.end))?;
        let (Some(t1), Some(peak)) = (t1, peak) else {
            return Err(CliError::usage("InvalidConfig", "lppls needs --preset bubbleN or both --t1 and --peak"));
        };
        if t1 >= peak {
            return Err(CliError::usage("InvalidConfig", "t1 must precede the peak"));
        }
        let t2 = match pick("t2", flags.t2, file.t2, None)? {
            Some(t) => t,
            None => t1 + ((peak - t1) as f64 * fraction).round() as Instant,
        };
        if t2 <= t1 {
            return Err(CliError::usage("InvalidConfig", "t2 must follow t1"));
        }
        let support = flags.support.or(file.support).unwrap_or_else(|| "metcalfe-support".into());
        support_arg(&support)?;
        Ok(Self {
            bubble: bubble.map(|b| b.id),
            t1: format_instant(t1),
            t2: format_instant(t2),
            peak: format_instant(peak),
            fraction,
            series: flags.series.or(file.series).unwrap_or_default(),
            support,
            grid: flags.grid.or(file.grid).unwrap_or_default(),
            level,
            instants: (t1, t2, peak),
        })
    }
}

/// The synthetic scan scenario: LPPLS trend plus AR(1) noise with four
/// candidate window starts.
pub const SCAN_PRESET: &str = "fig5";

#[derive(Debug, Clone, Serialize)]
pub struct ScanSettings {
    pub synthetic: bool,
    pub series: SeriesKind,
    pub support: String,
    pub grid: GridChoice,
    pub t0: Option<String>,
    pub t2: Option<String>,
    pub t1_candidates: Option<Vec<String>>,
    pub n_bootstrap: Option<usize>,
    pub dof_penalty: Option<usize>,
    pub acceptance_level: Option<f64>,
    pub resampling: Option<Resampling>,
    pub bootstrap: Option<BootstrapMode>,
}

impl ScanSettings {
    pub fn resolve(preset: Option<&str>, flags: ScanBlock, file: ScanBlock) -> Result<Self, CliError> {
        let synthetic = match preset {
            None => false,
            Some(SCAN_PRESET) => true,
            Some(other) => return Err(CliError::usage("UnknownPreset", format!("unknown scan preset {other:?}"))),
        };
        let support = flags.support.or(file.support).unwrap_or_else(|| "metcalfe-support".into());
        support_arg(&support)?;
        Ok(Self {
            synthetic,
            series: flags.series.or(file.series).unwrap_or_default(),
            support,
            grid: flags.grid.or(file.grid).unwrap_or_default(),
            t0: flags.t0.or(file.t0),
            t2: flags.t2.or(file.t2),
            t1_candidates: flags.t1_candidates.or(file.t1_candidates),
            n_bootstrap: flags.n_bootstrap.or(file.n_bootstrap),
            dof_penalty: flags.dof_penalty.or(file.dof_penalty),
            acceptance_level: flags.acceptance_level.or(file.acceptance_level),
            resampling: flags.resampling.or(file.resampling),
            bootstrap: flags.bootstrap.or(file.bootstrap),
        })
    }
}
