use bubblediag::bubblescale::BubbleError;
use bubblediag::lppls::LpplsError;
use bubblediag::metcalfe::MetcalfeError;
use bubblediag::timeseries::TimeSeriesError;
use bubblediag::usergrowth::UserGrowthError;
use bubblediag::windowscan::ScanError;
use serde::Serialize;
use serde_json::Value;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_RESULT: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Module errors that mean "the analysis ran but has no answer" rather than
/// "the input was wrong".
const ANALYTIC: [&str; 6] = ["NoWindowAccepted", "NonConvergence", "DegenerateProfile", "NegativeLR", "SingularDesign", "AllGridPointsSingular"];

#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: String,
    pub message: String,
    pub exit_status: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Value>,
}

impl CliError {
    pub fn usage(kind: &str, message: impl Into<String>) -> Self {
        Self { error: kind.into(), message: message.into(), exit_status: EXIT_USAGE, diagnostics: None }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { error: "Io".into(), message: message.into(), exit_status: EXIT_IO, diagnostics: None }
    }

    fn from_kind(kind: &str, message: String) -> Self {
        let exit_status = if ANALYTIC.contains(&kind) {
            EXIT_NO_RESULT
        } else if kind == "Io" {
            EXIT_IO
        } else {
            EXIT_USAGE
        };
        Self { error: kind.into(), message, exit_status, diagnostics: None }
    }
}

macro_rules! from_module_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::from_kind(e.kind(), e.to_string())
            }
        }
    )*};
}

from_module_error!(TimeSeriesError, MetcalfeError, UserGrowthError, LpplsError, BubbleError, ScanError);
