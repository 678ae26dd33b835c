use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{FitResult, LpplsError, Model};

/// Profile-likelihood confidence set for `t_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcInterval {
    pub level: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// The lower bound sits on the first grid value.
    pub lower_censored: bool,
    /// The upper bound sits on the last grid value.
    pub upper_censored: bool,
    /// Every accepted grid value; may be disconnected.
    pub accepted: Vec<f64>,
}

impl TcInterval {
    pub fn contains(&self, t_c: f64) -> bool {
        self.lower <= t_c && t_c <= self.upper
    }

    pub fn is_censored(&self) -> bool {
        self.lower_censored || self.upper_censored
    }

    pub fn is_connected(&self, grid: &[f64]) -> bool {
        let lo = grid.partition_point(|&v| v < self.lower);
        let hi = grid.partition_point(|&v| v <= self.upper);
        hi - lo == self.accepted.len()
    }
}

/// Half the `level` quantile of a chi-square with one degree of freedom.
pub fn profile_threshold(level: f64) -> f64 {
    ChiSquared::new(1.0).expect("valid dof").inverse_cdf(level) / 2.0
}

/// Level set `{t_c : max_loglik - profile(t_c) <= χ²₁(level) / 2}` of a
/// `(t_c, loglik)` profile.
pub fn profile_interval(profile: &[(f64, f64)], level: f64) -> Result<TcInterval, LpplsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(LpplsError::InvalidParameter(format!("level {level} outside (0, 1)")));
    }
    let (estimate, max) = profile
        .iter()
        .filter(|p| p.1.is_finite())
        .fold(None, |acc: Option<(f64, f64)>, &(tc, ll)| match acc {
            Some((_, best)) if best >= ll => acc,
            _ => Some((tc, ll)),
        })
        .ok_or(LpplsError::EmptyProfile)?;
    let cut = max - profile_threshold(level);
    let accepted: Vec<f64> = profile.iter().filter(|p| p.1.is_finite() && p.1 >= cut).map(|p| p.0).collect();
    if profile.len() > 1 && accepted.len() == profile.len() {
        return Err(LpplsError::DegenerateProfile);
    }
    let first = profile.iter().position(|p| p.1.is_finite() && p.1 >= cut).expect("maximum is accepted");
    let last = profile.iter().rposition(|p| p.1.is_finite() && p.1 >= cut).expect("maximum is accepted");
    Ok(TcInterval {
        level,
        estimate,
        lower: first.checked_sub(1).map_or(profile[first].0, |i| crossing(profile[i], profile[first], cut)),
        upper: profile.get(last + 1).map_or(profile[last].0, |&out| crossing(out, profile[last], cut)),
        lower_censored: profile.len() > 1 && first == 0,
        upper_censored: profile.len() > 1 && last == profile.len() - 1,
        accepted,
    })
}

/// Where the straight line from a rejected grid point to its accepted
/// neighbour meets the cut. Falls back to the accepted point when the
/// rejected side is infeasible.
fn crossing(outside: (f64, f64), inside: (f64, f64), cut: f64) -> f64 {
    if !outside.1.is_finite() {
        return inside.0;
    }
    let w = (inside.1 - cut) / (inside.1 - outside.1);
    inside.0 + w * (outside.0 - inside.0)
}

pub fn profile_ci_tc(result: &FitResult, level: f64) -> Result<TcInterval, LpplsError> {
    profile_interval(&result.profile_tc, level)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// LPPLS against the nested power law; the statistic is referred to a
/// chi-square with 3 degrees of freedom (c, d, ω).
pub fn likelihood_ratio_test(lppls: &FitResult, power_law: &FitResult) -> Result<LrTest, LpplsError> {
    if lppls.model != Model::Lppls || power_law.model != Model::PowerLaw {
        return Err(LpplsError::InvalidParameter("expected an LPPLS fit and a power-law fit".into()));
    }
    if lppls.fingerprint != power_law.fingerprint || lppls.n != power_law.n {
        return Err(LpplsError::NotSameData);
    }
    let statistic = 2.0 * (lppls.loglik - power_law.loglik);
    if statistic < -1e-8 {
        return Err(LpplsError::NegativeLr(statistic));
    }
    let statistic = statistic.max(0.0);
    let dof = 3;
    let p_value = ChiSquared::new(dof as f64).expect("valid dof").sf(statistic);
    Ok(LrTest { statistic, dof, p_value })
}
