use serde::{Deserialize, Serialize};

use super::LpplsError;

/// Inclusive arithmetic range `lo, lo + step, ...` up to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl ParamRange {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    pub fn values(&self) -> Vec<f64> {
        if !(self.step > 0.0) || self.hi < self.lo {
            return Vec::new();
        }
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiMode {
    /// Inner golden-section maximization over `(-0.999, 0.999)`.
    Profiled,
    Fixed(f64),
}

/// Grid of nonlinear parameters.
///
/// Unless `tc_values` is set, the critical time is searched on `tc_points`
/// equidistant values in `(T2, T2 + tc_horizon * (T2 - T1)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: ParamRange,
    pub omega: ParamRange,
    pub tc_horizon: f64,
    pub tc_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tc_values: Option<Vec<f64>>,
    pub phi: PhiMode,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            m: ParamRange::new(0.1, 0.99, 0.02),
            omega: ParamRange::new(3.0, 15.0, 0.1),
            tc_horizon: 0.5,
            tc_points: 100,
            tc_values: None,
            phi: PhiMode::Profiled,
        }
    }
}

pub(crate) const PHI_BOUND: f64 = 0.999;

impl GridSpec {
    pub fn tc_grid(&self, t1: f64, t2: f64) -> Vec<f64> {
        if let Some(v) = &self.tc_values {
            return v.clone();
        }
        let len = t2 - t1;
        (1..=self.tc_points)
            .map(|k| t2 + self.tc_horizon * len * k as f64 / self.tc_points as f64)
            .collect()
    }

    pub fn validate(&self, t1: f64, t2: f64) -> Result<(), LpplsError> {
        let bad = |msg: &str| Err(LpplsError::InvalidGrid(msg.into()));
        let m = self.m.values();
        if m.is_empty() || self.omega.values().is_empty() {
            return bad("empty m or omega range");
        }
        if m.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return bad("m values must lie in (0, 1)");
        }
        if self.omega.lo <= 0.0 {
            return bad("omega must be positive");
        }
        let tc = self.tc_grid(t1, t2);
        if tc.is_empty() {
            return bad("empty t_c grid");
        }
        if tc.iter().any(|&v| !(v > t2)) {
            return bad("t_c values must exceed the window end");
        }
        if tc.windows(2).any(|w| w[1] <= w[0]) {
            return bad("t_c values must increase");
        }
        if let PhiMode::Fixed(phi) = self.phi {
            if !(phi.abs() < 1.0) {
                return bad("fixed phi must satisfy |phi| < 1");
            }
        }
        Ok(())
    }

    /// Smaller grid for quick runs and tests: m step 0.05, ω step 0.5, 40 t_c values.
    pub fn coarse() -> Self {
        Self {
            m: ParamRange::new(0.1, 0.95, 0.05),
            omega: ParamRange::new(3.0, 15.0, 0.5),
            tc_points: 40,
            ..Self::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_sizes() {
        let g = GridSpec::default();
        let m = g.m.values();
        assert_eq!(m.len(), 45);
        assert!((m[0] - 0.1).abs() < 1e-12 && (m[44] - 0.98).abs() < 1e-12);
        let w = g.omega.values();
        assert_eq!(w.len(), 121);
        assert!((w[120] - 15.0).abs() < 1e-9);
        let tc = g.tc_grid(0.0, 1.0);
        assert_eq!(tc.len(), 100);
        assert!((tc[0] - 1.005).abs() < 1e-12 && (tc[99] - 1.5).abs() < 1e-12);
        assert!((tc[9] - 1.05).abs() < 1e-12);
        g.validate(0.0, 1.0).unwrap();
    }

    #[test]
    fn rejects_bad_grids() {
        let mut g = GridSpec::default();
        g.tc_values = Some(vec![0.9, 1.2]);
        assert!(g.validate(0.0, 1.0).is_err());
        let mut g = GridSpec::default();
        g.m = ParamRange::new(0.5, 1.2, 0.1);
        assert!(g.validate(0.0, 1.0).is_err());
        let mut g = GridSpec::default();
        g.phi = PhiMode::Fixed(1.0);
        assert!(g.validate(0.0, 1.0).is_err());
    }
}
