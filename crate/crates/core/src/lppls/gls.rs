use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LpplsError;

pub(crate) const MIN_POINTS: usize = 8;

/// Closed-form GLS solution at one point of the nonlinear parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSolution {
    pub a: f64,
    pub b: f64,
    pub c_cos: f64,
    pub d_sin: f64,
    /// Sum of squared innovations (whitened residuals).
    pub rss_whitened: f64,
    /// Sum of squared raw residuals.
    pub rss: f64,
    pub loglik: f64,
    pub residuals: Vec<f64>,
    pub innovations: Vec<f64>,
    /// Points excluded because `(t_c - t)^m` underflowed.
    pub dropped: usize,
}

/// Exact Gaussian AR(1) log-likelihood with the innovation variance at its
/// maximum `rss_whitened / n`.
pub fn ar1_loglik(rss_whitened: f64, n: usize, phi: f64) -> f64 {
    let n = n as f64;
    let sigma2 = (rss_whitened / n).max(f64::MIN_POSITIVE);
    -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) + 0.5 * (1.0 - phi * phi).ln()
}

/// Prais-Winsten transform: first entry scaled by `sqrt(1 - φ²)`, the rest
/// differenced by `φ`.
pub(crate) fn whiten(v: &[f64], phi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    if let Some(&first) = v.first() {
        out.push((1.0 - phi * phi).sqrt() * first);
    }
    out.extend(v.windows(2).map(|w| w[1] - phi * w[0]));
    out
}

/// Solves the conditionally linear coefficients `(a, b, c, d)` by GLS under
/// AR(1) errors. With `omega = None` the oscillating columns are omitted
/// (power law) and `c_cos = d_sin = 0`.
pub fn gls_linear_solve(
    t: &[f64],
    y: &[f64],
    m: f64,
    omega: Option<f64>,
    t_c: f64,
    phi: f64,
) -> Result<LinearSolution, LpplsError> {
    if t.len() != y.len() {
        return Err(LpplsError::InvalidSample("time and value lengths differ".into()));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(LpplsError::InvalidParameter(format!("m = {m} must be positive")));
    }
    if !(phi.abs() < 1.0) {
        return Err(LpplsError::InvalidParameter(format!("|phi| = {} must be below 1", phi.abs())));
    }
    if let Some(&t_max) = t.iter().max_by(|a, b| a.total_cmp(b)) {
        if t_max >= t_c {
            return Err(LpplsError::AtOrBeyondSingularity { t: t_max, t_c });
        }
    }
    let k = if omega.is_some() { 4 } else { 2 };
    let mut rows: Vec<[f64; 4]> = Vec::with_capacity(t.len());
    let mut ys = Vec::with_capacity(t.len());
    let mut dropped = 0;
    for (&ti, &yi) in t.iter().zip(y) {
        let dt = t_c - ti;
        let pow = dt.powf(m);
        if !(pow > 0.0 && pow.is_finite()) {
            dropped += 1;
            continue;
        }
        let row = match omega {
            Some(w) => {
                let phase = w * dt.ln();
                [1.0, pow, pow * phase.cos(), pow * phase.sin()]
            }
            None => [1.0, pow, 0.0, 0.0],
        };
        rows.push(row);
        ys.push(yi);
    }
    let n = rows.len();
    if n < MIN_POINTS.max(k + 1) {
        return Err(LpplsError::WindowTooSmall { n, min: MIN_POINTS.max(k + 1) });
    }

    let scale = (1.0 - phi * phi).sqrt();
    let design = DMatrix::from_fn(n, k, |i, j| {
        if i == 0 {
            scale * rows[0][j]
        } else {
            rows[i][j] - phi * rows[i - 1][j]
        }
    });
    let yw = DVector::from_vec(whiten(&ys, phi));
    let col_norms: Vec<f64> = (0..k).map(|j| design.column(j).norm()).collect();

    let qr = design.qr();
    let r = qr.r();
    for j in 0..k {
        if !(r[(j, j)].abs() > 1e-10 * col_norms[j]) {
            return Err(LpplsError::SingularDesign);
        }
    }
    let qty = qr.q().transpose() * &yw;
    let beta = r.solve_upper_triangular(&qty).ok_or(LpplsError::SingularDesign)?;

    let residuals: Vec<f64> = rows
        .iter()
        .zip(&ys)
        .map(|(row, yi)| yi - (0..k).map(|j| row[j] * beta[j]).sum::<f64>())
        .collect();
    let innovations = whiten(&residuals, phi);
    let rss_whitened = innovations.iter().map(|e| e * e).sum();
    let rss = residuals.iter().map(|e| e * e).sum();
    let (c_cos, d_sin) = if k == 4 { (beta[2], beta[3]) } else { (0.0, 0.0) };
    Ok(LinearSolution {
        a: beta[0],
        b: beta[1],
        c_cos,
        d_sin,
        rss_whitened,
        rss,
        loglik: ar1_loglik(rss_whitened, n, phi),
        residuals,
        innovations,
        dropped,
    })
}
