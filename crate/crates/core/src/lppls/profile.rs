//! Exhaustive grid profiling.
//!
//! For a fixed design `X` the whitened normal matrix under AR(1) errors is a
//! quadratic polynomial in `φ`:
//!
//! ```text
//! Xw'Xw = S - φ (C + C') + φ² (S - x₁x₁' - xₙxₙ')
//! ```
//!
//! where `S = Σ xᵢxᵢ'` and `C = Σ xᵢxᵢ₋₁'`, so every `φ` evaluation is a small
//! Cholesky factorization once the lag-0 and lag-1 moments are accumulated.
//! The augmented matrix carries `y` as its last column, and the last squared
//! pivot is the whitened residual sum of squares. The best `(m, ω, φ)` of each
//! `t_c` slice is then re-solved exactly with [`gls_linear_solve`].

use rayon::prelude::*;

use super::gls::{ar1_loglik, gls_linear_solve, MIN_POINTS};
use super::grid::PHI_BOUND;
use super::{FitResult, GridSpec, LpplsError, LpplsParams, Model, PhiMode, Sample};

const MIN_FIT_POINTS: usize = 20;
const PIVOT_TOLERANCE: f64 = 1e-13;
const PHI_COARSE: [f64; 11] = [-0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.8, 0.9, 0.95, 0.98, 0.995];
const GOLDEN_ITERATIONS: usize = 20;

#[derive(Clone, Copy)]
struct Moments<const D: usize> {
    s: [[f64; D]; D],
    q: [[f64; D]; D],
    r: [[f64; D]; D],
    n: usize,
}

impl<const D: usize> Moments<D> {
    #[inline(always)]
    fn accumulate(n: usize, row: impl Fn(usize) -> [f64; D]) -> Self {
        let mut s = [[0.0; D]; D];
        let mut c = [[0.0; D]; D];
        let first = row(0);
        let mut prev = first;
        for j in 0..D {
            for k in j..D {
                s[j][k] += prev[j] * prev[k];
            }
        }
        for i in 1..n {
            let x = row(i);
            for j in 0..D {
                for k in j..D {
                    s[j][k] += x[j] * x[k];
                }
                for k in 0..D {
                    c[j][k] += x[j] * prev[k];
                }
            }
            prev = x;
        }
        let last = prev;
        let mut q = [[0.0; D]; D];
        let mut r = [[0.0; D]; D];
        for j in 0..D {
            for k in j..D {
                s[k][j] = s[j][k];
            }
        }
        for j in 0..D {
            for k in 0..D {
                q[j][k] = c[j][k] + c[k][j];
                r[j][k] = s[j][k] - first[j] * first[k] - last[j] * last[k];
            }
        }
        Self { s, q, r, n }
    }

    /// Whitened RSS at `phi`, or `None` when the regressors are collinear.
    #[inline]
    fn rss(&self, phi: f64) -> Option<f64> {
        let phi2 = phi * phi;
        let mut l = [[0.0; D]; D];
        for j in 0..D {
            let mjj = self.s[j][j] - phi * self.q[j][j] + phi2 * self.r[j][j];
            let mut d = mjj;
            for k in 0..j {
                d -= l[j][k] * l[j][k];
            }
            if j == D - 1 {
                return Some(d.max(0.0));
            }
            if !(d > PIVOT_TOLERANCE * mjj) {
                return None;
            }
            let ljj = d.sqrt();
            l[j][j] = ljj;
            for i in j + 1..D {
                let mut v = self.s[i][j] - phi * self.q[i][j] + phi2 * self.r[i][j];
                for k in 0..j {
                    v -= l[i][k] * l[j][k];
                }
                l[i][j] = v / ljj;
            }
        }
        None
    }

    fn loglik(&self, phi: f64) -> Option<f64> {
        self.rss(phi).map(|rss| ar1_loglik(rss, self.n, phi))
    }

    fn best_phi(&self, mode: PhiMode) -> Option<(f64, f64)> {
        match mode {
            PhiMode::Fixed(phi) => self.loglik(phi).map(|ll| (phi, ll)),
            PhiMode::Profiled => maximize_phi(|phi| self.loglik(phi)),
        }
    }
}

/// Coarse scan followed by golden-section refinement inside the best bracket.
pub(crate) fn maximize_phi(f: impl Fn(f64) -> Option<f64>) -> Option<(f64, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &phi) in PHI_COARSE.iter().enumerate() {
        if let Some(ll) = f(phi) {
            if best.map_or(true, |(_, b)| ll > b) {
                best = Some((k, ll));
            }
        }
    }
    let (k, ll0) = best?;
    let lo = if k == 0 { -PHI_BOUND } else { PHI_COARSE[k - 1] };
    let hi = if k + 1 == PHI_COARSE.len() { PHI_BOUND } else { PHI_COARSE[k + 1] };
    let mut best = (PHI_COARSE[k], ll0);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let eval = |x: f64| f(x).unwrap_or(f64::NEG_INFINITY);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = eval(x2);
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx > best.1 {
            best = (x, fx);
        }
    }
    Some(best)
}

#[derive(Debug, Clone, Copy)]
struct SliceBest {
    loglik: f64,
    m: f64,
    omega: Option<f64>,
    phi: f64,
}

fn consider(best: &mut Option<SliceBest>, cand: SliceBest) {
    // strict improvement keeps the smallest m, then smallest ω, on ties
    if best.map_or(true, |b| cand.loglik > b.loglik) {
        *best = Some(cand);
    }
}

fn screen_power_law(t: &[f64], y: &[f64], tc: f64, m_vals: &[f64], mode: PhiMode) -> Option<SliceBest> {
    let n = t.len();
    let logs: Vec<f64> = t.iter().map(|&ti| (tc - ti).ln()).collect();
    let mut best = None;
    let mut f = vec![0.0; n];
    for &m in m_vals {
        for (fi, li) in f.iter_mut().zip(&logs) {
            *fi = (m * li).exp();
        }
        let mom = Moments::<3>::accumulate(n, |i| [1.0, f[i], y[i]]);
        if let Some((phi, loglik)) = mom.best_phi(mode) {
            consider(&mut best, SliceBest { loglik, m, omega: None, phi });
        }
    }
    best
}

/// `cos`/`sin(ω ln(tc - t))` and the lag products needed by the moments.
struct TrigTable {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    cos2: Vec<f64>,
    cos_sin: Vec<f64>,
    cos_lag: Vec<f64>,
    sin_lag: Vec<f64>,
    cross_lag: Vec<f64>,
}

impl TrigTable {
    fn new(logs: &[f64], omega_vals: &[f64]) -> Self {
        let n = logs.len();
        let nw = omega_vals.len();
        let mut cos = vec![0.0; nw * n];
        let mut sin = vec![0.0; nw * n];
        let uniform = nw > 1
            && omega_vals.windows(2).all(|w| ((w[1] - w[0]) - (omega_vals[1] - omega_vals[0])).abs() < 1e-12);
        for (i, &l) in logs.iter().enumerate() {
            if uniform {
                let step = omega_vals[1] - omega_vals[0];
                let (sd, cd) = (step * l).sin_cos();
                let (mut s, mut c) = (0.0, 1.0);
                for w in 0..nw {
                    if w % 16 == 0 {
                        // re-anchor the rotation to bound accumulated rounding
                        (s, c) = (omega_vals[w] * l).sin_cos();
                    }
                    cos[w * n + i] = c;
                    sin[w * n + i] = s;
                    (s, c) = (s * cd + c * sd, c * cd - s * sd);
                }
            } else {
                for (w, &omega) in omega_vals.iter().enumerate() {
                    let (s, c) = (omega * l).sin_cos();
                    cos[w * n + i] = c;
                    sin[w * n + i] = s;
                }
            }
        }
        let cos2 = cos.iter().map(|c| c * c).collect();
        let cos_sin = cos.iter().zip(&sin).map(|(c, s)| c * s).collect();
        let mut cos_lag = vec![0.0; nw * n];
        let mut sin_lag = vec![0.0; nw * n];
        let mut cross_lag = vec![0.0; nw * n];
        for w in 0..nw {
            for i in 1..n {
                let (k, p) = (w * n + i, w * n + i - 1);
                cos_lag[k] = cos[k] * cos[p];
                sin_lag[k] = sin[k] * sin[p];
                cross_lag[k] = cos[k] * sin[p] + sin[k] * cos[p];
            }
        }
        Self { n, cos, sin, cos2, cos_sin, cos_lag, sin_lag, cross_lag }
    }

    fn row<'a>(&self, v: &'a [f64], w: usize) -> &'a [f64] {
        &v[w * self.n..(w + 1) * self.n]
    }
}

/// Products of `f = (tc - t)^m` and `y` shared by every ω at one `m`.
struct PowerTerms {
    f: Vec<f64>,
    f2: Vec<f64>,
    fy: Vec<f64>,
    /// `f_i f_{i-1}`, zero at `i = 0`.
    f_lag: Vec<f64>,
    /// `f_i f_{i-1} + f_{i+1} f_i`.
    f_lag_sum: Vec<f64>,
    /// `f_i (y_{i-1} + y_{i+1})`.
    fy_lag_sum: Vec<f64>,
    base: Moments<3>,
}

impl PowerTerms {
    fn new(logs: &[f64], y: &[f64], m: f64) -> Self {
        let n = logs.len();
        let f: Vec<f64> = logs.iter().map(|l| (m * l).exp()).collect();
        let f2 = f.iter().map(|v| v * v).collect();
        let fy = f.iter().zip(y).map(|(a, b)| a * b).collect();
        let mut f_lag = vec![0.0; n];
        for i in 1..n {
            f_lag[i] = f[i] * f[i - 1];
        }
        let f_lag_sum = (0..n).map(|i| f_lag[i] + if i + 1 < n { f_lag[i + 1] } else { 0.0 }).collect();
        let fy_lag_sum = (0..n)
            .map(|i| {
                let prev = if i > 0 { y[i - 1] } else { 0.0 };
                let next = if i + 1 < n { y[i + 1] } else { 0.0 };
                f[i] * (prev + next)
            })
            .collect();
        let base = Moments::<3>::accumulate(n, |i| [1.0, f[i], y[i]]);
        Self { f, f2, fy, f_lag, f_lag_sum, fy_lag_sum, base }
    }

    /// Moments of `[1, f, f cos, f sin, y]` at ω index `w`.
    #[inline]
    fn moments(&self, trig: &TrigTable, w: usize, y: &[f64]) -> Moments<5> {
        let (c, s) = (trig.row(&trig.cos, w), trig.row(&trig.sin, w));
        let (c2, cs) = (trig.row(&trig.cos2, w), trig.row(&trig.cos_sin, w));
        let (cl, sl, xl) = (trig.row(&trig.cos_lag, w), trig.row(&trig.sin_lag, w), trig.row(&trig.cross_lag, w));
        let mut acc = [0.0; 15];
        for i in 0..trig.n {
            let (f, f2, fy) = (self.f[i], self.f2[i], self.fy[i]);
            acc[0] += f * c[i];
            acc[1] += f * s[i];
            acc[2] += f2 * c[i];
            acc[3] += f2 * s[i];
            acc[4] += fy * c[i];
            acc[5] += fy * s[i];
            acc[6] += f2 * c2[i];
            acc[7] += f2 * cs[i];
            acc[8] += self.f_lag_sum[i] * c[i];
            acc[9] += self.f_lag_sum[i] * s[i];
            acc[10] += self.f_lag[i] * cl[i];
            acc[11] += self.f_lag[i] * sl[i];
            acc[12] += self.f_lag[i] * xl[i];
            acc[13] += self.fy_lag_sum[i] * c[i];
            acc[14] += self.fy_lag_sum[i] * s[i];
        }
        let b = &self.base;
        const U: [usize; 3] = [0, 1, 4];
        let mut m = Moments::<5> { s: [[0.0; 5]; 5], q: [[0.0; 5]; 5], r: [[0.0; 5]; 5], n: b.n };
        for (a, &ua) in U.iter().enumerate() {
            for (bb, &ub) in U.iter().enumerate() {
                m.s[ua][ub] = b.s[a][bb];
                m.q[ua][ub] = b.q[a][bb];
            }
        }
        let last = trig.n - 1;
        let (g0, h0) = (self.f[0] * c[0], self.f[0] * s[0]);
        let (gn, hn) = (self.f[last] * c[last], self.f[last] * s[last]);
        let sym = |mat: &mut [[f64; 5]; 5], j: usize, k: usize, v: f64| {
            mat[j][k] = v;
            mat[k][j] = v;
        };
        sym(&mut m.s, 2, 0, acc[0]);
        sym(&mut m.s, 3, 0, acc[1]);
        sym(&mut m.s, 2, 1, acc[2]);
        sym(&mut m.s, 3, 1, acc[3]);
        sym(&mut m.s, 2, 4, acc[4]);
        sym(&mut m.s, 3, 4, acc[5]);
        sym(&mut m.s, 2, 2, acc[6]);
        sym(&mut m.s, 3, 3, b.s[1][1] - acc[6]);
        sym(&mut m.s, 2, 3, acc[7]);
        sym(&mut m.q, 2, 0, 2.0 * acc[0] - g0 - gn);
        sym(&mut m.q, 3, 0, 2.0 * acc[1] - h0 - hn);
        sym(&mut m.q, 2, 1, acc[8]);
        sym(&mut m.q, 3, 1, acc[9]);
        sym(&mut m.q, 2, 2, 2.0 * acc[10]);
        sym(&mut m.q, 3, 3, 2.0 * acc[11]);
        sym(&mut m.q, 2, 3, acc[12]);
        sym(&mut m.q, 2, 4, acc[13]);
        sym(&mut m.q, 3, 4, acc[14]);
        let first = [1.0, self.f[0], g0, h0, y[0]];
        let end = [1.0, self.f[last], gn, hn, y[last]];
        for j in 0..5 {
            for k in 0..5 {
                m.r[j][k] = m.s[j][k] - first[j] * first[k] - end[j] * end[k];
            }
        }
        m
    }
}

fn screen_lppls(t: &[f64], y: &[f64], tc: f64, m_vals: &[f64], omega_vals: &[f64], mode: PhiMode) -> Option<SliceBest> {
    let logs: Vec<f64> = t.iter().map(|&ti| (tc - ti).ln()).collect();
    let trig = TrigTable::new(&logs, omega_vals);
    let mut best = None;
    for &m in m_vals {
        let terms = PowerTerms::new(&logs, y, m);
        for (w, &omega) in omega_vals.iter().enumerate() {
            if let Some((phi, loglik)) = terms.moments(&trig, w, y).best_phi(mode) {
                consider(&mut best, SliceBest { loglik, m, omega: Some(omega), phi });
            }
        }
    }
    best
}

/// Profile-likelihood fit of `model` over `grid`.
pub fn fit_model(sample: &Sample, grid: &GridSpec, model: Model) -> Result<FitResult, LpplsError> {
    let (t1, t2) = sample.window();
    grid.validate(t1, t2)?;
    let n = sample.len();
    if n < MIN_FIT_POINTS.max(MIN_POINTS) {
        return Err(LpplsError::WindowTooSmall { n, min: MIN_FIT_POINTS });
    }
    if let Some(&last) = sample.times().last() {
        if last > t2 {
            return Err(LpplsError::InvalidSample("data extends beyond the window end".into()));
        }
    }
    let t = sample.times();
    let y_mean = sample.values().iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = sample.values().iter().map(|v| v - y_mean).collect();
    let tc_vals = grid.tc_grid(t1, t2);
    let m_vals = grid.m.values();
    let omega_vals = grid.omega.values();

    let slices: Vec<Option<(f64, SliceBest, super::LinearSolution)>> = tc_vals
        .par_iter()
        .map(|&tc| {
            let screened = match model {
                Model::Lppls => screen_lppls(t, &yc, tc, &m_vals, &omega_vals, grid.phi),
                Model::PowerLaw => screen_power_law(t, &yc, tc, &m_vals, grid.phi),
            }?;
            let exact = gls_linear_solve(t, sample.values(), screened.m, screened.omega, tc, screened.phi).ok()?;
            Some((tc, SliceBest { loglik: exact.loglik, ..screened }, exact))
        })
        .collect();

    let mut profile_tc = Vec::with_capacity(slices.len());
    let mut best: Option<&(f64, SliceBest, super::LinearSolution)> = None;
    for (tc, slot) in tc_vals.iter().zip(&slices) {
        match slot {
            Some(entry) => {
                profile_tc.push((*tc, entry.1.loglik));
                if best.map_or(true, |b| entry.1.loglik > b.1.loglik) {
                    best = Some(entry);
                }
            }
            None => profile_tc.push((*tc, f64::NEG_INFINITY)),
        }
    }
    let (tc, point, sol) = best.ok_or(LpplsError::AllGridPointsSingular)?;
    let params = LpplsParams {
        a: sol.a,
        b: sol.b,
        c_cos: sol.c_cos,
        d_sin: sol.d_sin,
        m: point.m,
        omega: point.omega,
        t_c: *tc,
        phi: point.phi,
    };
    Ok(FitResult {
        model,
        params,
        loglik: sol.loglik,
        rss: sol.rss,
        rss_whitened: sol.rss_whitened,
        n,
        residuals: sol.residuals.clone(),
        innovations: sol.innovations.clone(),
        profile_tc,
        window: (t1, t2),
        phi_at_boundary: point.phi.abs() >= PHI_BOUND - 1e-3,
        fingerprint: sample.fingerprint(),
    })
}

pub fn fit_lppls(sample: &Sample, grid: &GridSpec) -> Result<FitResult, LpplsError> {
    fit_model(sample, grid, Model::Lppls)
}

pub fn fit_power_law(sample: &Sample, grid: &GridSpec) -> Result<FitResult, LpplsError> {
    fit_model(sample, grid, Model::PowerLaw)
}
