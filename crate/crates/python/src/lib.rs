//! Python bindings. Results that are plain records come back as dicts; fits
//! that feed further calls stay wrapped so they can be passed back in.

use bubblediag::bubblescale::{bubble_stats as core_bubble_stats, BubblePreset};
use bubblediag::lppls::{self, FitResult as CoreFit, GridSpec};
use bubblediag::metcalfe::{self, MetcalfeFit as CoreMetcalfe, SupportLine};
use bubblediag::simulate::{lppls_sample, substream};
use bubblediag::timeseries::{self, ColumnSpec, Instant, SmoothingSpec, TimeSeries as CoreSeries};
use bubblediag::usergrowth::{self, EcoGrowthFit as CoreGrowth};
use bubblediag::windowscan::{self, ScanConfig, ScanResult as CoreScan};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(bubblediag, BubbleDiagError, PyValueError, "Library error; `kind` names the failure.");

trait Kind: std::fmt::Display {
    fn kind_name(&self) -> &'static str;
}

macro_rules! kinds {
    ($($t:ty),*) => {$(
        impl Kind for $t {
            fn kind_name(&self) -> &'static str {
                self.kind()
            }
        }
    )*};
}

kinds!(
    timeseries::TimeSeriesError,
    metcalfe::MetcalfeError,
    usergrowth::UserGrowthError,
    lppls::LpplsError,
    windowscan::ScanError,
    bubblediag::bubblescale::BubbleError
);

fn raise(e: impl Kind) -> PyErr {
    let kind = e.kind_name();
    let err = BubbleDiagError::new_err(format!("{kind}: {e}"));
    Python::attach(|py| {
        // best effort: the message already carries the kind
        let _ = err.value(py).setattr("kind", kind);
    });
    err
}

fn invalid(kind: &str, msg: impl Into<String>) -> PyErr {
    let err = BubbleDiagError::new_err(format!("{kind}: {}", msg.into()));
    Python::attach(|py| {
        let _ = err.value(py).setattr("kind", kind);
    });
    err
}

/// Any serde value as native Python objects, via the json module.
fn to_py(py: Python<'_>, value: &impl Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| invalid("Serialization", e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Epoch seconds or an ISO-8601 string.
fn instant(obj: &Bound<'_, PyAny>) -> PyResult<Instant> {
    if let Ok(v) = obj.extract::<i64>() {
        return Ok(v);
    }
    let s: String = obj.extract().map_err(|_| invalid("InvalidTimestamp", "expected epoch seconds or an ISO-8601 string"))?;
    timeseries::parse_instant(&s).ok_or_else(|| invalid("InvalidTimestamp", format!("cannot parse {s:?}")))
}

fn instants(objs: &[Bound<'_, PyAny>]) -> PyResult<Vec<Instant>> {
    objs.iter().map(instant).collect()
}

#[pyfunction]
fn parse_date(s: &str) -> PyResult<Instant> {
    timeseries::parse_instant(s).ok_or_else(|| invalid("InvalidTimestamp", format!("cannot parse {s:?}")))
}

#[pyfunction]
fn format_date(t: Instant) -> String {
    timeseries::format_instant(t)
}

/// Positive values on strictly increasing timestamps (epoch seconds, UTC).
#[pyclass(name = "TimeSeries", module = "bubblediag", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTimeSeries(CoreSeries);

#[pymethods]
impl PyTimeSeries {
    #[new]
    fn new(timestamps: Vec<Bound<'_, PyAny>>, values: Vec<f64>) -> PyResult<Self> {
        CoreSeries::new(instants(&timestamps)?, values).map(Self).map_err(raise)
    }

    #[staticmethod]
    #[pyo3(signature = (path, time = "date", value = "value"))]
    fn load(path: &str, time: &str, value: &str) -> PyResult<Self> {
        timeseries::load_series(path, &ColumnSpec::new(time, value)).map(Self).map_err(raise)
    }

    #[pyo3(signature = (path, time = "date", value = "value"))]
    fn write(&self, path: &str, time: &str, value: &str) -> PyResult<()> {
        timeseries::write_series(path, &self.0, &ColumnSpec::new(time, value)).map_err(raise)
    }

    #[getter]
    fn timestamps(&self) -> Vec<Instant> {
        self.0.timestamps().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        self.0.timestamps().iter().map(|&t| timeseries::format_instant(t)).collect()
    }

    fn ln_values(&self) -> Vec<f64> {
        self.0.ln_values()
    }

    fn between(&self, start: Bound<'_, PyAny>, end: Bound<'_, PyAny>) -> PyResult<Self> {
        self.0.between(instant(&start)?, instant(&end)?).map(Self).map_err(raise)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TimeSeries(n={}, start={}, end={})",
            self.0.len(),
            timeseries::format_instant(self.0.start()),
            timeseries::format_instant(self.0.end())
        )
    }
}

#[pyfunction]
fn market_cap(price: &PyTimeSeries, supply: &PyTimeSeries) -> PyResult<PyTimeSeries> {
    timeseries::market_cap(&price.0, &supply.0).map(PyTimeSeries).map_err(raise)
}

#[pyfunction]
fn resample(series: &PyTimeSeries, interval_seconds: i64) -> PyResult<PyTimeSeries> {
    timeseries::resample(&series.0, interval_seconds).map(PyTimeSeries).map_err(raise)
}

/// Log-space local regression. With `equivalent_df` the smoother is fixed;
/// otherwise the df is chosen by AICc up to `max_df`.
#[pyfunction]
#[pyo3(signature = (series, equivalent_df = None, degree = 2, max_df = 10.0))]
fn smooth(py: Python<'_>, series: &PyTimeSeries, equivalent_df: Option<f64>, degree: usize, max_df: f64) -> PyResult<PyTimeSeries> {
    let spec = match equivalent_df {
        Some(df) => SmoothingSpec::fixed(df, degree),
        None => SmoothingSpec::aic(max_df, degree),
    };
    let s = series.0.clone();
    py.detach(move || timeseries::smooth(&s, &spec)).map(PyTimeSeries).map_err(raise)
}

#[pyclass(name = "MetcalfeFit", module = "bubblediag", frozen)]
struct PyMetcalfeFit(CoreMetcalfe);

#[pymethods]
impl PyMetcalfeFit {
    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }
    #[getter]
    fn se_alpha(&self) -> f64 {
        self.0.se_alpha
    }
    #[getter]
    fn se_beta(&self) -> f64 {
        self.0.se_beta
    }
    #[getter]
    fn r_squared(&self) -> f64 {
        self.0.r_squared
    }
    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }
    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0)
    }
    fn __repr__(&self) -> String {
        format!("MetcalfeFit(alpha={:.4}, beta={:.4}, r_squared={:.4}, n={})", self.0.alpha, self.0.beta, self.0.r_squared, self.0.n)
    }
}

#[pyfunction]
fn fit_generalized_metcalfe(users: &PyTimeSeries, cap: &PyTimeSeries) -> PyResult<PyMetcalfeFit> {
    metcalfe::fit_generalized_metcalfe(&users.0, &cap.0).map(PyMetcalfeFit).map_err(raise)
}

#[pyfunction]
#[pyo3(signature = (users, cap, beta = 2.0))]
fn fit_constrained_metcalfe(users: &PyTimeSeries, cap: &PyTimeSeries, beta: f64) -> PyResult<PyMetcalfeFit> {
    metcalfe::fit_constrained_metcalfe(&users.0, &cap.0, beta).map(PyMetcalfeFit).map_err(raise)
}

#[pyfunction]
fn compare_nested_ftest(py: Python<'_>, restricted: &PyMetcalfeFit, full: &PyMetcalfeFit) -> PyResult<Py<PyAny>> {
    to_py(py, &metcalfe::compare_nested_ftest(&restricted.0, &full.0).map_err(raise)?)
}

#[pyfunction]
fn rolling_beta(py: Python<'_>, users: &PyTimeSeries, cap: &PyTimeSeries, window_days: i64) -> PyResult<Py<PyAny>> {
    to_py(py, &metcalfe::rolling_beta(&users.0, &cap.0, window_days * timeseries::SECONDS_PER_DAY).map_err(raise)?)
}

/// `(alpha0, beta0)` of a named support line.
#[pyfunction]
fn support_line(name: &str) -> PyResult<(f64, f64)> {
    let s = SupportLine::preset(name).map_err(raise)?;
    Ok((s.alpha0, s.beta0))
}

#[pyfunction]
fn predict_cap(alpha0: f64, beta0: f64, users: &PyTimeSeries) -> PyResult<PyTimeSeries> {
    let line = SupportLine::new(alpha0, beta0).map_err(raise)?;
    metcalfe::predict_cap(&line, &users.0).map(PyTimeSeries).map_err(raise)
}

#[pyfunction]
#[pyo3(signature = (cap, smoothed_users, alpha0 = -3.0, beta0 = 2.0))]
fn mmv_ratio(cap: &PyTimeSeries, smoothed_users: &PyTimeSeries, alpha0: f64, beta0: f64) -> PyResult<PyTimeSeries> {
    let line = SupportLine::new(alpha0, beta0).map_err(raise)?;
    metcalfe::mmv_ratio(&cap.0, &smoothed_users.0, &line).map(|m| PyTimeSeries(m.ratio)).map_err(raise)
}

#[pyclass(name = "EcoGrowthFit", module = "bubblediag", frozen)]
struct PyGrowthFit(CoreGrowth);

#[pymethods]
impl PyGrowthFit {
    /// Normalized `(a, b, c, d)`.
    #[getter]
    fn params(&self) -> (f64, f64, f64, f64) {
        (self.0.a, self.0.b, self.0.c, self.0.d)
    }
    #[getter]
    fn standard_errors(&self) -> (f64, f64, f64, f64) {
        (self.0.se_a, self.0.se_b, self.0.se_c, self.0.se_d)
    }
    /// `ln(users)` at `at` and its standard error.
    fn log_users(&self, at: Bound<'_, PyAny>) -> PyResult<(f64, f64)> {
        self.0.log_users(instant(&at)?).map_err(raise)
    }
    fn project(&self, py: Python<'_>, dates: Vec<Bound<'_, PyAny>>) -> PyResult<Py<PyAny>> {
        to_py(py, &usergrowth::project_users(&self.0, &instants(&dates)?).map_err(raise)?)
    }
    /// `(value, relative standard error)`.
    fn carrying_capacity(&self) -> (f64, f64) {
        let c = usergrowth::carrying_capacity(&self.0);
        (c.value, c.relative_se)
    }
    fn growth_rates(&self, first_year: i32, last_year: i32) -> PyResult<Vec<(i32, f64)>> {
        let rates = usergrowth::annual_growth_rates(&self.0, first_year, last_year).map_err(raise)?;
        Ok(rates.iter().map(|g| (g.from_year, g.rate)).collect())
    }
    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0)
    }
    fn __repr__(&self) -> String {
        format!("EcoGrowthFit(a={:.4}, b={:.4}, c={:.4}, d={:.4})", self.0.a, self.0.b, self.0.c, self.0.d)
    }
}

#[pyfunction]
fn fit_user_growth(py: Python<'_>, users: &PyTimeSeries, start: Bound<'_, PyAny>, end: Bound<'_, PyAny>) -> PyResult<PyGrowthFit> {
    let (s, e, u) = (instant(&start)?, instant(&end)?, users.0.clone());
    py.detach(move || usergrowth::fit_user_growth(&u, s, e)).map(PyGrowthFit).map_err(raise)
}

/// Search grid over `(m, omega, t_c)`.
#[pyclass(name = "Grid", module = "bubblediag", skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(GridSpec);

#[pymethods]
impl PyGrid {
    /// `"default"` or `"coarse"`; `tc_values` replaces the generated t_c grid.
    #[new]
    #[pyo3(signature = (kind = "default", tc_values = None))]
    fn new(kind: &str, tc_values: Option<Vec<f64>>) -> PyResult<Self> {
        let mut g = match kind {
            "default" => GridSpec::default(),
            "coarse" => GridSpec::coarse(),
            other => return Err(invalid("InvalidGrid", format!("unknown grid {other:?}"))),
        };
        g.tc_values = tc_values;
        Ok(Self(g))
    }
    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0)
    }
}

fn grid_or_default(grid: Option<&PyGrid>) -> GridSpec {
    grid.map(|g| g.0.clone()).unwrap_or_default()
}

#[pyclass(name = "FitResult", module = "bubblediag", frozen)]
struct PyFit(CoreFit);

#[pymethods]
impl PyFit {
    #[getter]
    fn model(&self) -> &'static str {
        match self.0.model {
            lppls::Model::Lppls => "lppls",
            lppls::Model::PowerLaw => "power-law",
        }
    }
    #[getter]
    fn params(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.params)
    }
    #[getter]
    fn t_c(&self) -> f64 {
        self.0.params.t_c
    }
    #[getter]
    fn m(&self) -> f64 {
        self.0.params.m
    }
    #[getter]
    fn omega(&self) -> Option<f64> {
        self.0.params.omega
    }
    #[getter]
    fn phi(&self) -> f64 {
        self.0.params.phi
    }
    #[getter]
    fn loglik(&self) -> f64 {
        self.0.loglik
    }
    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }
    /// `(t_c, profile loglik)` pairs.
    #[getter]
    fn profile(&self) -> Vec<(f64, f64)> {
        self.0.profile_tc.clone()
    }
    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0)
    }
    fn __repr__(&self) -> String {
        let p = &self.0.params;
        format!("FitResult(model={}, t_c={:.4}, m={:.3}, omega={:?}, phi={:.3}, loglik={:.3})", self.model(), p.t_c, p.m, p.omega, p.phi, self.0.loglik)
    }
}

fn sample(t: Vec<f64>, y: Vec<f64>, window: Option<(f64, f64)>) -> PyResult<lppls::Sample> {
    match window {
        Some((t1, t2)) => lppls::Sample::with_window(t, y, t1, t2),
        None => lppls::Sample::new(t, y),
    }
    .map_err(raise)
}

#[pyfunction]
#[pyo3(signature = (t, y, grid = None, window = None))]
fn fit_lppls(py: Python<'_>, t: Vec<f64>, y: Vec<f64>, grid: Option<&PyGrid>, window: Option<(f64, f64)>) -> PyResult<PyFit> {
    let (s, g) = (sample(t, y, window)?, grid_or_default(grid));
    py.detach(move || lppls::fit_lppls(&s, &g)).map(PyFit).map_err(raise)
}

#[pyfunction]
#[pyo3(signature = (t, y, grid = None, window = None))]
fn fit_power_law(py: Python<'_>, t: Vec<f64>, y: Vec<f64>, grid: Option<&PyGrid>, window: Option<(f64, f64)>) -> PyResult<PyFit> {
    let (s, g) = (sample(t, y, window)?, grid_or_default(grid));
    py.detach(move || lppls::fit_power_law(&s, &g)).map(PyFit).map_err(raise)
}

#[pyfunction]
#[pyo3(signature = (fit, level = 0.95))]
fn profile_ci_tc(py: Python<'_>, fit: &PyFit, level: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &lppls::profile_ci_tc(&fit.0, level).map_err(raise)?)
}

#[pyfunction]
fn likelihood_ratio_test(py: Python<'_>, lppls_fit: &PyFit, power_law_fit: &PyFit) -> PyResult<Py<PyAny>> {
    to_py(py, &lppls::likelihood_ratio_test(&lppls_fit.0, &power_law_fit.0).map_err(raise)?)
}

/// GLS coefficients at fixed `(m, omega, t_c, phi)`; `omega=None` gives the
/// power law.
#[pyfunction]
fn gls_linear_solve(py: Python<'_>, t: Vec<f64>, y: Vec<f64>, m: f64, omega: Option<f64>, t_c: f64, phi: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &lppls::gls_linear_solve(&t, &y, m, omega, t_c, phi).map_err(raise)?)
}

/// Log-values following the LPPLS trend plus AR(1) noise, reproducible from
/// `(seed, replicate)`.
#[pyfunction]
#[pyo3(signature = (times, sigma, seed, *, a, b, c_cos, d_sin, m, omega, t_c, phi, replicate = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate_lppls(
    times: Vec<f64>,
    sigma: f64,
    seed: u64,
    a: f64,
    b: f64,
    c_cos: f64,
    d_sin: f64,
    m: f64,
    omega: Option<f64>,
    t_c: f64,
    phi: f64,
    replicate: u64,
) -> PyResult<Vec<f64>> {
    let p = lppls::LpplsParams { a, b, c_cos, d_sin, m, omega, t_c, phi };
    let s = lppls_sample(&p, &times, sigma, &mut substream(seed, replicate)).map_err(raise)?;
    Ok(s.values().to_vec())
}

#[pyclass(name = "ScanResult", module = "bubblediag", frozen)]
struct PyScan(CoreScan);

#[pymethods]
impl PyScan {
    #[getter]
    fn selected_t1(&self) -> Instant {
        self.0.selected_t1
    }
    #[getter]
    fn phi0(&self) -> f64 {
        self.0.phi0
    }
    #[getter]
    fn accepted(&self) -> Vec<Instant> {
        self.0.accepted().map(|w| w.t1).collect()
    }
    #[getter]
    fn aggregated_profile(&self) -> Vec<(f64, f64)> {
        self.0.aggregated_profile.clone()
    }
    #[getter]
    fn aggregated_interval(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.aggregated_interval)
    }
    fn has_confident_tc(&self) -> bool {
        self.0.has_confident_tc()
    }
    /// Scaled time of `t` on the scan's axis (`t0 -> 0`, `t2 -> 1`).
    fn scale(&self, t: Bound<'_, PyAny>) -> PyResult<f64> {
        Ok(self.0.config.scale(instant(&t)?))
    }
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| invalid("Serialization", e.to_string()))
    }
    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0)
    }
}

#[pyfunction]
#[pyo3(signature = (series, t0, t2, t1_candidates, seed, n_bootstrap = 1000, grid = None))]
#[allow(clippy::too_many_arguments)]
fn scan_windows(
    py: Python<'_>,
    series: &PyTimeSeries,
    t0: Bound<'_, PyAny>,
    t2: Bound<'_, PyAny>,
    t1_candidates: Vec<Bound<'_, PyAny>>,
    seed: u64,
    n_bootstrap: usize,
    grid: Option<&PyGrid>,
) -> PyResult<PyScan> {
    let mut config = ScanConfig::new(instant(&t0)?, instant(&t2)?, instants(&t1_candidates)?, seed);
    config.n_bootstrap = n_bootstrap;
    let (data, g) = (series.0.clone(), grid_or_default(grid));
    py.detach(move || windowscan::scan_windows(&data, &config, &g)).map(PyScan).map_err(raise)
}

#[pyfunction]
fn bubble_presets(py: Python<'_>) -> PyResult<Py<PyAny>> {
    to_py(py, &BubblePreset::all())
}

#[pyfunction]
fn bubble_stats(py: Python<'_>, cap: &PyTimeSeries, start: Bound<'_, PyAny>, end: Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    to_py(py, &core_bubble_stats(&cap.0, instant(&start)?, instant(&end)?).map_err(raise)?)
}

#[pymodule]
#[pyo3(name = "bubblediag")]
fn bubblediag_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BubbleDiagError", m.py().get_type::<BubbleDiagError>())?;
    m.add_class::<PyTimeSeries>()?;
    m.add_class::<PyMetcalfeFit>()?;
    m.add_class::<PyGrowthFit>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyFit>()?;
    m.add_class::<PyScan>()?;
    m.add_function(wrap_pyfunction!(parse_date, m)?)?;
    m.add_function(wrap_pyfunction!(format_date, m)?)?;
    m.add_function(wrap_pyfunction!(market_cap, m)?)?;
    m.add_function(wrap_pyfunction!(resample, m)?)?;
    m.add_function(wrap_pyfunction!(smooth, m)?)?;
    m.add_function(wrap_pyfunction!(fit_generalized_metcalfe, m)?)?;
    m.add_function(wrap_pyfunction!(fit_constrained_metcalfe, m)?)?;
    m.add_function(wrap_pyfunction!(compare_nested_ftest, m)?)?;
    m.add_function(wrap_pyfunction!(rolling_beta, m)?)?;
    m.add_function(wrap_pyfunction!(support_line, m)?)?;
    m.add_function(wrap_pyfunction!(predict_cap, m)?)?;
    m.add_function(wrap_pyfunction!(mmv_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(fit_user_growth, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lppls, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(profile_ci_tc, m)?)?;
    m.add_function(wrap_pyfunction!(likelihood_ratio_test, m)?)?;
    m.add_function(wrap_pyfunction!(gls_linear_solve, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_lppls, m)?)?;
    m.add_function(wrap_pyfunction!(scan_windows, m)?)?;
    m.add_function(wrap_pyfunction!(bubble_presets, m)?)?;
    m.add_function(wrap_pyfunction!(bubble_stats, m)?)?;
    Ok(())
}
