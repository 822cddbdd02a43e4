//! Python bindings: interval computation, the correction function and the
//! coverage simulator.

use prevci::confdist::{kg_effective, ws_moments, StratifiedSample, Stratum};
use prevci::estimate::{apparent_prevalence, g as correct};
use prevci::intervals::{compute, ComputeOptions, LrVariance};
use prevci::simlab::{run_scenario, ScenarioSpec, SimResult};
use prevci::survey::{normalized_weights, SurveyFrame};
use prevci::{AssayCalibration, BinomialCount, Error, Interval, McConfig, Method};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Interval", module = "prevci", frozen, get_all)]
struct PyInterval {
    lower: f64,
    upper: f64,
    alpha: f64,
    method: String,
    mc_samples: Option<usize>,
    seed: Option<u64>,
    warnings: Vec<String>,
}

impl From<Interval> for PyInterval {
    fn from(iv: Interval) -> Self {
        PyInterval {
            lower: iv.lower,
            upper: iv.upper,
            alpha: iv.alpha,
            method: iv.method.tag().to_string(),
            mc_samples: iv.diagnostics.mc_samples,
            seed: iv.diagnostics.seed,
            warnings: iv.diagnostics.warnings,
        }
    }
}

#[pymethods]
impl PyInterval {
    fn width(&self) -> f64 {
        self.upper - self.lower
    }

    fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    fn __repr__(&self) -> String {
        format!("Interval(method='{}', lower={}, upper={}, alpha={})", self.method, self.lower, self.upper, self.alpha)
    }
}

#[pyclass(name = "Metrics", module = "prevci", frozen, get_all)]
struct PyMetrics {
    weight_set: usize,
    cv_target: f64,
    cv_actual: f64,
    method: String,
    seed: u64,
    successes: usize,
    coverage: f64,
    lower_error: f64,
    upper_error: f64,
    mean_width: f64,
    mc_se: f64,
    failures: Vec<(usize, String)>,
}

impl From<SimResult> for PyMetrics {
    fn from(r: SimResult) -> Self {
        PyMetrics {
            weight_set: r.weight_set,
            cv_target: r.cv_target,
            cv_actual: r.cv_actual,
            method: r.method.tag().to_string(),
            seed: r.seed,
            successes: r.successes,
            coverage: r.coverage,
            lower_error: r.lower_error,
            upper_error: r.upper_error,
            mean_width: r.mean_width,
            mc_se: r.mc_se,
            failures: r.failures.into_iter().map(|f| (f.replicate, f.message)).collect(),
        }
    }
}

#[pymethods]
impl PyMetrics {
    fn __repr__(&self) -> String {
        format!(
            "Metrics(method='{}', cv_actual={:.3}, coverage={}, lower_error={}, upper_error={})",
            self.method, self.cv_actual, self.coverage, self.lower_error, self.upper_error
        )
    }
}

fn sample_from(
    x: Option<u64>,
    n: Option<u64>,
    strata: Option<Vec<(f64, u64, u64)>>,
    weights: Option<Vec<f64>>,
    positives: Option<Vec<bool>>,
) -> PyResult<StratifiedSample> {
    let sample = match (x, n, strata, weights, positives) {
        (Some(x), Some(n), None, None, None) => Ok(StratifiedSample::srs(BinomialCount::new(x, n).map_err(to_py)?)),
        (None, None, Some(rows), None, None) => {
            StratifiedSample::new(rows.into_iter().map(|(weight, n, x)| Stratum { weight, n, x }).collect())
        }
        (None, None, None, Some(w), Some(y)) => SurveyFrame::from_raw_weights(y, w).and_then(|f| normalized_weights(&f)),
        _ => {
            return Err(PyValueError::new_err(
                "give exactly one of (x, n), strata, or (weights, positives)",
            ))
        }
    };
    sample.map_err(to_py)
}

/// Confidence interval for prevalence.
///
/// Data are either a simple random sample `x` of `n`, a list of
/// `(weight, n, x)` strata with weights summing to one, or per-person raw
/// `weights` with boolean `positives`. `calibration` is
/// `(c_n, m_n, c_p, m_p)`: positives among negative controls, negative
/// controls, positives among positive controls, positive controls.
#[pyfunction]
#[pyo3(signature = (
    method, *, x=None, n=None, strata=None, weights=None, positives=None, calibration=None,
    alpha=0.05, mc=McConfig::DEFAULT_SAMPLES, seed=None, lr_variance="complement-squared"
))]
#[allow(clippy::too_many_arguments)]
fn interval(
    py: Python<'_>,
    method: &str,
    x: Option<u64>,
    n: Option<u64>,
    strata: Option<Vec<(f64, u64, u64)>>,
    weights: Option<Vec<f64>>,
    positives: Option<Vec<bool>>,
    calibration: Option<(u64, u64, u64, u64)>,
    alpha: f64,
    mc: usize,
    seed: Option<u64>,
    lr_variance: &str,
) -> PyResult<PyInterval> {
    let method: Method = method.parse().map_err(to_py)?;
    let lr_variance: LrVariance = lr_variance.parse().map_err(to_py)?;
    let sample = sample_from(x, n, strata, weights, positives)?;
    let calibration =
        calibration.map(|(c_n, m_n, c_p, m_p)| AssayCalibration::new(c_n, m_n, c_p, m_p)).transpose().map_err(to_py)?;
    let mc = seed.map(|s| McConfig::new(mc, s)).transpose().map_err(to_py)?;
    let opts = ComputeOptions { mc, lr_variance, cache: None };
    let iv = py.detach(|| compute(method, &sample, calibration.as_ref(), alpha, &opts)).map_err(to_py)?;
    Ok(iv.into())
}

/// True prevalence implied by apparent prevalence `theta`, false positive
/// rate `phi_n` and sensitivity `phi_p`, clamped to [0, 1].
#[pyfunction]
fn g(theta: f64, phi_n: f64, phi_p: f64) -> f64 {
    correct(theta, phi_n, phi_p)
}

/// Summary statistics of `(weight, n, x)` strata: apparent prevalence, the
/// gamma-interval moments `y` and `v`, and the effective sample size.
#[pyfunction]
fn summarize(py: Python<'_>, strata: Vec<(f64, u64, u64)>) -> PyResult<Py<pyo3::types::PyDict>> {
    let s = StratifiedSample::new(strata.into_iter().map(|(weight, n, x)| Stratum { weight, n, x }).collect())
        .map_err(to_py)?;
    let m = ws_moments(&s);
    let e = kg_effective(&s);
    let d = pyo3::types::PyDict::new(py);
    d.set_item("apparent", apparent_prevalence(&s))?;
    d.set_item("y", m.y)?;
    d.set_item("v", m.v)?;
    d.set_item("n_eff", e.n_eff)?;
    d.set_item("x_eff", e.x_eff)?;
    Ok(d.unbind())
}

/// Runs a coverage simulation described by a JSON scenario.
#[pyfunction]
#[pyo3(signature = (scenario, methods=None))]
fn simulate(py: Python<'_>, scenario: &str, methods: Option<Vec<String>>) -> PyResult<Vec<PyMetrics>> {
    let spec: ScenarioSpec = serde_json::from_str(scenario).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let methods = methods
        .unwrap_or_default()
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let results = py.detach(|| run_scenario(&spec, &methods)).map_err(to_py)?;
    Ok(results.into_iter().map(PyMetrics::from).collect())
}

#[pymodule]
#[pyo3(name = "prevci")]
fn prevci_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

/// Adds the module contents to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInterval>()?;
    m.add_class::<PyMetrics>()?;
    m.add_function(wrap_pyfunction!(interval, m)?)?;
    m.add_function(wrap_pyfunction!(g, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("METHODS", Method::ALL.iter().map(|m| m.tag()).collect::<Vec<_>>())?;
    Ok(())
}
