//! Python bindings: regressions with fixed effects and clustering,
//! threshold scans, the density test, synthetic worlds and the pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use creditrd_core::kernel::{
    self, absorb_fixed_effects, ClusterSpec, Covariance, DesignMatrix, FitOptions, GroupLabels,
};
use creditrd_core::rd::{self, CreditRecord, RdConfig, ZoneYear};
use creditrd_core::{pipeline, synth, Error};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(creditrd, EstimationError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        e if e.is_estimation() => EstimationError::new_err(e.to_string()),
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(text: Option<&str>) -> PyResult<T> {
    match text {
        Some(t) => serde_json::from_str(t).map_err(json_err),
        None => Ok(T::default()),
    }
}

/// Result of a weighted least-squares or 2SLS fit.
#[pyclass(name = "RegressionResult", module = "creditrd")]
#[derive(Clone)]
struct PyRegressionResult {
    inner: kernel::RegressionResult,
}

#[pymethods]
impl PyRegressionResult {
    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names.clone()
    }

    #[getter]
    fn coefficients(&self) -> BTreeMap<String, f64> {
        self.inner
            .names
            .iter()
            .cloned()
            .zip(self.inner.coefficients.iter().copied())
            .collect()
    }

    #[getter]
    fn standard_errors(&self) -> BTreeMap<String, f64> {
        self.inner
            .names
            .iter()
            .cloned()
            .zip(self.inner.standard_errors.iter().copied())
            .collect()
    }

    #[getter]
    fn vcov(&self) -> Vec<Vec<f64>> {
        let v = &self.inner.vcov;
        (0..v.nrows())
            .map(|i| v.row(i).iter().copied().collect())
            .collect()
    }

    #[getter]
    fn n_obs(&self) -> usize {
        self.inner.n_obs
    }

    #[getter]
    fn n_clusters(&self) -> usize {
        self.inner.n_clusters
    }

    #[getter]
    fn r_squared(&self) -> f64 {
        self.inner.r_squared
    }

    #[getter]
    fn covariance(&self) -> String {
        format!("{:?}", self.inner.covariance).to_uppercase()
    }

    #[getter]
    fn first_stage_f(&self) -> BTreeMap<String, f64> {
        self.inner
            .first_stage_f
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    }

    fn p_value(&self, name: &str) -> PyResult<f64> {
        self.inner
            .p_value(name)
            .ok_or_else(|| PyValueError::new_err(format!("no coefficient `{name}`")))
    }

    #[pyo3(signature = (name, alpha=0.05))]
    fn confidence_interval(&self, name: &str, alpha: f64) -> PyResult<(f64, f64)> {
        self.inner
            .confidence_interval(name, alpha)
            .ok_or_else(|| PyValueError::new_err(format!("no coefficient `{name}`")))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        let parts: Vec<String> = self
            .inner
            .names
            .iter()
            .zip(&self.inner.coefficients)
            .map(|(n, b)| format!("{n}={b:.6}"))
            .collect();
        format!("RegressionResult({})", parts.join(", "))
    }
}

fn design(columns: Vec<(String, Vec<f64>)>, weights: Option<Vec<f64>>) -> PyResult<DesignMatrix> {
    let n = columns.first().map_or(0, |c| c.1.len());
    let w = weights.unwrap_or_else(|| vec![1.0; n]);
    DesignMatrix::from_columns(columns, w).map_err(to_py)
}

fn covariance(kind: &str, clusters: Option<Vec<i64>>) -> PyResult<Covariance> {
    match (kind.to_ascii_lowercase().as_str(), clusters) {
        (_, Some(c)) => Ok(Covariance::Cr1(ClusterSpec::new(c))),
        ("hc1", None) => Ok(Covariance::Hc1),
        ("classical", None) => Ok(Covariance::Classical),
        ("cr1", None) => Err(PyValueError::new_err("CR1 needs cluster labels")),
        (other, None) => Err(PyValueError::new_err(format!(
            "unknown covariance `{other}`"
        ))),
    }
}

/// Absorbs the `groups` fixed effects (name -> integer labels) from the
/// outcome and every column, returning demeaned data and the absorbed
/// degrees of freedom.
fn absorb(
    columns: Vec<(String, Vec<f64>)>,
    y: Vec<f64>,
    weights: Option<Vec<f64>>,
    groups: Vec<(String, Vec<i64>)>,
    clusters: Option<&ClusterSpec>,
) -> PyResult<(Vec<(String, Vec<f64>)>, Vec<f64>, FitOptions)> {
    let x = design(columns, weights)?;
    let mut labels = GroupLabels::new();
    for (name, g) in groups {
        labels = labels.with_dimension(name, g).map_err(to_py)?;
    }
    let absorbed = absorb_fixed_effects(&x, &y, &labels).map_err(to_py)?;
    let nested = clusters.map_or(0, |c| absorbed.nested_dof(c));
    let cols = absorbed
        .x
        .names()
        .iter()
        .enumerate()
        .map(|(j, n)| (n.clone(), absorbed.x.column(j).to_vec()))
        .collect();
    let opts = FitOptions {
        absorbed_dof: absorbed.absorbed_dof,
        nested_absorbed_dof: nested,
        total_sum_squares: Some(absorbed.total_sum_squares),
        ..FitOptions::default()
    };
    Ok((cols, absorbed.y, opts))
}

/// Weighted least squares. `columns` is a list of (name, values) pairs in
/// regressor order; `groups` adds absorbed fixed effects; passing
/// `clusters` selects CR1.
#[pyfunction]
#[pyo3(signature = (columns, y, weights=None, covariance_kind="HC1", clusters=None, groups=None))]
fn wls_fit(
    columns: Vec<(String, Vec<f64>)>,
    y: Vec<f64>,
    weights: Option<Vec<f64>>,
    covariance_kind: &str,
    clusters: Option<Vec<i64>>,
    groups: Option<Vec<(String, Vec<i64>)>>,
) -> PyResult<PyRegressionResult> {
    let cov = covariance(covariance_kind, clusters)?;
    let spec = match &cov {
        Covariance::Cr1(c) => Some(c.clone()),
        _ => None,
    };
    let (columns, y, mut opts) = match groups {
        Some(g) if !g.is_empty() => absorb(columns, y, weights.clone(), g, spec.as_ref())?,
        _ => (columns, y, FitOptions::default()),
    };
    opts.covariance = cov;
    let x = design(columns, weights)?;
    let fit = kernel::wls_fit_with(&x, &y, &opts).map_err(to_py)?;
    Ok(PyRegressionResult { inner: fit.result })
}

/// Two-stage least squares with HC1, or CR1 when `clusters` is given.
#[pyfunction]
#[pyo3(signature = (y, exogenous, endogenous, instruments, weights=None, clusters=None))]
fn tsls_fit(
    y: Vec<f64>,
    exogenous: Vec<(String, Vec<f64>)>,
    endogenous: Vec<(String, Vec<f64>)>,
    instruments: Vec<(String, Vec<f64>)>,
    weights: Option<Vec<f64>>,
    clusters: Option<Vec<i64>>,
) -> PyResult<PyRegressionResult> {
    let opts = FitOptions {
        covariance: covariance("HC1", clusters)?,
        ..FitOptions::default()
    };
    let w = weights.unwrap_or_else(|| vec![1.0; y.len()]);
    let exog = design(exogenous, Some(w.clone()))?;
    let endog = design(endogenous, Some(w.clone()))?;
    let inst = design(instruments, Some(w))?;
    let result = kernel::tsls_fit(&y, &exog, &endog, &inst, &opts).map_err(to_py)?;
    Ok(PyRegressionResult { inner: result })
}

fn credit_records(
    scores: &[u16],
    limits: &[f64],
    counties: Option<Vec<u32>>,
) -> PyResult<Vec<CreditRecord>> {
    if scores.len() != limits.len() {
        return Err(PyValueError::new_err("scores and limits differ in length"));
    }
    let counties = counties.unwrap_or_else(|| vec![1001; scores.len()]);
    if counties.len() != scores.len() {
        return Err(PyValueError::new_err(
            "counties differ in length from scores",
        ));
    }
    scores
        .iter()
        .zip(limits)
        .zip(&counties)
        .enumerate()
        .map(|(i, ((&s, &l), &c))| {
            let r = CreditRecord {
                person_id: i as u64,
                year: 2012,
                credit_score: s,
                total_credit_limit: l,
                zcta: creditrd_core::geo::Zcta(0),
                county_fips: creditrd_core::geo::CountyFips(c),
                commuting_zone: creditrd_core::geo::CommutingZone(0),
            };
            r.validate().map(|_| r).map_err(to_py)
        })
        .collect()
}

/// Scans the cutoff grid for one zone-year and selects the threshold.
/// Returns `(estimates, threshold)` as dictionaries; `threshold` is None
/// when no positive significant jump exists.
#[pyfunction]
#[pyo3(signature = (scores, limits, counties=None, config_json=None))]
fn scan_zone<'py>(
    py: Python<'py>,
    scores: Vec<u16>,
    limits: Vec<f64>,
    counties: Option<Vec<u32>>,
    config_json: Option<&str>,
) -> PyResult<(Vec<Bound<'py, PyDict>>, Option<Bound<'py, PyDict>>)> {
    let cfg: RdConfig = parse_json(config_json)?;
    cfg.validate().map_err(to_py)?;
    let records = credit_records(&scores, &limits, counties)?;
    let key = ZoneYear {
        commuting_zone: creditrd_core::geo::CommutingZone(0),
        year: 2012,
    };
    let scan = rd::scan_cutoffs(key, &records, &cfg);
    let selected = rd::select_threshold(&rd::suppress_contiguous(&scan.estimates, &cfg), &cfg);
    let estimates = scan
        .estimates
        .iter()
        .map(|e| {
            let d = PyDict::new_bound(py);
            d.set_item("cutoff", e.cutoff)?;
            d.set_item("alpha", e.alpha)?;
            d.set_item("se", e.se)?;
            d.set_item("t", e.t_stat)?;
            d.set_item("n_left", e.n_left)?;
            d.set_item("n_right", e.n_right)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let threshold = selected
        .map(|t| -> PyResult<_> {
            let d = PyDict::new_bound(py);
            d.set_item("cutoff", t.cutoff)?;
            d.set_item("alpha", t.alpha)?;
            d.set_item("se", t.se)?;
            d.set_item("t", t.t_stat)?;
            Ok(d)
        })
        .transpose()?;
    Ok((estimates, threshold))
}

/// Binned log-density smoothness test at `cutoff`.
#[pyfunction]
#[pyo3(signature = (scores, cutoff, bin_width=1, halfwidth=50, degree=2))]
fn density_test<'py>(
    py: Python<'py>,
    scores: Vec<i32>,
    cutoff: i32,
    bin_width: i32,
    halfwidth: i32,
    degree: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = rd::DensityConfig {
        bin_width,
        halfwidth,
        degree,
        ..rd::DensityConfig::default()
    };
    let r = rd::density_smoothness_test(scores, cutoff, &cfg);
    let d = PyDict::new_bound(py);
    d.set_item("log_jump", r.log_jump)?;
    d.set_item("se", r.se)?;
    d.set_item("t", r.t_stat)?;
    d.set_item("pass", r.pass)?;
    d.set_item("inconclusive", r.inconclusive)?;
    d.set_item("populated_bins", r.populated_bins)?;
    Ok(d)
}

/// `(share_total, share_above, share_below)` from counts below and above
/// the threshold and the cell population.
#[pyfunction]
fn shares_from_counts(below: u64, above: u64, population: u64) -> (f64, f64, f64) {
    creditrd_core::shares::shares_from_counts(below, above, population)
}

/// Synthetic credit panel for a world configuration (JSON); returned as a
/// dictionary of equal-length columns.
#[pyfunction]
#[pyo3(signature = (config_json=None))]
fn generate_credit_panel<'py>(
    py: Python<'py>,
    config_json: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg: synth::WorldConfig = parse_json(config_json)?;
    let world = py
        .allow_threads(|| synth::generate_credit_panel(&cfg))
        .map_err(to_py)?;
    let r = &world.records;
    let d = PyDict::new_bound(py);
    d.set_item(
        "person_id",
        r.iter().map(|x| x.person_id).collect::<Vec<_>>(),
    )?;
    d.set_item("year", r.iter().map(|x| x.year).collect::<Vec<_>>())?;
    d.set_item(
        "credit_score",
        r.iter().map(|x| x.credit_score).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "total_limit",
        r.iter().map(|x| x.total_credit_limit).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "zcta",
        r.iter().map(|x| x.zcta.to_string()).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "county_fips",
        r.iter()
            .map(|x| x.county_fips.to_string())
            .collect::<Vec<_>>(),
    )?;
    d.set_item(
        "cz",
        r.iter()
            .map(|x| x.commuting_zone.to_string())
            .collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// Runs a Monte Carlo scenario (JSON, e.g. `{"kind": "null_share"}`) and
/// returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (scenario_json, replications, config_json=None))]
fn monte_carlo(
    py: Python<'_>,
    scenario_json: &str,
    replications: usize,
    config_json: Option<&str>,
) -> PyResult<String> {
    let cfg: synth::WorldConfig = parse_json(config_json)?;
    let scenario: synth::Scenario = serde_json::from_str(scenario_json).map_err(json_err)?;
    let report = py
        .allow_threads(|| synth::monte_carlo(&cfg, replications, scenario))
        .map_err(to_py)?;
    serde_json::to_string(&report).map_err(json_err)
}

/// Runs pipeline stages (`"all"` or one stage name) under a JSON pipeline
/// configuration and returns the written file paths.
#[pyfunction]
#[pyo3(signature = (config_json=None, stage="all", out_dir=None))]
fn run_pipeline(
    py: Python<'_>,
    config_json: Option<&str>,
    stage: &str,
    out_dir: Option<PathBuf>,
) -> PyResult<Vec<String>> {
    let mut cfg: pipeline::PipelineConfig = parse_json(config_json)?;
    if let Some(o) = out_dir {
        cfg.out_dir = o;
    }
    let runs = py
        .allow_threads(|| match stage {
            "all" => pipeline::run_all(&cfg, pipeline::Stage::Simulate),
            s => s
                .parse()
                .and_then(|st| pipeline::run_stage(&cfg, st))
                .map(|r| vec![r]),
        })
        .map_err(to_py)?;
    Ok(runs
        .iter()
        .flat_map(|r| r.outputs.iter().chain([&r.manifest]))
        .map(|p| p.display().to_string())
        .collect())
}

/// asinh(limit) shifted by `jump`, mapped back to dollars.
#[pyfunction]
fn limit_after_jump(limit: f64, jump: f64) -> f64 {
    rd::limit_after_jump(limit, jump)
}

#[pymodule]
fn creditrd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add(
        "EstimationError",
        m.py().get_type_bound::<EstimationError>(),
    )?;
    m.add_class::<PyRegressionResult>()?;
    m.add_function(wrap_pyfunction!(wls_fit, m)?)?;
    m.add_function(wrap_pyfunction!(tsls_fit, m)?)?;
    m.add_function(wrap_pyfunction!(scan_zone, m)?)?;
    m.add_function(wrap_pyfunction!(density_test, m)?)?;
    m.add_function(wrap_pyfunction!(shares_from_counts, m)?)?;
    m.add_function(wrap_pyfunction!(generate_credit_panel, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(limit_after_jump, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_functions_from_python() {
        pyo3::prepare_freethreaded_python();
        Python::with_gil(|py| {
            let m = PyModule::new_bound(py, "creditrd").unwrap();
            creditrd(&m).unwrap();
            let locals = PyDict::new_bound(py);
            locals.set_item("m", m).unwrap();
            py.run_bound(
                r#"
r = m.wls_fit([("const", [1.0] * 4), ("x", [0.0, 1.0, 2.0, 3.0])], [1.0, 3.0, 5.0, 7.0])
assert abs(r.coefficients["x"] - 2.0) < 1e-12, r
assert m.shares_from_counts(1, 3, 10) == (0.4, 0.3, 0.1), m.shares_from_counts(1, 3, 10)
try:
    m.wls_fit([("a", [1.0, 2.0]), ("b", [2.0, 4.0])], [1.0, 2.0])
    raise AssertionError("expected failure")
except m.EstimationError as e:
    assert "collinear columns: a" in str(e), str(e)
"#,
                None,
                Some(&locals),
            )
            .unwrap();
        });
    }
}
