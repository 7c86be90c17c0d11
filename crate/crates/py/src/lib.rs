//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists with the same field names as the JSON used by the HTTP service.

use prefmobo::acquisition;
use prefmobo::active::QueryKind;
use prefmobo::benchmarks::{BenchmarkName, BenchmarkSpec, DtlzNorm};
use prefmobo::diag;
use prefmobo::engine::{Answer, ObjectiveScale, PcChoice, Session, SessionConfig};
use prefmobo::harness::{self, ExperimentConfig};
use prefmobo::utility::WeightVector;
use prefmobo::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use pythonize::{depythonize, pythonize};
use serde::Serialize;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    Ok(pythonize(py, value)?)
}

fn config_from(config: Option<&Bound<'_, PyAny>>) -> PyResult<SessionConfig> {
    let cfg: SessionConfig = match config {
        Some(c) if !c.is_none() => depythonize(c)?,
        _ => SessionConfig::default(),
    };
    Ok(cfg)
}

fn parse_kind(kind: &str) -> PyResult<QueryKind> {
    match kind {
        "pc" => Ok(QueryKind::Pc),
        "ir" => Ok(QueryKind::Ir),
        other => Err(PyValueError::new_err(format!("unknown query kind '{other}'; expected 'pc' or 'ir'"))),
    }
}

/// One interactive optimization session.
#[pyclass(name = "Session", module = "prefmobo_py")]
struct PySession {
    inner: Session,
}

#[pymethods]
impl PySession {
    /// A session on a built-in benchmark whose objectives are evaluated
    /// automatically when a candidate is observed.
    #[new]
    #[pyo3(signature = (benchmark, config=None, dtlz_norm="euclidean"))]
    fn new(benchmark: &str, config: Option<&Bound<'_, PyAny>>, dtlz_norm: &str) -> PyResult<Self> {
        let name: BenchmarkName = benchmark.parse().map_err(py_err)?;
        let norm = match dtlz_norm {
            "euclidean" => DtlzNorm::Euclidean,
            "cardinality" => DtlzNorm::Cardinality,
            other => return Err(PyValueError::new_err(format!("unknown dtlz_norm '{other}'"))),
        };
        let inner = Session::benchmark(config_from(config)?, name, norm).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// A session over client-supplied candidates whose objective values are
    /// reported through `observe`.
    #[staticmethod]
    #[pyo3(signature = (candidates, objective_lower, objective_upper, minimize=false, input_lower=None, input_upper=None, config=None))]
    #[allow(clippy::too_many_arguments)]
    fn external(
        candidates: Vec<Vec<f64>>,
        objective_lower: Vec<f64>,
        objective_upper: Vec<f64>,
        minimize: bool,
        input_lower: Option<Vec<f64>>,
        input_upper: Option<Vec<f64>>,
        config: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Self> {
        let bounds = match (input_lower, input_upper) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            (None, None) => None,
            _ => return Err(PyValueError::new_err("give both input_lower and input_upper or neither")),
        };
        let scale = ObjectiveScale::new(objective_lower, objective_upper, minimize).map_err(py_err)?;
        let inner = Session::external(config_from(config)?, candidates, bounds, scale).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        Ok(Self { inner: Session::from_json(json).map_err(py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[getter]
    fn n_objectives(&self) -> usize {
        self.inner.n_objectives
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn candidates(&self) -> Vec<Vec<f64>> {
        self.inner.candidates.clone()
    }

    /// Selects the next preference query (`"pc"` or `"ir"`) and marks it pending.
    #[pyo3(signature = (kind="pc"))]
    fn next_query<'py>(&mut self, py: Python<'py>, kind: &str) -> PyResult<Bound<'py, PyAny>> {
        let q = self.inner.next_query(parse_kind(kind)?).map_err(py_err)?;
        to_py(py, &q)
    }

    /// Answers the pending query: `preferred` (0 or 1) for a pairwise
    /// comparison, `dim` for an improvement request.
    #[pyo3(signature = (query_id, preferred=None, dim=None))]
    fn answer(&mut self, query_id: u64, preferred: Option<usize>, dim: Option<usize>) -> PyResult<()> {
        let answer = match (preferred, dim) {
            (Some(0), None) => Answer::Pc { preferred: PcChoice::First },
            (Some(1), None) => Answer::Pc { preferred: PcChoice::Second },
            (Some(p), None) => return Err(PyValueError::new_err(format!("preferred must be 0 or 1, got {p}"))),
            (None, Some(d)) => Answer::Ir { dim: d },
            _ => return Err(PyValueError::new_err("give exactly one of preferred or dim")),
        };
        self.inner.answer(query_id, answer).map_err(py_err)
    }

    /// The next candidate to evaluate.
    fn suggest<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.suggest().map_err(py_err)?;
        to_py(py, &s)
    }

    /// Records an evaluation at `x`; `y` (original units) may be omitted on
    /// benchmark sessions. Returns the index of the new observation.
    #[pyo3(signature = (x, y=None))]
    fn observe(&mut self, x: Vec<f64>, y: Option<Vec<f64>>) -> PyResult<usize> {
        self.inner.observe(x, y).map_err(py_err)
    }

    /// Records an evaluation of candidate `index` on a benchmark session.
    fn observe_candidate(&mut self, index: usize) -> PyResult<usize> {
        self.inner.observe_candidate(index).map_err(py_err)
    }

    fn summary<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.summary().map_err(py_err)?;
        to_py(py, &s)
    }

    fn __repr__(&self) -> String {
        format!(
            "Session(method={}, objectives={}, observations={})",
            self.inner.config.method.as_str(),
            self.inner.n_objectives,
            self.inner.observations.len()
        )
    }
}

/// Names of the built-in benchmarks.
#[pyfunction]
fn benchmarks() -> Vec<&'static str> {
    BenchmarkName::ALL.iter().map(|b| b.as_str()).collect()
}

/// Raw objective values of benchmark `name` at `x`.
#[pyfunction]
fn evaluate(name: &str, x: Vec<f64>) -> PyResult<Vec<f64>> {
    let name: BenchmarkName = name.parse().map_err(py_err)?;
    BenchmarkSpec::new(name).evaluate(&x).map_err(py_err)
}

/// Expected improvement of the Chebyshev utility with weights `w` over
/// `best`, for independent Gaussian objectives with the given moments.
#[pyfunction]
fn expected_improvement(mean: Vec<f64>, std: Vec<f64>, w: Vec<f64>, best: f64) -> PyResult<f64> {
    let w = WeightVector::new(w).map_err(py_err)?;
    acquisition::ei_csf(&mean, &std, &w, best).map_err(py_err)
}

/// Runs a batch experiment. `config` has the fields of the CLI's JSON config;
/// returns `{"csv": str, "manifest": dict}`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyDict>> {
    let cfg: ExperimentConfig = depythonize(config)?;
    let traces = py.detach(|| harness::run_experiment(&cfg)).map_err(py_err)?;
    let mut csv = Vec::new();
    harness::write_csv(&traces, &mut csv).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("csv", String::from_utf8(csv).expect("CSV is UTF-8"))?;
    out.set_item("manifest", to_py(py, &harness::manifest(&cfg, &traces))?)?;
    Ok(out)
}

/// Runs the numerical self-checks; returns `(name, passed, detail)` tuples.
#[pyfunction]
#[pyo3(signature = (seed=2024))]
fn self_check(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, bool, String)>> {
    let checks = py.detach(|| diag::run_all(seed)).map_err(py_err)?;
    Ok(checks.into_iter().map(|c| (c.name, c.passed, c.detail)).collect())
}

#[pymodule]
fn prefmobo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(benchmarks, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(expected_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(self_check, m)?)?;
    Ok(())
}
