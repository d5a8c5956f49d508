use kcone::analysis::{milnor_from_branches as milnor, ApproxOrder};
use kcone::cli::{analyze_problem, digest, trace_problem, ReportFile};
use kcone::problem::{bundled, ProblemFile, BUNDLED};
use kcone::suites::{run_suites, SuiteReport, VerifyConfig};
use kcone::KconeError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py_err(e: KconeError) -> PyErr {
    match e {
        KconeError::Input(_) | KconeError::Io(_) | KconeError::Dimension { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn py_opt(v: Option<usize>) -> String {
    v.map_or_else(|| "None".to_string(), |x| x.to_string())
}

fn py_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

fn kebab<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
}

/// A problem `G[z] = 0` with a candidate curve.
#[pyclass(name = "Problem", module = "kcone_py")]
struct PyProblem {
    inner: ProblemFile,
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyProblem { inner: ProblemFile::parse(text).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyProblem { inner: ProblemFile::load(std::path::Path::new(path)).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        Ok(PyProblem { inner: bundled(name).map_err(to_py_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.inner.name.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn k_max(&self) -> usize {
        self.inner.k_max
    }

    fn __repr__(&self) -> String {
        let name = self.inner.name.as_deref().map_or_else(|| "None".to_string(), |n| format!("'{n}'"));
        format!("Problem(name={name}, n={}, m={}, k_max={})", self.inner.n, self.inner.m, self.inner.k_max)
    }
}

/// Analysis report of one problem.
#[pyclass(name = "Report", module = "kcone_py")]
struct PyReport {
    inner: ReportFile,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn transversal(&self) -> bool {
        self.inner.cone.transversal
    }

    #[getter]
    fn k(&self) -> Option<usize> {
        self.inner.cone.k
    }

    #[getter]
    fn chi(&self) -> Option<usize> {
        self.inner.cone.chi
    }

    #[getter]
    fn l(&self) -> usize {
        self.inner.cone.l
    }

    #[getter]
    fn verdict(&self) -> String {
        kebab(&self.inner.cone.verdict)
    }

    #[getter]
    fn status(&self) -> String {
        kebab(&self.inner.status)
    }

    #[getter]
    fn exit_code(&self) -> i32 {
        self.inner.status.exit_code()
    }

    /// `"exact-zero"`, `"order:N"` or `"at-least:N"`; `None` without a transversal order.
    #[getter]
    fn approximation_order(&self) -> Option<String> {
        self.inner.cone.approximation.as_ref().map(|a| match a.order {
            ApproxOrder::ExactZero => "exact-zero".to_string(),
            ApproxOrder::Order(n) => format!("order:{n}"),
            ApproxOrder::AtLeast(n) => format!("at-least:{n}"),
        })
    }

    #[getter]
    fn max_newton_residual(&self) -> Option<f64> {
        self.inner.newton.first().map(|n| n.max_residual_g)
    }

    #[getter]
    fn degree_signs(&self) -> Option<(Option<i8>, Option<i8>)> {
        self.inner.degree_signs.as_ref().map(|s| (s.positive, s.negative))
    }

    /// Fitted log-log slope of a trace column, if the fit succeeded.
    fn slope(&self, column: &str) -> Option<f64> {
        self.inner.fit(column).map(|f| f.slope)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(transversal={}, k={}, chi={}, l={}, verdict='{}')",
            py_bool(self.inner.cone.transversal),
            py_opt(self.inner.cone.k),
            py_opt(self.inner.cone.chi),
            self.inner.cone.l,
            kebab(&self.inner.cone.verdict)
        )
    }
}

/// Outcome of the identity suites.
#[pyclass(name = "SuiteSummary", module = "kcone_py")]
struct PySuiteSummary {
    inner: SuiteReport,
}

#[pymethods]
impl PySuiteSummary {
    #[getter]
    fn all_hold(&self) -> bool {
        self.inner.all_hold
    }

    #[getter]
    fn instances(&self) -> usize {
        self.inner.instances
    }

    /// `(name, checked, vacuous, failed)` per suite.
    fn suites(&self) -> Vec<(String, usize, usize, usize)> {
        self.inner.suites.iter().map(|s| (s.name.clone(), s.checked, s.vacuous, s.failed)).collect()
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).unwrap_or_default()
    }
}

/// Analyze a problem and return its report.
#[pyfunction]
fn analyze(py: Python<'_>, problem: &PyProblem) -> PyResult<PyReport> {
    let p = problem.inner.clone();
    let text = p.to_json();
    let inner = py.detach(move || analyze_problem(&p, digest(text.as_bytes()))).map_err(to_py_err)?;
    Ok(PyReport { inner })
}

/// Run the exact identity suites on seeded random instances with `k = 1..=k`.
#[pyfunction]
#[pyo3(signature = (k = 3, count = 100, seed = 0))]
fn verify(py: Python<'_>, k: usize, count: usize, seed: u64) -> PyResult<PySuiteSummary> {
    let config = VerifyConfig { k_values: (1..=k).collect(), count, seed, ..VerifyConfig::default() };
    let inner = py.detach(move || run_suites(&config)).map_err(to_py_err)?;
    Ok(PySuiteSummary { inner })
}

/// Rate trace of a transversal problem as CSV text.
#[pyfunction]
#[pyo3(signature = (problem, grid = None))]
fn trace(py: Python<'_>, problem: &PyProblem, grid: Option<String>) -> PyResult<String> {
    let p = problem.inner.clone();
    let table = py.detach(move || trace_problem(&p, grid.as_deref())).map_err(to_py_err)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(to_py_err)?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// `μ = Σ χ_i − ord(G) + 1`.
#[pyfunction]
fn milnor_from_branches(chis: Vec<usize>, ord: usize) -> i64 {
    milnor(&chis, ord)
}

/// Names of the bundled problems.
#[pyfunction]
fn bundled_names() -> Vec<&'static str> {
    BUNDLED.to_vec()
}

/// Add every class and function of the extension to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PySuiteSummary>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(trace, m)?)?;
    m.add_function(wrap_pyfunction!(milnor_from_branches, m)?)?;
    m.add_function(wrap_pyfunction!(bundled_names, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[pymodule]
fn kcone_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kcone::analysis::Verdict;

    #[test]
    fn python_literals() {
        assert_eq!(py_opt(Some(3)), "3");
        assert_eq!(py_opt(None), "None");
        assert_eq!(py_bool(true), "True");
        assert_eq!(kebab(&Verdict::NotApplicable), "not-applicable");
    }
}
