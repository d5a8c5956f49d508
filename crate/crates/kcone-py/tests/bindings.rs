use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "kcone_py").unwrap();
        kcone_py::register(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("kcone_py", m).unwrap();
        f(py, &globals);
    });
}

fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) {
    let code = std::ffi::CString::new(code).unwrap();
    py.run(&code, Some(globals), None).unwrap_or_else(|e| panic!("{e}"));
}

#[test]
fn analyze_bundled_pitchfork() {
    with_module(|py, g| {
        run(
            py,
            g,
            "r = kcone_py.analyze(kcone_py.Problem.bundled('pitchfork'))\n\
             assert (r.k, r.chi, r.l, r.verdict) == (1, 1, 1, 'bifurcation')\n\
             assert r.approximation_order == 'exact-zero'\n\
             assert repr(r) == \"Report(transversal=True, k=1, chi=1, l=1, verdict='bifurcation')\"",
        );
    });
}

#[test]
fn input_errors_raise_value_error() {
    with_module(|py, g| {
        run(
            py,
            g,
            "try:\n    kcone_py.Problem.from_json('[')\nexcept ValueError as e:\n    assert 'line 1' in str(e)\nelse:\n    raise AssertionError('accepted')",
        );
        run(py, g, "try:\n    kcone_py.Problem.bundled('nope')\nexcept ValueError:\n    pass\nelse:\n    raise AssertionError('accepted')");
    });
}

#[test]
fn not_transversal_report() {
    with_module(|py, g| {
        run(
            py,
            g,
            "p = kcone_py.Problem.from_json('{\"n\":2,\"m\":1,\"map\":[[{\"coef\":\"1\",\"exp\":[0,2]}]],\"curve\":[[\"1\",\"0\"]],\"k_max\":2}')\n\
             r = kcone_py.analyze(p)\n\
             assert not r.transversal and r.k is None\n\
             assert r.status == 'not-transversal' and r.exit_code == 1",
        );
    });
}

#[test]
fn helpers() {
    with_module(|py, g| {
        run(py, g, "assert kcone_py.milnor_from_branches([11, 3], 4) == 11");
        run(py, g, "assert 'sextic' in kcone_py.bundled_names()");
        run(py, g, "s = kcone_py.verify(k=1, count=3, seed=2)\nassert s.all_hold and s.instances == 5");
    });
}
