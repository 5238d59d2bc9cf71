use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::wrap_pymodule;

fn run(script: &str) {
    Python::initialize();
    Python::attach(|py| {
        let module = wrap_pymodule!(dihedral_mra_py::dihedral_mra_py)(py);
        let sys = py.import("sys").unwrap();
        sys.getattr("modules").unwrap().set_item("dihedral_mra", &module).unwrap();
        let globals = PyDict::new(py);
        let code = CString::new(script).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python script failed");
        }
    });
}

#[test]
fn exact_moments_round_trip() {
    run(r#"
import dihedral_mra as dm
x = dm.sample_signal(7, seed=2)
p, q = dm.sample_distribution(7, seed=2)
m1, m2 = dm.analytic_moments(x, p, q)
assert len(m2) == 7 and all(len(r) == 7 for r in m2)
fit = dm.invert(m1, m2)
assert fit["candidates"] <= 14
assert dm.relative_error(fit["x"], x) < 1e-6
assert abs(sum(fit["p"]) + sum(fit["q"]) - 1.0) < 1e-9
"#);
}

#[test]
fn observations_and_estimators() {
    run(r#"
import dihedral_mra as dm
x = dm.sample_signal(6, seed=4)
p, q = dm.sample_distribution(6, seed=4)
obs = dm.Observations.generate(x, p, q, n=1500, sigma=0.1, seed=5)
assert len(obs) == 1500 and obs.signal_len == 6 and obs.sigma == 0.1
assert repr(obs).startswith("Observations(")
m1, m2, s2 = dm.empirical_moments(obs)
assert len(m1) == 6 and abs(s2 - 0.01) < 1e-15
est = dm.estimate(obs, "em", seed=1)
assert dm.relative_error(est["x"], x) < 0.05
copy = dm.Observations.from_rows(obs.rows(), 0.1)
assert copy.row(3) == obs.row(3) and copy.true_signal is None
"#);
}

#[test]
fn errors_become_python_exceptions() {
    run(r#"
import dihedral_mra as dm
def raises(exc, f, *a, **k):
    try:
        f(*a, **k)
    except exc:
        return
    raise AssertionError("no exception")
raises(ValueError, dm.sample_signal, 2)
raises(ValueError, dm.relative_error, [1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
raises(ValueError, dm.invert, [1.0, 2.0, 3.0], [[1.0, 0.0], [0.0, 1.0]])
raises(OSError, dm.Observations.load, "/nonexistent/obs.bin")
obs = dm.Observations.from_rows([[1.0, 2.0, 3.0]], 0.0)
raises(ValueError, obs.row, 5)
raises(ValueError, dm.estimate, obs, "bogus")
"#);
}
