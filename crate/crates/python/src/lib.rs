//! Python bindings. Signals are lists of floats; distributions are `(p, q)` pairs of
//! lists over rotations and reflections.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dihedral_mra::bench::{self, Method, SweepSpec};
use dihedral_mra::estimators::EstimatorConfig;
use dihedral_mra::inversion::{invert as invert_moments, InversionOptions};
use dihedral_mra::{
    moments, simulator, DihedralElement, Error, GroupDistribution, MomentPair, ObservationSet,
    Signal,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn signal(values: Vec<f64>) -> PyResult<Signal> {
    Signal::new(values).map_err(to_py)
}

fn distribution(p: Vec<f64>, q: Vec<f64>) -> PyResult<GroupDistribution> {
    GroupDistribution::new(p, q).map_err(to_py)
}

fn square(flat: &[f64], l: usize) -> Vec<Vec<f64>> {
    flat.chunks(l).map(|r| r.to_vec()).collect()
}

fn flatten(rows: Vec<Vec<f64>>, l: usize) -> PyResult<Vec<f64>> {
    if rows.len() != l || rows.iter().any(|r| r.len() != l) {
        return Err(PyValueError::new_err(format!("m2 must be {l}×{l}")));
    }
    Ok(rows.into_iter().flatten().collect())
}

/// A set of noisy observations with optional ground truth.
#[pyclass(name = "Observations", frozen)]
struct PyObservations {
    inner: ObservationSet,
}

#[pymethods]
impl PyObservations {
    #[staticmethod]
    #[pyo3(signature = (x, p, q, n, sigma, seed = 0))]
    fn generate(x: Vec<f64>, p: Vec<f64>, q: Vec<f64>, n: usize, sigma: f64, seed: u64) -> PyResult<Self> {
        let inner = simulator::generate(&signal(x)?, &distribution(p, q)?, n, sigma, seed)
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>, sigma: f64) -> PyResult<Self> {
        let l = rows.first().map_or(0, |r| r.len());
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let inner = ObservationSet::new(data, l, sigma, 0).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: simulator::load(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        simulator::save(&self.inner, path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn signal_len(&self) -> usize {
        self.inner.signal_len()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i).to_vec())
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(|r| r.to_vec()).collect()
    }

    #[getter]
    fn true_signal(&self) -> Option<Vec<f64>> {
        self.inner.true_signal().map(|s| s.as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Observations(n={}, L={}, sigma={})",
            self.inner.len(),
            self.inner.signal_len(),
            self.inner.sigma()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (length, seed = 0))]
fn sample_signal(length: usize, seed: u64) -> PyResult<Vec<f64>> {
    Ok(simulator::sample_signal(length, seed).map_err(to_py)?.into_vec())
}

#[pyfunction]
#[pyo3(signature = (length, seed = 0))]
fn sample_distribution(length: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let d = simulator::sample_distribution(length, seed).map_err(to_py)?;
    Ok((d.p().to_vec(), d.q().to_vec()))
}

/// `g·x` for `g = r^rotation` or `r^rotation s`.
#[pyfunction]
#[pyo3(signature = (x, rotation, reflected = false))]
fn act(x: Vec<f64>, rotation: i64, reflected: bool) -> PyResult<Vec<f64>> {
    let x = signal(x)?;
    let g = DihedralElement::new(x.len(), rotation, reflected);
    Ok(g.apply(&x).map_err(to_py)?.into_vec())
}

/// `(m1, m2)` of the observation model with noise level `sigma`.
#[pyfunction]
#[pyo3(signature = (x, p, q, sigma = 0.0))]
fn analytic_moments(x: Vec<f64>, p: Vec<f64>, q: Vec<f64>, sigma: f64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let x = signal(x)?;
    let l = x.len();
    let m = MomentPair::analytic(&x, &distribution(p, q)?, sigma).map_err(to_py)?;
    Ok((m.m1, square(&m.m2, l)))
}

/// `(m1, m2, sigma2)` averaged over the observations.
#[pyfunction]
fn empirical_moments(obs: &PyObservations) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, f64)> {
    let m = moments::empirical_moments(&obs.inner).map_err(to_py)?;
    let l = m.order();
    Ok((m.m1, square(&m.m2, l), m.sigma2))
}

#[pyfunction]
fn estimate_sigma2(obs: &PyObservations) -> PyResult<f64> {
    moments::estimate_sigma2(&obs.inner).map_err(to_py)
}

/// Recovers `(x, p, q)` up to the group from debiased moments.
#[pyfunction]
fn invert<'py>(py: Python<'py>, m1: Vec<f64>, m2: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let l = m1.len();
    let m = MomentPair {
        m2: flatten(m2, l)?,
        m1,
        sigma2: 0.0,
    };
    let (cands, sel) = invert_moments(&m, &InversionOptions::default()).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("x", sel.signal.into_vec())?;
    out.set_item("p", sel.distribution.p().to_vec())?;
    out.set_item("q", sel.distribution.q().to_vec())?;
    out.set_item("residual", sel.residual)?;
    out.set_item("candidates", cands.len())?;
    Ok(out)
}

/// Runs `method` (`"sync"`, `"em"`, `"mom"` or `"invert"`) on the observations.
#[pyfunction]
#[pyo3(signature = (obs, method, sigma = None, seed = 0, lam = None))]
fn estimate<'py>(
    py: Python<'py>,
    obs: &PyObservations,
    method: &str,
    sigma: Option<f64>,
    seed: u64,
    lam: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let method: Method = method.parse().map_err(to_py)?;
    let sigma = sigma.unwrap_or_else(|| obs.inner.sigma());
    let config = EstimatorConfig {
        seed,
        lambda: lam,
        ..Default::default()
    };
    let (x, iterations) =
        py.detach(|| bench::run_method(method, &obs.inner, sigma, &config)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("x", x.into_vec())?;
    out.set_item("iterations", iterations)?;
    Ok(out)
}

#[pyfunction]
fn relative_error(x_est: Vec<f64>, x_true: Vec<f64>) -> PyResult<f64> {
    bench::relative_error(&signal(x_est)?, &signal(x_true)?).map_err(to_py)
}

/// Runs an SNR sweep and returns one dict per trial record.
#[pyfunction]
#[pyo3(signature = (snr_grid, n, length, trials, methods, seed = 0))]
fn run_sweep<'py>(
    py: Python<'py>,
    snr_grid: Vec<f64>,
    n: usize,
    length: usize,
    trials: usize,
    methods: Vec<String>,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let methods = methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let spec = SweepSpec {
        snr_grid,
        n,
        signal_len: length,
        trials,
        methods,
        seed,
        ..Default::default()
    };
    let records = py.detach(|| bench::run_sweep(&spec)).map_err(to_py)?;
    records
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("method", r.method.name())?;
            d.set_item("snr", r.snr)?;
            d.set_item("trial", r.trial)?;
            d.set_item("rel_error", r.rel_error)?;
            d.set_item("iterations", r.iterations)?;
            d.set_item("status", r.status)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "dihedral_mra")]
pub fn dihedral_mra_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyObservations>()?;
    m.add_function(wrap_pyfunction!(sample_signal, m)?)?;
    m.add_function(wrap_pyfunction!(sample_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(act, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_moments, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_moments, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_sigma2, m)?)?;
    m.add_function(wrap_pyfunction!(invert, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
