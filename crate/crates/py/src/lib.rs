//! Python bindings: parameters, simulation, closed-form moments and statistics.
//!
//! Matrices cross the boundary as lists of rows; complex eigenvalues as Python `complex`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ringphs::analytic::{self, GaussianMoments};
use ringphs::model;
use ringphs::sde::{self, SimConfig};
use ringphs::spectral;
use ringphs::stats;

fn py_err(e: ringphs::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
}

#[pyclass(name = "ModelParams", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyModelParams {
    inner: model::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (n_agents, ring_length, alpha, beta, sigma, kappa = 2.0))]
    fn new(n_agents: usize, ring_length: f64, alpha: f64, beta: f64, sigma: f64, kappa: f64) -> PyResult<Self> {
        let inner = model::ModelParams::new(n_agents, ring_length, alpha, beta, sigma, kappa).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Built-in scenario `s1`, `s2` or `s3`.
    #[staticmethod]
    fn scenario(name: &str) -> PyResult<Self> {
        let (alpha, kappa) = match name {
            "s1" => (0.1, 2.0),
            "s2" => (1.0, 2.0),
            "s3" => (1.0, 4.0),
            _ => return Err(PyValueError::new_err(format!("unknown scenario {name:?}"))),
        };
        Self::new(20, 501.0, alpha, 1.0, 1.0, kappa)
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.inner.n_agents
    }
    #[getter]
    fn ring_length(&self) -> f64 {
        self.inner.ring_length
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ModelParams(n_agents={}, ring_length={}, alpha={}, beta={}, sigma={}, kappa={})",
            p.n_agents, p.ring_length, p.alpha, p.beta, p.sigma, p.kappa
        )
    }
}

#[pyclass(name = "State", from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: model::State,
}

#[pymethods]
impl PyState {
    #[new]
    fn new(q: Vec<f64>, p: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: model::State::new(q, p).map_err(py_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (params, velocity = 0.0))]
    fn uniform(params: &PyModelParams, velocity: f64) -> Self {
        Self {
            inner: model::State::uniform(&params.inner, velocity),
        }
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.q.clone()
    }

    #[getter]
    fn p(&self) -> Vec<f64> {
        self.inner.p.clone()
    }

    fn distances(&self, ring_length: f64) -> Vec<f64> {
        self.inner.distances(ring_length)
    }

    fn hamiltonian(&self, params: &PyModelParams) -> f64 {
        model::hamiltonian(&self.inner, &params.inner)
    }
}

fn moments_dict<'py>(py: Python<'py>, m: &GaussianMoments) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean", m.mean.as_slice().to_vec())?;
    d.set_item("cov", rows(&m.cov))?;
    match m.time {
        analytic::MomentTime::Finite(t) => d.set_item("time", t)?,
        analytic::MomentTime::Infinite => d.set_item("time", f64::INFINITY)?,
    }
    Ok(d)
}

/// Integrates the SDE. Returns `{"t": [...], "q": [[...]], "p": [[...]]}` (one row per recorded step).
#[pyfunction]
#[pyo3(signature = (params, n_steps, seed, dt = 1e-3, thinning = 1, replica = 0, initial = None))]
fn simulate<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    n_steps: u64,
    seed: u64,
    dt: f64,
    thinning: u64,
    replica: u32,
    initial: Option<PyState>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = SimConfig::new(dt, n_steps, seed).with_thinning(thinning).with_replica(replica);
    if let Some(s) = initial {
        config = config.with_initial(s.inner);
    }
    let p = params.inner;
    let traj = py.detach(|| sde::simulate(&p, &config)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("t", traj.times.clone())?;
    d.set_item("q", traj.states.iter().map(|s| s.q.clone()).collect::<Vec<_>>())?;
    d.set_item("p", traj.states.iter().map(|s| s.p.clone()).collect::<Vec<_>>())?;
    Ok(d)
}

/// One scheme step with explicit standard-normal noise.
#[pyfunction]
fn step(state: &PyState, params: &PyModelParams, dt: f64, noise: Vec<f64>) -> PyResult<PyState> {
    Ok(PyState {
        inner: sde::step(&state.inner, &params.inner, dt, &noise).map_err(py_err)?,
    })
}

#[pyfunction]
fn k_matrix(n: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&analytic::k_closed_form(n).map_err(py_err)?.0))
}

#[pyfunction]
fn k_matrix_spectral(n: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&analytic::k_spectral(n).map_err(py_err)?.0))
}

/// Drift eigenvalues, ordered `lambda_{j,1}` for all `j` then `lambda_{j,2}`.
#[pyfunction]
fn eigenvalues(params: &PyModelParams) -> PyResult<Vec<Complex64>> {
    Ok(spectral::analyze(&params.inner).map_err(py_err)?.eigenvalue_diagonal())
}

#[pyfunction]
fn limit_distribution<'py>(py: Python<'py>, params: &PyModelParams) -> PyResult<Bound<'py, PyDict>> {
    moments_dict(py, &analytic::limit_distribution(&params.inner).map_err(py_err)?)
}

fn moments_with<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    z0: Vec<f64>,
    t: f64,
    deviations: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner;
    let data = spectral::analyze(&p).map_err(py_err)?;
    let z0 = DVector::from_vec(z0);
    let m = if deviations {
        analytic::moments_x(&p, &data, &z0, t)
    } else {
        analytic::moments_z(&p, &data, &z0, t)
    }
    .map_err(py_err)?;
    moments_dict(py, &m)
}

/// Mean and covariance of `(Q(t), p(t))` from `z0 = (Q(0), p(0))`.
#[pyfunction]
fn moments_z<'py>(py: Python<'py>, params: &PyModelParams, z0: Vec<f64>, t: f64) -> PyResult<Bound<'py, PyDict>> {
    moments_with(py, params, z0, t, false)
}

/// Mean and covariance of `(Q(t), M p(t))`.
#[pyfunction]
fn moments_x<'py>(py: Python<'py>, params: &PyModelParams, z0: Vec<f64>, t: f64) -> PyResult<Bound<'py, PyDict>> {
    moments_with(py, params, z0, t, true)
}

/// `(E[V_p], E[V_Q])` in the stationary state.
#[pyfunction]
fn expected_stationary_variances(params: &PyModelParams) -> PyResult<(f64, f64)> {
    let v = analytic::expected_stationary_variances(&params.inner).map_err(py_err)?;
    Ok((v.velocity, v.distance))
}

#[pyfunction]
fn lyapunov_residual(params: &PyModelParams, cov: Vec<Vec<f64>>) -> PyResult<f64> {
    analytic::lyapunov_residual(&params.inner, &from_rows(cov)?).map_err(py_err)
}

/// `{"mean_velocity", "V_p", "V_Q", "D", "E"}` for one state.
#[pyfunction]
fn observables<'py>(py: Python<'py>, state: &PyState, params: &PyModelParams) -> PyResult<Bound<'py, PyDict>> {
    let o = stats::observables(&state.inner, &params.inner);
    let d = PyDict::new(py);
    d.set_item("mean_velocity", o.mean_velocity)?;
    d.set_item("V_p", o.velocity_variance)?;
    d.set_item("V_Q", o.distance_variance)?;
    d.set_item("D", o.velocity_deviation)?;
    d.set_item("E", o.distance_deviation)?;
    Ok(d)
}

#[pyfunction]
fn acf(values: Vec<f64>, max_lag: usize) -> PyResult<Vec<f64>> {
    stats::acf_values(&values, max_lag).map_err(py_err)
}

#[pyfunction]
fn mc_chi_squared(py: Python<'_>, cov: Vec<Vec<f64>>, n_samples: usize, seed: u64) -> PyResult<Vec<f64>> {
    let cov = from_rows(cov)?;
    py.detach(|| stats::mc_chi_squared(&cov, n_samples, seed)).map_err(py_err)
}

/// `(statistic, p_value)`.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = stats::ks_two_sample(&a, &b).map_err(py_err)?;
    Ok((r.statistic, r.p_value))
}

#[pymodule]
fn ringphs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyState>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(step, m)?)?;
    m.add_function(wrap_pyfunction!(k_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(k_matrix_spectral, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(limit_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(moments_z, m)?)?;
    m.add_function(wrap_pyfunction!(moments_x, m)?)?;
    m.add_function(wrap_pyfunction!(expected_stationary_variances, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_residual, m)?)?;
    m.add_function(wrap_pyfunction!(observables, m)?)?;
    m.add_function(wrap_pyfunction!(acf, m)?)?;
    m.add_function(wrap_pyfunction!(mc_chi_squared, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    Ok(())
}
