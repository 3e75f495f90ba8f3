//! Python bindings.
//!
//! Vectors are lists of floats and matrices are lists of rows.

use mpmf_core::dataset::BinaryDataset;
use mpmf_core::kernel::{median_heuristic_gamma, solve_kernel, KernelModel, KernelOptions, KernelSpec};
use mpmf_core::measures::{p_measure, q_objective, MeasureSpec, Rates};
use mpmf_core::moments::{estimate_moments, regularize, ClassMoments};
use mpmf_core::mpm::{solve_mpm, MpmOptions};
use mpmf_core::solver::{self, train_linear, AlphaGrid, LinearModel, SolverOptions, SolverResult};
use mpmf_core::synthetic;
use mpmf_core::Error;
use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(mpmf, SolverError, PyException);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::InvalidArgument(_)
        | Error::Parse { .. }
        | Error::DimensionMismatch { .. }
        | Error::DegenerateData(_)
        | Error::Json(_) => PyValueError::new_err(err.to_string()),
        other => SolverError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("all rows must have the same length"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn measure(name: &str) -> PyResult<MeasureSpec> {
    name.parse().map_err(to_py)
}

fn options(grid_points: Option<usize>, grid_step: Option<f64>, max_rounds: usize) -> PyResult<SolverOptions> {
    let mut o = SolverOptions {
        max_rounds,
        ..Default::default()
    };
    match (grid_points, grid_step) {
        (Some(_), Some(_)) => return Err(PyValueError::new_err("give grid_points or grid_step, not both")),
        (Some(n), None) => o.grid = AlphaGrid::Points(n),
        (None, Some(h)) => o.grid = AlphaGrid::Step(h),
        (None, None) => {}
    }
    o.validate().map_err(to_py)?;
    Ok(o)
}

fn binary(features: &[Vec<f64>], labels: Vec<i8>) -> PyResult<BinaryDataset> {
    BinaryDataset::new(matrix(features)?, labels).map_err(to_py)
}

/// First and second moments of both classes.
#[pyclass(name = "Moments", module = "mpmf", frozen)]
struct PyMoments {
    inner: ClassMoments,
}

#[pymethods]
impl PyMoments {
    #[new]
    fn new(mu_p: Vec<f64>, sigma_p: Vec<Vec<f64>>, mu_n: Vec<f64>, sigma_n: Vec<Vec<f64>>, p: f64) -> PyResult<Self> {
        let inner = ClassMoments::new(
            DVector::from_vec(mu_p),
            matrix(&sigma_p)?,
            DVector::from_vec(mu_n),
            matrix(&sigma_n)?,
            p,
        )
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Sample moments of ±1-labelled rows, with relative diagonal jitter.
    #[staticmethod]
    #[pyo3(signature = (features, labels, jitter = 1e-8))]
    fn estimate(features: Vec<Vec<f64>>, labels: Vec<i8>, jitter: f64) -> PyResult<Self> {
        let m = estimate_moments(&binary(&features, labels)?).map_err(to_py)?;
        Ok(Self {
            inner: regularize(&m, jitter).map_err(to_py)?,
        })
    }

    /// The two-dimensional benchmark moments.
    #[staticmethod]
    fn synthetic(p: f64) -> PyResult<Self> {
        Ok(Self {
            inner: synthetic::synthetic_moments(p).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ClassMoments::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn mu_p(&self) -> Vec<f64> {
        self.inner.mu_p().iter().copied().collect()
    }

    #[getter]
    fn mu_n(&self) -> Vec<f64> {
        self.inner.mu_n().iter().copied().collect()
    }

    #[getter]
    fn sigma_p(&self) -> Vec<Vec<f64>> {
        rows(self.inner.sigma_p())
    }

    #[getter]
    fn sigma_n(&self) -> Vec<Vec<f64>> {
        rows(self.inner.sigma_n())
    }

    fn __repr__(&self) -> String {
        format!("Moments(dim={}, p={})", self.inner.dim(), self.inner.p())
    }
}

/// Linear classifier `sign(w'x − b)`.
#[pyclass(name = "LinearModel", module = "mpmf", frozen)]
struct PyLinearModel {
    inner: LinearModel,
}

#[pymethods]
impl PyLinearModel {
    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.w.iter().copied().collect()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.bias
    }

    #[getter]
    fn measure(&self) -> String {
        self.inner.measure.to_string()
    }

    #[getter]
    fn alpha_p(&self) -> f64 {
        self.inner.alpha_p
    }

    #[getter]
    fn alpha_n(&self) -> f64 {
        self.inner.alpha_n
    }

    #[getter]
    fn q_value(&self) -> f64 {
        self.inner.q_value
    }

    fn score(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.score(&DVector::from_vec(x)).map_err(to_py)
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<i8> {
        self.inner.predict(&DVector::from_vec(x)).map_err(to_py)
    }

    fn scores(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.scores(&matrix(&features)?).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "LinearModel(measure={}, alpha_p={:.4}, alpha_n={:.4}, q={:.6})",
            self.inner.measure, self.inner.alpha_p, self.inner.alpha_n, self.inner.q_value
        )
    }
}

/// Kernel classifier over stored support points.
#[pyclass(name = "KernelModel", module = "mpmf", frozen)]
struct PyKernelModel {
    inner: KernelModel,
}

#[pymethods]
impl PyKernelModel {
    #[getter]
    fn kernel(&self) -> String {
        self.inner.kernel.to_string()
    }

    #[getter]
    fn dual_weights(&self) -> Vec<f64> {
        self.inner.dual_weights.iter().copied().collect()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.bias
    }

    #[getter]
    fn alpha_p(&self) -> f64 {
        self.inner.alpha_p
    }

    #[getter]
    fn alpha_n(&self) -> f64 {
        self.inner.alpha_n
    }

    #[getter]
    fn q_value(&self) -> f64 {
        self.inner.q_value
    }

    fn score(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.score(&DVector::from_vec(x)).map_err(to_py)
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<i8> {
        self.inner.predict(&DVector::from_vec(x)).map_err(to_py)
    }

    fn scores(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.scores(&matrix(&features)?).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("KernelModel(kernel={}, support={})", self.inner.kernel, self.inner.dual_weights.len())
    }
}

/// Solver output with its per-round trace.
#[pyclass(name = "SolverResult", module = "mpmf", frozen)]
struct PySolverResult {
    inner: SolverResult,
}

#[pymethods]
impl PySolverResult {
    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.w.iter().copied().collect()
    }

    #[getter]
    fn alpha_p(&self) -> f64 {
        self.inner.alpha_p
    }

    #[getter]
    fn alpha_n(&self) -> f64 {
        self.inner.alpha_n
    }

    #[getter]
    fn q_value(&self) -> f64 {
        self.inner.q_value
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.inner.rounds()
    }

    /// One dict per round.
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .trace
            .records
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("round", r.round)?;
                d.set_item("alpha_p", r.alpha_p)?;
                d.set_item("alpha_n", r.alpha_n)?;
                d.set_item("q_before", r.q_before)?;
                d.set_item("q_after", r.q_after)?;
                d.set_item("lambda", r.lambda)?;
                d.set_item("inner_steps", r.inner_steps)?;
                Ok(d)
            })
            .collect()
    }

    fn trace_csv(&self) -> String {
        self.inner.trace.to_csv()
    }
}

/// Trains a linear model for `measure` from class moments.
#[pyfunction]
#[pyo3(signature = (moments, measure = "f1", grid_points = None, grid_step = None, max_rounds = 200))]
fn train(
    moments: &PyMoments,
    measure: &str,
    grid_points: Option<usize>,
    grid_step: Option<f64>,
    max_rounds: usize,
) -> PyResult<(PyLinearModel, PySolverResult)> {
    let spec = self::measure(measure)?;
    let opts = options(grid_points, grid_step, max_rounds)?;
    let (model, result) = train_linear(&moments.inner, spec, &opts).map_err(to_py)?;
    Ok((PyLinearModel { inner: model }, PySolverResult { inner: result }))
}

/// Estimates moments from ±1-labelled rows and trains a linear model.
#[pyfunction]
#[pyo3(signature = (features, labels, measure = "f1", jitter = 1e-8, max_rounds = 200))]
fn fit(features: Vec<Vec<f64>>, labels: Vec<i8>, measure: &str, jitter: f64, max_rounds: usize) -> PyResult<PyLinearModel> {
    let m = PyMoments::estimate(features, labels, jitter)?;
    Ok(train(&m, measure, None, None, max_rounds)?.0)
}

/// Trains a kernel model. `kernel` is `linear`, `rbf`, `rbf:<gamma>` or
/// `poly:<degree>[:<coef0>]`; bare `rbf` uses the median heuristic.
#[pyfunction]
#[pyo3(signature = (features, labels, kernel = "rbf", measure = "f1", subsample = Some(200), seed = 0, ridge = 0.0))]
fn fit_kernel(
    features: Vec<Vec<f64>>,
    labels: Vec<i8>,
    kernel: &str,
    measure: &str,
    subsample: Option<usize>,
    seed: u64,
    ridge: f64,
) -> PyResult<PyKernelModel> {
    let data = binary(&features, labels)?;
    let spec = if kernel.eq_ignore_ascii_case("rbf") {
        KernelSpec::rbf(median_heuristic_gamma(data.features(), seed).map_err(to_py)?).map_err(to_py)?
    } else {
        kernel.parse().map_err(to_py)?
    };
    let kopts = KernelOptions { subsample, seed, ridge };
    let (model, _) =
        solve_kernel(&spec, &data, self::measure(measure)?, &SolverOptions::default(), &kopts).map_err(to_py)?;
    Ok(PyKernelModel { inner: model })
}

/// Accuracy-rate baseline; returns the model and `α*`.
#[pyfunction]
fn fit_mpm(moments: &PyMoments) -> PyResult<(PyLinearModel, f64)> {
    let r = solve_mpm(&moments.inner, &MpmOptions::default()).map_err(to_py)?;
    let m = r.to_model();
    Ok((PyLinearModel { inner: m.model }, m.alpha_star))
}

/// Rate search alone at `A`, `B`, `C`; returns `(α_P, α_N, Q)`.
#[pyfunction]
#[pyo3(signature = (a, b, c, measure, p, grid_points = 4096))]
fn alpha_step(a: f64, b: f64, c: f64, measure: &str, p: f64, grid_points: usize) -> PyResult<(f64, f64, f64)> {
    let opts = options(Some(grid_points), None, 200)?;
    let pair = solver::alpha_step(a, b, c, self::measure(measure)?, p, &opts).map_err(to_py)?;
    Ok((pair.alpha_p, pair.alpha_n, pair.q))
}

/// Score to maximize at error rates `fnr`, `fpr`; `None` when undefined.
#[pyfunction]
fn measure_value(measure: &str, fnr: f64, fpr: f64, p: f64) -> PyResult<Option<f64>> {
    let rates = Rates::from_errors(fnr, fpr).map_err(to_py)?;
    let v = p_measure(self::measure(measure)?, &rates, p).map_err(to_py)?;
    Ok((!v.degenerate).then_some(v.value))
}

/// Objective to minimize at error rates `fnr`, `fpr`.
#[pyfunction]
fn objective(measure: &str, fnr: f64, fpr: f64, p: f64) -> PyResult<f64> {
    q_objective(self::measure(measure)?, fnr, fpr, p).map_err(to_py)
}

#[pyfunction]
fn kappa(alpha: f64) -> PyResult<f64> {
    solver::kappa(alpha).map_err(to_py)
}

/// Benchmark rows `(p, beta, alpha_p, alpha_n, q)`.
#[pyfunction]
fn synthetic_table() -> PyResult<Vec<(f64, f64, f64, f64, f64)>> {
    let table = synthetic::synthetic_table(&synthetic::table_options()).map_err(to_py)?;
    Ok(table.iter().map(|r| (r.p, r.beta, r.alpha_p, r.alpha_n, r.q_value)).collect())
}

#[pymodule]
fn mpmf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_class::<PyMoments>()?;
    m.add_class::<PyLinearModel>()?;
    m.add_class::<PyKernelModel>()?;
    m.add_class::<PySolverResult>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mpm, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_step, m)?)?;
    m.add_function(wrap_pyfunction!(measure_value, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(kappa, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_table, m)?)?;
    Ok(())
}
