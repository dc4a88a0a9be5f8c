//! Python bindings for `mca-core`.
//!
//! Exposes problem instances, binary allocations, the SGPA solver, the
//! baselines, the capped-simplex normalization and the Fig. 1 experiment.
//! Core errors surface as `ValueError`, except an exceeded oracle budget,
//! which raises `mca.BudgetExceededError`.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mca_core::baselines::{self, OracleBudget};
use mca_core::simharness::{self, CapSpec, GenParams, WeightMode};
use mca_core::{sgpa, Error};

create_exception!(mca, BudgetExceededError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::BudgetExceeded { .. } => BudgetExceededError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn nest2<T: Copy>(flat: &[T], cols: usize) -> Vec<Vec<T>> {
    flat.chunks(cols).map(<[T]>::to_vec).collect()
}

fn nest3<T: Copy>(flat: &[T], mid: usize, inner: usize) -> Vec<Vec<Vec<T>>> {
    flat.chunks(mid * inner).map(|c| nest2(c, inner)).collect()
}

/// Problem data: weights, utilities `phi[k][m][n]` and CC caps.
#[pyclass(name = "ProblemInstance", module = "mca", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: mca_core::ProblemInstance,
}

#[pymethods]
impl PyInstance {
    #[new]
    fn new(weights: Vec<f64>, phi: Vec<Vec<Vec<f64>>>, ue_cc_caps: Vec<usize>, system_cc_cap: usize) -> PyResult<Self> {
        let inner = mca_core::ProblemInstance::new(weights, phi, ue_cc_caps, system_cc_cap).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = mca_core::ProblemInstance::from_json(text).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    /// `(K, M, N)`.
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn phi(&self) -> Vec<Vec<Vec<f64>>> {
        let (_, m, n) = self.inner.dims();
        nest3(self.inner.utilities(), m, n)
    }

    #[getter]
    fn ue_cc_caps(&self) -> Vec<usize> {
        self.inner.ue_cc_caps().to_vec()
    }

    #[getter]
    fn system_cc_cap(&self) -> usize {
        self.inner.system_cc_cap()
    }

    fn __repr__(&self) -> String {
        let (k, m, n) = self.inner.dims();
        format!("ProblemInstance(K={k}, M={m}, N={n}, M0={})", self.inner.system_cc_cap())
    }
}

/// 0/1 allocation with `alpha[k][m][n]`, `beta[k][m]`, `gamma[m]`.
#[pyclass(name = "BinaryAllocation", module = "mca", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAllocation {
    inner: mca_core::BinaryAllocation,
}

fn as_int(v: &[bool]) -> Vec<u8> {
    v.iter().map(|&b| u8::from(b)).collect()
}

#[pymethods]
impl PyAllocation {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| to_py(e.into()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn alpha(&self) -> Vec<Vec<Vec<u8>>> {
        nest3(&as_int(&self.inner.alpha), self.inner.num_ccs, self.inner.num_rbs)
    }

    #[getter]
    fn beta(&self) -> Vec<Vec<u8>> {
        nest2(&as_int(&self.inner.beta), self.inner.num_ccs)
    }

    #[getter]
    fn gamma(&self) -> Vec<u8> {
        as_int(&self.inner.gamma)
    }

    /// UE holding RB `n` of CC `m`, or `None`.
    fn owner(&self, m: usize, n: usize) -> Option<usize> {
        self.inner.owner(m, n)
    }
}

/// Draws a random instance with capacity utilities (Eq. 10).
#[pyfunction]
#[pyo3(signature = (K, M, N, Mk, M0_limit, seed=0, snr_db_range=(-10.0, 20.0), weights="simplex"))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn sample_instance(
    K: usize,
    M: usize,
    N: usize,
    Mk: usize,
    M0_limit: usize,
    seed: u64,
    snr_db_range: (f64, f64),
    weights: &str,
) -> PyResult<PyInstance> {
    let weight_mode = match weights {
        "simplex" => WeightMode::UniformSimplex,
        "equal" => WeightMode::Equal,
        other => return Err(PyValueError::new_err(format!("weights must be 'simplex' or 'equal', got '{other}'"))),
    };
    let params = GenParams {
        num_ues: K,
        num_ccs: M,
        num_rbs: N,
        ue_cc_cap: CapSpec::Uniform(Mk),
        system_cc_cap_limit: M0_limit,
        snr_db_range,
        weight_mode,
        seed,
    };
    let inner = simharness::sample_instance(&params).map_err(to_py)?;
    Ok(PyInstance { inner })
}

/// Runs SGPA and returns a dict with `allocation`, `wsu`, `iterations_run`,
/// `converged`, the final relaxed iterate and, if requested, the trace.
#[pyfunction]
#[pyo3(signature = (instance, max_iterations=20, snap_tolerance=1e-9, zero_tolerance=1e-12, convergence_tolerance=1e-10, record_trace=false))]
fn solve_sgpa<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    max_iterations: usize,
    snap_tolerance: f64,
    zero_tolerance: f64,
    convergence_tolerance: f64,
    record_trace: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = mca_core::SgpaConfig {
        max_iterations,
        snap_tolerance,
        zero_tolerance,
        convergence_tolerance,
        record_trace,
        ..Default::default()
    };
    let res = sgpa::solve(&instance.inner, &cfg).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("wsu", res.wsu)?;
    out.set_item("iterations_run", res.iterations_run)?;
    out.set_item("converged", res.converged)?;
    let r = &res.relaxed;
    out.set_item("alpha", nest3(&r.alpha, r.num_ccs, r.num_rbs))?;
    out.set_item("beta", nest2(&r.beta, r.num_ccs))?;
    out.set_item("gamma", r.gamma.clone())?;
    if let Some(trace) = &res.trace {
        let rows: Vec<(usize, f64, f64)> = trace.iter().map(|t| (t.iteration, t.relaxed_wsu, t.max_change)).collect();
        out.set_item("trace", rows)?;
    }
    out.set_item("allocation", PyAllocation { inner: res.binary })?;
    Ok(out)
}

/// LP-relaxation heuristic baseline.
#[pyfunction]
fn heuristic(instance: &PyInstance) -> PyResult<PyAllocation> {
    let inner = baselines::heuristic_solve(&instance.inner).map_err(to_py)?;
    Ok(PyAllocation { inner })
}

/// Winner-takes-all per RB; returns `(allocation, caps_respected)`.
#[pyfunction]
fn greedy(instance: &PyInstance) -> (PyAllocation, bool) {
    let out = baselines::greedy_unconstrained(&instance.inner);
    (PyAllocation { inner: out.allocation }, out.caps_respected)
}

/// Exhaustive optimum; returns `(allocation, wsu)`.
#[pyfunction]
#[pyo3(signature = (instance, max_enumerations=10_000_000))]
fn oracle(instance: &PyInstance, max_enumerations: u64) -> PyResult<(PyAllocation, f64)> {
    let (inner, wsu) =
        baselines::brute_force_oracle(&instance.inner, OracleBudget { max_enumerations }).map_err(to_py)?;
    Ok((PyAllocation { inner }, wsu))
}

#[pyfunction]
fn evaluate_wsu(instance: &PyInstance, allocation: &PyAllocation) -> PyResult<f64> {
    mca_core::evaluate_wsu(&instance.inner, &allocation.inner).map_err(to_py)
}

/// True when the allocation satisfies C1–C3 and consistency.
#[pyfunction]
fn is_feasible(instance: &PyInstance, allocation: &PyAllocation) -> PyResult<bool> {
    let report = mca_core::check_feasibility(&instance.inner, &allocation.inner).map_err(to_py)?;
    Ok(report.is_feasible())
}

/// Solves `sum(min(1, v / kappa)) = cap`; returns `(kappa, x)`.
#[pyfunction]
fn normalize(v: Vec<f64>, cap: usize) -> PyResult<(f64, Vec<f64>)> {
    let sol = mca_core::capped_simplex_normalize(&v, cap).map_err(to_py)?;
    Ok((sol.kappa, sol.x))
}

type Fig1Output = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

/// Isolated `beta` experiment; returns `(rates, beta_rows, kappas)`.
#[pyfunction]
#[pyo3(signature = (M=20, Mk=3, iterations=200, seed=0))]
#[allow(non_snake_case)]
fn fig1(M: usize, Mk: usize, iterations: usize, seed: u64) -> PyResult<Fig1Output> {
    let t = simharness::fig1_experiment(M, Mk, iterations, seed).map_err(to_py)?;
    Ok((t.rates, t.beta, t.kappa))
}

#[pymodule]
fn mca(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyAllocation>()?;
    m.add("BudgetExceededError", m.py().get_type::<BudgetExceededError>())?;
    m.add_function(wrap_pyfunction!(sample_instance, m)?)?;
    m.add_function(wrap_pyfunction!(solve_sgpa, m)?)?;
    m.add_function(wrap_pyfunction!(heuristic, m)?)?;
    m.add_function(wrap_pyfunction!(greedy, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_wsu, m)?)?;
    m.add_function(wrap_pyfunction!(is_feasible, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(fig1, m)?)?;
    Ok(())
}
