//! Python bindings. Vectors and matrices cross the boundary as plain lists
//! (row-major nested lists for matrices).

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use epilab::analysis::{self, OPERATING_BRANCH};
use epilab::design::{self, KypOutcome, Loss};
use epilab::dynamics::{self, Controller, CycleDetector};
use epilab::model::{self, EpileptorParams, FeedbackLaw, Mat6, OutputMap, State, Vec6};
use epilab::ode::SolverOptions;
use epilab::passivity::{self, RoaOptions};
use epilab::{presets, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::Parse(_)
        | Error::InvalidParameter(_)
        | Error::Dimension { .. }
        | Error::NotSymmetric(_)
        | Error::NonFinite(_)
        | Error::BadIndex(_)
        | Error::Unsupported(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_dmatrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix must be a non-empty list of equal-length rows"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn to_mat6(rows: &[Vec<f64>]) -> PyResult<Mat6> {
    let d = to_dmatrix(rows)?;
    if d.shape() != (6, 6) {
        return Err(PyValueError::new_err("expected a 6x6 matrix"));
    }
    Ok(Mat6::from_fn(|i, j| d[(i, j)]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn rows6(m: &Mat6) -> Vec<Vec<f64>> {
    (0..6).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn output_map(c: Option<[f64; 6]>) -> OutputMap {
    c.map_or_else(OutputMap::standard, OutputMap::new)
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "epilab")]
#[derive(Clone)]
struct Equilibrium {
    x_star: Vec<f64>,
    u_star: f64,
    residual_norm: f64,
    spectral_abscissa: f64,
    jacobian: Vec<Vec<f64>>,
    x1_negative: bool,
    x2_upper: bool,
}

#[pymethods]
impl Equilibrium {
    fn __repr__(&self) -> String {
        format!(
            "Equilibrium(x_star={:?}, abscissa={:.5})",
            self.x_star, self.spectral_abscissa
        )
    }
}

impl From<&analysis::Equilibrium> for Equilibrium {
    fn from(e: &analysis::Equilibrium) -> Self {
        Self {
            x_star: e.x_star.to_array().to_vec(),
            u_star: e.u_star,
            residual_norm: e.residual_norm,
            spectral_abscissa: e.spectral_abscissa,
            jacobian: rows6(&e.jacobian),
            x1_negative: e.branch_signature.0,
            x2_upper: e.branch_signature.1,
        }
    }
}

#[pyclass(frozen, get_all, module = "epilab")]
struct Trajectory {
    t: Vec<f64>,
    x: Vec<Vec<f64>>,
    u: Vec<f64>,
    y: Vec<f64>,
    n_seizures: Option<usize>,
    ictal_fraction: Option<f64>,
}

#[pymethods]
impl Trajectory {
    fn __len__(&self) -> usize {
        self.t.len()
    }

    fn __repr__(&self) -> String {
        format!("Trajectory(len={}, n_seizures={:?})", self.t.len(), self.n_seizures)
    }
}

#[pyclass(frozen, get_all, module = "epilab")]
struct Certificate {
    psd_margin: f64,
    dissipation_margin: f64,
    matching_residual: f64,
    strict: bool,
    valid: bool,
    degenerate: bool,
}

#[pymethods]
impl Certificate {
    fn __repr__(&self) -> String {
        format!(
            "Certificate(strict={}, psd_margin={:.3e}, dissipation_margin={:.3e}, matching_residual={:.3e})",
            self.strict, self.psd_margin, self.dissipation_margin, self.matching_residual
        )
    }
}

#[pyclass(frozen, get_all, module = "epilab")]
struct DesignResult {
    p: Vec<Vec<f64>>,
    c: Vec<f64>,
    objective: f64,
    max_violation: f64,
    off_diagonal_nonzeros: usize,
    iterations: usize,
}

#[pymethods]
impl DesignResult {
    fn __repr__(&self) -> String {
        format!("DesignResult(objective={:.6}, c={:?})", self.objective, self.c)
    }
}

impl From<design::DesignResult> for DesignResult {
    fn from(r: design::DesignResult) -> Self {
        Self {
            max_violation: r.max_violation(),
            off_diagonal_nonzeros: r.off_diagonal_nonzeros(),
            p: rows_of(&r.p),
            c: r.c.iter().copied().collect(),
            objective: r.objective_value,
            iterations: r.iterations,
        }
    }
}

#[pyclass(frozen, get_all, module = "epilab")]
struct RoaEstimate {
    rho: f64,
    radius: f64,
    status: &'static str,
    n_samples: usize,
    worst_margin: f64,
    failing_rho: Option<f64>,
    counterexample: Option<Vec<f64>>,
}

#[pymethods]
impl RoaEstimate {
    fn __repr__(&self) -> String {
        format!("RoaEstimate(rho={:.6e}, radius={:.6}, status={})", self.rho, self.radius, self.status)
    }
}

#[pyfunction]
#[pyo3(signature = (x, u = 0.0))]
fn vector_field(x: [f64; 6], u: f64) -> PyResult<Vec<f64>> {
    let f = model::vector_field(&Vec6::from(x), u, &EpileptorParams::default()).map_err(py_err)?;
    Ok(f.iter().copied().collect())
}

#[pyfunction]
fn jacobian(x: [f64; 6]) -> Vec<Vec<f64>> {
    rows6(&model::jacobian(&Vec6::from(x), &EpileptorParams::default()))
}

#[pyfunction]
fn find_equilibria(u_star: f64) -> PyResult<Vec<Equilibrium>> {
    let eqs = analysis::find_equilibria(u_star, &EpileptorParams::default(), None).map_err(py_err)?;
    Ok(eqs.iter().map(Equilibrium::from).collect())
}

/// Integrates from `x0`. Without `k` the input is the constant `u`; with
/// `k` the loop is closed around the operating-branch equilibrium at `u`.
#[pyfunction]
#[pyo3(signature = (x0, t_end, u = 0.0, k = None, c = None, rel_tol = 1e-8, abs_tol = 1e-10))]
fn simulate(
    py: Python<'_>,
    x0: [f64; 6],
    t_end: f64,
    u: f64,
    k: Option<f64>,
    c: Option<[f64; 6]>,
    rel_tol: f64,
    abs_tol: f64,
) -> PyResult<Trajectory> {
    let c = output_map(c);
    let params = EpileptorParams::default();
    let opts = SolverOptions::default().with_tolerances(rel_tol, abs_tol);
    let traj = py.detach(|| -> epilab::Result<_> {
        let controller = match k {
            None => Controller::Constant(u),
            Some(k) => {
                let eq = analysis::find_equilibria(u, &params, None)?
                    .into_iter()
                    .find(|e| e.branch() == OPERATING_BRANCH)
                    .ok_or_else(|| Error::InvalidParameter(format!("no operating-branch equilibrium at u = {u}")))?;
                Controller::feedback(FeedbackLaw::linear(u, k, c.eval(eq.x_star.vector()))?)
            }
        };
        let tr = dynamics::integrate(&State::new(x0)?, (0.0, t_end), &controller, &c, &params, &opts)?;
        let cycles = dynamics::detect_cycles(&tr, &CycleDetector::default()).ok();
        Ok((tr, cycles))
    });
    let (tr, cycles) = traj.map_err(py_err)?;
    Ok(Trajectory {
        x: tr.states.iter().map(|s| s.iter().copied().collect()).collect(),
        t: tr.times,
        u: tr.inputs,
        y: tr.outputs,
        n_seizures: cycles.as_ref().map(|r| r.n_seizures),
        ictal_fraction: cycles.map(|r| r.ictal_fraction),
    })
}

/// Spectral abscissa grid, `result[i][j]` at `(u_axis[i], k_axis[j])`;
/// `None` where the operating branch has no equilibrium.
#[pyfunction]
#[pyo3(signature = (u_axis, k_axis, c = None))]
fn stability_sweep(py: Python<'_>, u_axis: Vec<f64>, k_axis: Vec<f64>, c: Option<[f64; 6]>) -> PyResult<Vec<Vec<Option<f64>>>> {
    let c = output_map(c);
    let grid = py
        .detach(|| analysis::stability_sweep(&u_axis, &k_axis, &c, &EpileptorParams::default()))
        .map_err(py_err)?;
    Ok(grid.abscissa)
}

#[pyfunction]
fn verify_linear_passivity(a: Vec<Vec<f64>>, g: Vec<f64>, c: Vec<f64>, p: Vec<Vec<f64>>) -> PyResult<Certificate> {
    let cert = passivity::verify_linear_passivity(
        &to_dmatrix(&a)?,
        &DVector::from_vec(g),
        &DVector::from_vec(c),
        &to_dmatrix(&p)?,
    )
    .map_err(py_err)?;
    Ok(Certificate {
        psd_margin: cert.psd_margin,
        dissipation_margin: cert.dissipation_margin,
        matching_residual: cert.matching_residual,
        strict: cert.strict,
        valid: cert.is_valid(),
        degenerate: cert.degenerate,
    })
}

/// `(g^T c, passivation_possible)`.
#[pyfunction]
fn matching_obstruction(c: [f64; 6]) -> (f64, bool) {
    let o = passivity::matching_obstruction(&OutputMap::new(c));
    (o.gtc, o.passivation_possible)
}

/// Convex output design at `k = 0`: `min |Pg - target|_1`, or pure
/// feasibility when `target` is omitted.
#[pyfunction]
#[pyo3(signature = (a, target = None, delta = 1e-6))]
fn design_output(py: Python<'_>, a: Vec<Vec<f64>>, target: Option<[f64; 6]>, delta: f64) -> PyResult<DesignResult> {
    let a = to_mat6(&a)?;
    let loss = target.map_or(Loss::Zero, |t| Loss::l1_to(&OutputMap::new(t)));
    let r = py.detach(|| design::design_output(&a, &loss, delta, 0.0)).map_err(py_err)?;
    Ok(r.into())
}

#[pyfunction]
#[pyo3(signature = (a, eps = 1e-4, delta = 1e-6))]
fn solve_sparse_lyapunov(py: Python<'_>, a: Vec<Vec<f64>>, eps: f64, delta: f64) -> PyResult<DesignResult> {
    let a = to_dmatrix(&a)?;
    let r = py.detach(|| design::solve_sparse_lyapunov_n(&a, eps, delta)).map_err(py_err)?;
    Ok(r.into())
}

/// `P` with `Pg = c` satisfying the positive-real conditions, or `None`.
#[pyfunction]
fn kyp_feasibility(py: Python<'_>, a: Vec<Vec<f64>>, c: [f64; 6]) -> PyResult<Option<Vec<Vec<f64>>>> {
    let a = to_mat6(&a)?;
    match py.detach(|| design::kyp_feasibility(&a, &OutputMap::new(c))).map_err(py_err)? {
        KypOutcome::Feasible { p, .. } => Ok(Some(rows_of(&p))),
        KypOutcome::Infeasible { .. } => Ok(None),
    }
}

/// Operating point, output and storage of a built-in setup.
#[pyfunction]
fn preset(py: Python<'_>, name: &str) -> PyResult<Py<pyo3::types::PyDict>> {
    use pyo3::types::PyDict;
    let pr = presets::preset(name).map_err(py_err)?;
    let sys = pr.system(&EpileptorParams::default()).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("name", pr.name)?;
    d.set_item("u_star", pr.u_star)?;
    d.set_item("k", pr.k)?;
    d.set_item("c", pr.c.c.iter().copied().collect::<Vec<_>>())?;
    d.set_item("p", rows6(&pr.p))?;
    d.set_item("scale", pr.scale.name())?;
    d.set_item("x_star", sys.x_star.iter().copied().collect::<Vec<_>>())?;
    d.set_item("closed_loop_jacobian", rows6(&sys.jacobian()))?;
    d.set_item("rho", pr.rho)?;
    d.set_item("radius", pr.radius)?;
    Ok(d.unbind())
}

/// Region-of-attraction level for a preset's storage. With `rho` a single
/// level is checked; otherwise the largest falsification-free level is
/// searched for.
#[pyfunction]
#[pyo3(signature = (name, rho = None, n_samples = 100_000, n_ascent = 100, seed = 0))]
fn roa(py: Python<'_>, name: &str, rho: Option<f64>, n_samples: usize, n_ascent: usize, seed: u64) -> PyResult<RoaEstimate> {
    let pr = presets::preset(name).map_err(py_err)?;
    let sys = pr.system(&EpileptorParams::default()).map_err(py_err)?;
    let st = pr.storage().map_err(py_err)?;
    let opts = RoaOptions {
        n_samples,
        n_ascent,
        seed,
        ..RoaOptions::default()
    };
    let est = py
        .detach(|| match rho {
            Some(r) => passivity::check_roa_level(&st, &sys, r, &opts),
            None => passivity::estimate_roa_level(&st, &sys, &opts),
        })
        .map_err(py_err)?;
    Ok(RoaEstimate {
        rho: est.rho,
        radius: est.radius,
        status: est.status.name(),
        n_samples: est.n_samples,
        worst_margin: est.worst_margin,
        failing_rho: est.failing_rho,
        counterexample: est.counterexample.map(|v| v.iter().copied().collect()),
    })
}

#[pymodule]
#[pyo3(name = "epilab")]
fn epilab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", epilab::VERSION)?;
    m.add("PRESETS", presets::PRESET_NAMES.to_vec())?;
    m.add("STATE_NAMES", model::STATE_NAMES.to_vec())?;
    m.add_class::<Equilibrium>()?;
    m.add_class::<Trajectory>()?;
    m.add_class::<Certificate>()?;
    m.add_class::<DesignResult>()?;
    m.add_class::<RoaEstimate>()?;
    m.add_function(wrap_pyfunction!(vector_field, m)?)?;
    m.add_function(wrap_pyfunction!(jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(find_equilibria, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(stability_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify_linear_passivity, m)?)?;
    m.add_function(wrap_pyfunction!(matching_obstruction, m)?)?;
    m.add_function(wrap_pyfunction!(design_output, m)?)?;
    m.add_function(wrap_pyfunction!(solve_sparse_lyapunov, m)?)?;
    m.add_function(wrap_pyfunction!(kyp_feasibility, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(roa, m)?)?;
    Ok(())
}
