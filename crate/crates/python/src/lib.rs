//! Python bindings. Matrices cross the boundary as nested lists of `complex`,
//! vectors as flat lists; every function takes `hbar` as a keyword (default 1).

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use rpimon_core as core;
use core::diagnostics;
use core::lattice::{self, KineticKernel, Potential};
use core::nonselective::{self, MasterForm};
use core::selective::{self, SliceStepper};
use core::{CMatrix, CVector, C64};

fn to_py(e: core::Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn consts(hbar: f64) -> PyResult<core::PhysicalConstants> {
    core::PhysicalConstants::new(hbar).map_err(to_py)
}

fn matrix_from(rows: Vec<Vec<C64>>) -> PyResult<CMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be a non-empty square list of rows"));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn matrix_to(m: &CMatrix) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

#[pyclass(name = "Operator", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyOperator(core::Operator);

#[pymethods]
impl PyOperator {
    #[new]
    fn new(matrix: Vec<Vec<C64>>) -> PyResult<Self> {
        core::Operator::new(matrix_from(matrix)?).map(Self).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn is_hermitian(&self) -> bool {
        self.0.is_hermitian()
    }

    fn to_list(&self) -> Vec<Vec<C64>> {
        matrix_to(self.0.matrix())
    }

    fn eigenvalues(&self) -> PyResult<Vec<f64>> {
        Ok(self.0.eigh().map_err(to_py)?.values)
    }

    fn scaled(&self, s: f64) -> Self {
        Self(self.0.scaled(s))
    }

    fn __repr__(&self) -> String {
        format!("Operator(dim={})", self.0.dim())
    }
}

#[pyclass(name = "StateVector", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyStateVector(core::StateVector);

#[pymethods]
impl PyStateVector {
    /// Normalizes the given amplitudes.
    #[new]
    fn new(amplitudes: Vec<C64>) -> PyResult<Self> {
        core::StateVector::normalized(CVector::from_vec(amplitudes)).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn basis(dim: usize, k: usize) -> PyResult<Self> {
        core::StateVector::basis(dim, k).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn coherent(dim: usize, alpha: C64) -> PyResult<Self> {
        core::StateVector::coherent(dim, alpha).map(Self).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn norm2(&self) -> f64 {
        self.0.norm2()
    }

    fn amplitudes(&self) -> Vec<C64> {
        self.0.amplitudes().iter().copied().collect()
    }

    fn fidelity(&self, other: &PyStateVector) -> PyResult<f64> {
        self.0.fidelity(&other.0).map_err(to_py)
    }
}

#[pyclass(name = "DensityMatrix", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDensityMatrix(core::DensityMatrix);

#[pymethods]
impl PyDensityMatrix {
    #[new]
    fn new(matrix: Vec<Vec<C64>>) -> PyResult<Self> {
        core::DensityMatrix::new(matrix_from(matrix)?).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_pure(psi: &PyStateVector) -> PyResult<Self> {
        core::DensityMatrix::from_pure(&psi.0).map(Self).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn trace(&self) -> f64 {
        self.0.trace()
    }

    fn purity(&self) -> f64 {
        self.0.purity()
    }

    fn min_eigenvalue(&self) -> f64 {
        self.0.min_eigenvalue()
    }

    fn expectation(&self, x: &PyOperator) -> PyResult<f64> {
        self.0.expectation(&x.0).map_err(to_py)
    }

    fn to_list(&self) -> Vec<Vec<C64>> {
        matrix_to(self.0.matrix())
    }
}

#[pyclass(name = "ReadoutCurve", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyReadoutCurve(core::ReadoutCurve);

#[pymethods]
impl PyReadoutCurve {
    #[new]
    #[pyo3(signature = (values, dt, t0 = 0.0))]
    fn new(values: Vec<f64>, dt: f64, t0: f64) -> PyResult<Self> {
        core::ReadoutCurve::new(t0, dt, values).map(Self).map_err(to_py)
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt()
    }

    #[getter]
    fn t0(&self) -> f64 {
        self.0.t0()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "MonitoringChannel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyChannel(core::MonitoringChannel);

#[pymethods]
impl PyChannel {
    #[new]
    #[pyo3(signature = (a, kappa, lambda_ = 0.0, b = None, c = None))]
    fn new(
        a: &PyOperator,
        kappa: f64,
        lambda_: f64,
        b: Option<&PyOperator>,
        c: Option<&PyOperator>,
    ) -> PyResult<Self> {
        let mut ch = core::MonitoringChannel::minimal(a.0.clone(), kappa).map_err(to_py)?;
        if let Some(b) = b {
            ch = ch.with_disturbance(lambda_, b.0.clone()).map_err(to_py)?;
        } else if lambda_ != 0.0 {
            return Err(PyValueError::new_err("lambda_ needs a disturbance operator b"));
        }
        if let Some(c) = c {
            ch = ch.with_phase(c.0.clone()).map_err(to_py)?;
        }
        Ok(Self(ch))
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.0.lambda()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// A readout-conditioned trajectory with unnormalized states.
#[pyclass(name = "ConditionedTrajectory", frozen)]
struct PyTrajectory(selective::ConditionedTrajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn readout(&self) -> PyReadoutCurve {
        PyReadoutCurve(self.0.readout.clone())
    }

    #[getter]
    fn final_probability_density(&self) -> f64 {
        self.0.final_probability_density
    }

    fn norms(&self) -> Vec<f64> {
        self.0.states.iter().map(core::StateVector::norm2).collect()
    }

    fn states(&self) -> Vec<Vec<C64>> {
        self.0.states.iter().map(|s| s.amplitudes().iter().copied().collect()).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "MasterEquation", frozen)]
struct PyMaster(nonselective::MasterEquationSpec);

#[pymethods]
impl PyMaster {
    #[new]
    #[pyo3(signature = (h, channels, form = "simple", truncation_guard = false))]
    fn new(h: &PyOperator, channels: Vec<PyRef<'_, PyChannel>>, form: &str, truncation_guard: bool) -> PyResult<Self> {
        let form: MasterForm = form.parse().map_err(to_py)?;
        let chans = channels.iter().map(|c| c.0.clone()).collect();
        let spec = nonselective::MasterEquationSpec::new(h.0.clone(), chans, form).map_err(to_py)?;
        Ok(Self(if truncation_guard { spec.with_truncation_guard() } else { spec }))
    }

    #[staticmethod]
    #[pyo3(signature = (d, mass, omega, kappa, lambda_, hbar = 1.0))]
    fn brownian_oscillator(d: usize, mass: f64, omega: f64, kappa: f64, lambda_: f64, hbar: f64) -> PyResult<Self> {
        nonselective::build_brownian_oscillator(d, mass, omega, kappa, lambda_, consts(hbar)?)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[pyo3(signature = (rho, hbar = 1.0))]
    fn rhs(&self, rho: Vec<Vec<C64>>, hbar: f64) -> PyResult<Vec<Vec<C64>>> {
        let rho = matrix_from(rho)?;
        if rho.nrows() != self.0.dim() {
            return Err(PyValueError::new_err("density matrix dimension mismatch"));
        }
        Ok(matrix_to(&self.0.rhs(&rho, consts(hbar)?)))
    }
}

#[pyfunction]
fn qubit(name: &str) -> PyResult<PyOperator> {
    core::build_qubit(name).map(PyOperator).map_err(to_py)
}

/// Returns `(q, p, h)` for a truncated oscillator.
#[pyfunction]
#[pyo3(signature = (d, mass, omega, hbar = 1.0))]
fn oscillator(d: usize, mass: f64, omega: f64, hbar: f64) -> PyResult<(PyOperator, PyOperator, PyOperator)> {
    let o = core::build_oscillator(d, mass, omega, consts(hbar)?).map_err(to_py)?;
    Ok((PyOperator(o.q), PyOperator(o.p), PyOperator(o.h)))
}

#[pyfunction]
#[pyo3(signature = (psi0, h, channel, readout, hbar = 1.0))]
fn propagate_conditioned(
    psi0: &PyStateVector,
    h: &PyOperator,
    channel: &PyChannel,
    readout: &PyReadoutCurve,
    hbar: f64,
) -> PyResult<PyTrajectory> {
    selective::propagate_conditioned(&psi0.0, &h.0, &channel.0, &readout.0, consts(hbar)?)
        .map(PyTrajectory)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (psi0, h, channel, n_steps, dt, seed, hbar = 1.0))]
fn sample_readout(
    psi0: &PyStateVector,
    h: &PyOperator,
    channel: &PyChannel,
    n_steps: usize,
    dt: f64,
    seed: u64,
    hbar: f64,
) -> PyResult<PyTrajectory> {
    selective::sample_readout(&psi0.0, &h.0, &channel.0, n_steps, dt, seed, consts(hbar)?)
        .map(PyTrajectory)
        .map_err(to_py)
}

/// Returns `(times, [DensityMatrix])` averaged over `n_traj` sampled trajectories.
#[pyfunction]
#[pyo3(signature = (psi0, h, channel, n_steps, dt, n_traj, seed, hbar = 1.0))]
#[allow(clippy::too_many_arguments)]
fn sample_ensemble(
    py: Python<'_>,
    psi0: &PyStateVector,
    h: &PyOperator,
    channel: &PyChannel,
    n_steps: usize,
    dt: f64,
    n_traj: usize,
    seed: u64,
    hbar: f64,
) -> PyResult<(Vec<f64>, Vec<PyDensityMatrix>)> {
    let stepper = SliceStepper::new(&h.0, &channel.0, dt, consts(hbar)?).map_err(to_py)?;
    let psi = psi0.0.clone();
    let res = py
        .detach(|| nonselective::sample_ensemble(&stepper, &psi, n_steps, n_traj, seed))
        .map_err(to_py)?;
    Ok((res.times, res.rho_avg.into_iter().map(PyDensityMatrix).collect()))
}

/// Returns `(times, [DensityMatrix])` from RK4 integration.
#[pyfunction]
#[pyo3(signature = (rho0, equation, t_final, n_steps, hbar = 1.0))]
fn integrate(
    rho0: &PyDensityMatrix,
    equation: &PyMaster,
    t_final: f64,
    n_steps: usize,
    hbar: f64,
) -> PyResult<(Vec<f64>, Vec<PyDensityMatrix>)> {
    let sol = nonselective::integrate(&rho0.0, &equation.0, t_final, n_steps, consts(hbar)?).map_err(to_py)?;
    Ok((sol.times, sol.states.into_iter().map(PyDensityMatrix).collect()))
}

/// Returns `(diagonal_defect, quadrature_deviation, unitarity_deviation)`.
#[pyfunction]
#[pyo3(signature = (channel, h, dt, hbar = 1.0))]
fn generalized_unitarity_check(channel: &PyChannel, h: &PyOperator, dt: f64, hbar: f64) -> PyResult<(f64, f64, f64)> {
    let r = selective::generalized_unitarity_check(&channel.0, &h.0, dt, consts(hbar)?).map_err(to_py)?;
    Ok((r.diagonal_defect, r.quadrature_deviation, r.unitarity_deviation))
}

#[pyfunction]
fn kappa_from_corridor(duration: f64, width: f64) -> PyResult<f64> {
    let spec = core::CorridorSpec::new(duration, width).map_err(to_py)?;
    Ok(core::kappa_from_corridor(&spec))
}

#[pyclass(name = "LatticeSpec", frozen)]
struct PyLattice(lattice::LatticeSpec);

#[pymethods]
impl PyLattice {
    /// `potential` is "free" or "harmonic"; `kinetic` is "lattice" or "continuum".
    #[new]
    #[pyo3(signature = (n_q, q_max, mass = 1.0, potential = "free", omega = 1.0, kinetic = "lattice"))]
    fn new(n_q: usize, q_max: f64, mass: f64, potential: &str, omega: f64, kinetic: &str) -> PyResult<Self> {
        let pot = match potential {
            "free" => Potential::Free,
            "harmonic" => Potential::Harmonic { omega },
            other => return Err(PyValueError::new_err(format!("unknown potential '{other}'"))),
        };
        let kin = match kinetic {
            "lattice" => KineticKernel::Lattice,
            "continuum" => KineticKernel::Continuum,
            other => return Err(PyValueError::new_err(format!("unknown kinetic kernel '{other}'"))),
        };
        Ok(Self(lattice::LatticeSpec::new(n_q, q_max, mass, pot).map_err(to_py)?.with_kinetic(kin)))
    }

    #[getter]
    fn dq(&self) -> f64 {
        self.0.dq()
    }

    fn grid(&self) -> Vec<f64> {
        self.0.grid()
    }
}

/// Path-integral propagator kernel `K(q_f, q_i)` along a piecewise-constant readout.
#[pyfunction]
#[pyo3(signature = (spec, readout, kappa, hbar = 1.0))]
fn rpi_propagator(spec: &PyLattice, readout: &PyReadoutCurve, kappa: f64, hbar: f64) -> PyResult<Vec<Vec<C64>>> {
    let p = lattice::rpi_propagator(&spec.0, &readout.0, kappa, consts(hbar)?).map_err(to_py)?;
    Ok(matrix_to(&p.kernel()))
}

#[pyfunction]
#[pyo3(signature = (spec, readout, kappa, hbar = 1.0))]
fn effective_propagator(spec: &PyLattice, readout: &PyReadoutCurve, kappa: f64, hbar: f64) -> PyResult<Vec<Vec<C64>>> {
    let p = lattice::effective_propagator(&spec.0, &readout.0, kappa, consts(hbar)?).map_err(to_py)?;
    Ok(matrix_to(&p.kernel()))
}

/// `[(dt, max deviation)]` between the two propagators. `levels` with
/// `level_duration` defines a staircase readout; omitted, the default staircase.
#[pyfunction]
#[pyo3(signature = (spec, t, dts, kappa, levels = None, level_duration = 0.2, hbar = 1.0))]
#[allow(clippy::too_many_arguments)]
fn convergence_study(
    py: Python<'_>,
    spec: &PyLattice,
    t: f64,
    dts: Vec<f64>,
    kappa: f64,
    levels: Option<Vec<f64>>,
    level_duration: f64,
    hbar: f64,
) -> PyResult<Vec<(f64, f64)>> {
    let c = consts(hbar)?;
    if !(level_duration > 0.0) {
        return Err(PyValueError::new_err("level_duration must be > 0"));
    }
    let res = py.detach(|| match levels {
        Some(lv) if !lv.is_empty() => {
            let f = move |s: f64| lv[((s / level_duration) as usize).min(lv.len() - 1)];
            lattice::convergence_study(&spec.0, f, t, &dts, kappa, c)
        }
        _ => lattice::convergence_study(&spec.0, lattice::staircase_readout, t, &dts, kappa, c),
    });
    res.map_err(to_py)
}

/// `[(name, deviation, tolerance, passed)]` for the invariant self-checks.
#[pyfunction]
#[pyo3(signature = (hbar = 1.0))]
fn run_check_suite(py: Python<'_>, hbar: f64) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let c = consts(hbar)?;
    let checks = py.detach(|| diagnostics::run_check_suite(c)).map_err(to_py)?;
    Ok(checks.into_iter().map(|r| (r.name, r.deviation, r.tolerance, r.passed)).collect())
}

#[pymodule]
#[pyo3(name = "rpimon")]
fn rpimon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOperator>()?;
    m.add_class::<PyStateVector>()?;
    m.add_class::<PyDensityMatrix>()?;
    m.add_class::<PyReadoutCurve>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyMaster>()?;
    m.add_class::<PyLattice>()?;
    m.add_function(wrap_pyfunction!(qubit, m)?)?;
    m.add_function(wrap_pyfunction!(oscillator, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_conditioned, m)?)?;
    m.add_function(wrap_pyfunction!(sample_readout, m)?)?;
    m.add_function(wrap_pyfunction!(sample_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(generalized_unitarity_check, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_from_corridor, m)?)?;
    m.add_function(wrap_pyfunction!(rpi_propagator, m)?)?;
    m.add_function(wrap_pyfunction!(effective_propagator, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_study, m)?)?;
    m.add_function(wrap_pyfunction!(run_check_suite, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
