//! Python bindings for the flexible-joint tracking toolkit.

use std::path::PathBuf;

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vcbc::config::RunConfig;
use vcbc::contraction::{certificate_suite, VerifySettings};
use vcbc::controller::{
    state_from_errors, tracking_controller, ControllerSpec, DerivativeMode, ErrorCoords, Omega, PhiKind,
    SinusoidReference,
};
use vcbc::fjr::FjrModel;
use vcbc::sim::{run_closed_loop, Metrics, SimConfig, TrajectoryLog};
use vcbc::{ph, Error, State};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. } | Error::DimensionMismatch { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn state(robot: &FjrModel, q: Vec<f64>, p: Vec<f64>) -> PyResult<State> {
    let s = State::new(DVector::from_vec(q), DVector::from_vec(p), robot.n_joints()).map_err(to_py)?;
    s.check(robot).map_err(to_py)?;
    Ok(s)
}

fn parse_kind(kind: &str) -> PyResult<PhiKind> {
    [PhiKind::Saturated, PhiKind::Linear, PhiKind::Mu1]
        .into_iter()
        .find(|k| k.label() == kind)
        .ok_or_else(|| PyValueError::new_err(format!("unknown map `{kind}`; use PHI1_SATURATED, PHI2_LINEAR or PHI3_MU1")))
}

fn parse_mode(mode: &str) -> PyResult<DerivativeMode> {
    [DerivativeMode::ModelExact, DerivativeMode::FilteredNumeric]
        .into_iter()
        .find(|m| m.label() == mode)
        .ok_or_else(|| PyValueError::new_err(format!("unknown derivative mode `{mode}`")))
}

/// Two-link flexible-joint arm.
#[pyclass(frozen, name = "Robot")]
struct PyRobot {
    inner: FjrModel,
}

#[pymethods]
impl PyRobot {
    /// The bundled two-link arm with stiffness diag(9, 4).
    #[staticmethod]
    fn quanser() -> Self {
        Self {
            inner: FjrModel::quanser(),
        }
    }

    #[getter]
    fn n_joints(&self) -> usize {
        self.inner.n_joints()
    }

    /// Total energy at `q = [q_l; q_m]`, `p = [p_l; p_m]`.
    fn hamiltonian(&self, q: Vec<f64>, p: Vec<f64>) -> PyResult<f64> {
        ph::hamiltonian(&self.inner, &state(&self.inner, q, p)?).map_err(to_py)
    }

    /// `(dq, dp)` under the motor torque `u`.
    fn dynamics(&self, q: Vec<f64>, p: Vec<f64>, u: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let s = state(&self.inner, q, p)?;
        let r = ph::dynamics(&self.inner, &s, &DVector::from_vec(u)).map_err(to_py)?;
        Ok((r.dq.as_slice().to_vec(), r.dp.as_slice().to_vec()))
    }
}

/// A tracking controller of the family with the bundled gains.
#[pyclass(frozen, name = "Controller")]
struct PyController {
    inner: ControllerSpec,
}

#[pymethods]
impl PyController {
    #[staticmethod]
    #[pyo3(signature = (kind, derivative_mode = "MODEL_EXACT", filter_tau = 0.01))]
    fn quanser(kind: &str, derivative_mode: &str, filter_tau: f64) -> PyResult<Self> {
        let mut inner = ControllerSpec::quanser(parse_kind(kind)?);
        inner.derivative_mode = parse_mode(derivative_mode)?;
        if !(filter_tau > 0.0 && filter_tau.is_finite()) {
            return Err(PyValueError::new_err("filter_tau must be positive"));
        }
        inner.filter_tau = filter_tau;
        Ok(Self { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.phi_kind.label()
    }

    #[getter]
    fn derivative_mode(&self) -> &'static str {
        self.inner.derivative_mode.label()
    }

    /// Motor torque applied at state `(q, p)` and time `t` tracking `sin(t)`.
    fn control(&self, robot: &PyRobot, q: Vec<f64>, p: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        let s = state(&robot.inner, q, p)?;
        let n = robot.inner.n_joints();
        let u = tracking_controller(&robot.inner, &self.inner, &SinusoidReference::unit(n), &s, t, &Omega::zero(n))
            .map_err(to_py)?;
        Ok(u.as_slice().to_vec())
    }

    /// `(q, p)` whose tracking errors at `t` are the given ones.
    #[pyo3(signature = (robot, qtil_l, qtil_m, sigma_l, sigma_m, t = 0.0))]
    fn state_from_errors(
        &self,
        robot: &PyRobot,
        qtil_l: Vec<f64>,
        qtil_m: Vec<f64>,
        sigma_l: Vec<f64>,
        sigma_m: Vec<f64>,
        t: f64,
    ) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let errors = ErrorCoords {
            qtil_l: DVector::from_vec(qtil_l),
            sigma_l: DVector::from_vec(sigma_l),
            qtil_m: DVector::from_vec(qtil_m),
            sigma_m: DVector::from_vec(sigma_m),
        };
        let n = robot.inner.n_joints();
        let s = state_from_errors(&robot.inner, &self.inner, &SinusoidReference::unit(n), &errors, t)
            .map_err(to_py)?;
        Ok((s.q.as_slice().to_vec(), s.p.as_slice().to_vec()))
    }
}

/// Logged closed-loop run.
#[pyclass(frozen, name = "Trajectory")]
struct PyTrajectory {
    inner: TrajectoryLog,
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rms_link_error", m.rms_link_error)?;
    d.set_item("rms_link_error_final_1s", m.rms_link_error_final_1s)?;
    d.set_item("peak_control", m.peak_control)?;
    d.set_item("overshoot", m.overshoot)?;
    d.set_item("fitted_rate", m.fitted_rate)?;
    d.set_item("peak_state", m.peak_state)?;
    Ok(d)
}

#[pymethods]
impl PyTrajectory {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        TrajectoryLog::header(self.inner.n_joints)
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.t.clone()
    }

    /// Rows in the order of `columns`.
    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|k| self.inner.row(k)).collect()
    }

    fn link_error_norms(&self) -> Vec<f64> {
        self.inner.link_error_norms()
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        metrics_dict(py, &self.inner.metrics())
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        self.inner
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Runs the closed loop tracking `sin(t)` from `(q0, p0)`.
#[pyfunction]
#[pyo3(signature = (robot, controller, q0, p0, t_end, dt = 1e-4, log_stride = 10, noise_std = 0.0, noise_seed = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    robot: &PyRobot,
    controller: &PyController,
    q0: Vec<f64>,
    p0: Vec<f64>,
    t_end: f64,
    dt: f64,
    log_stride: usize,
    noise_std: f64,
    noise_seed: u64,
) -> PyResult<PyTrajectory> {
    let mut cfg = SimConfig::new(state(&robot.inner, q0, p0)?, t_end);
    cfg.dt = dt;
    cfg.log_stride = log_stride;
    cfg.noise_std = noise_std;
    cfg.noise_seed = noise_seed;
    let (model, spec) = (&robot.inner, &controller.inner);
    let reference = SinusoidReference::unit(model.n_joints());
    let log = py.detach(|| run_closed_loop(model, spec, &reference, &cfg)).map_err(to_py)?;
    Ok(PyTrajectory { inner: log })
}

/// Runs the experiment described by a TOML configuration file.
#[pyfunction]
fn simulate_config(py: Python<'_>, path: PathBuf) -> PyResult<PyTrajectory> {
    let exp = RunConfig::load(&path).and_then(|c| c.build()).map_err(to_py)?;
    let log = py
        .detach(|| run_closed_loop(&exp.model, &exp.spec, &exp.reference, &exp.sim))
        .map_err(to_py)?;
    Ok(PyTrajectory { inner: log })
}

/// Certificate reports and the certified rate with default sampling.
#[pyfunction]
#[pyo3(signature = (robot, controller, seed = 0))]
fn verify<'py>(py: Python<'py>, robot: &PyRobot, controller: &PyController, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let (model, spec) = (&robot.inner, &controller.inner);
    let suite = py
        .detach(|| certificate_suite(model, spec, &VerifySettings::default(), seed))
        .map_err(to_py)?;
    let reports = suite
        .reports
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("condition_id", &r.condition_id)?;
            d.set_item("passed", r.passed)?;
            d.set_item("worst_margin", r.worst_margin)?;
            d.set_item("beta", r.beta_estimate)?;
            d.set_item("note", r.note.clone())?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = PyDict::new(py);
    out.set_item("passed", suite.passed())?;
    out.set_item("reports", reports)?;
    out.set_item("rate", suite.rate.as_ref().ok().map(|r| r.beta))?;
    Ok(out)
}

#[pymodule]
fn vcbc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRobot>()?;
    m.add_class::<PyController>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_config, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
