//! Fixed-step integration of the closed loop, trajectory logging and
//! summary metrics.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::contraction::differential_storage;
use crate::controller::{
    control_terms, initial_filter, ControlTerms, ControllerSpec, DerivativeMode, FilterState, Omega, Reference,
};
use crate::error::{Error, Result};
use crate::fjr::FjrModel;
use crate::ph::{self, MechModel, State};
use crate::vsys::{self, VirtualState};

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_T_END: f64 = 20.0;
/// Minimum number of samples in the decay-rate fit.
pub const MIN_FIT_SAMPLES: usize = 50;

/// External input as a function of time.
pub type OmegaFn = Arc<dyn Fn(f64) -> Omega + Send + Sync>;

#[derive(Clone)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub initial_state: State,
    pub initial_virtual_state: Option<State>,
    pub log_stride: usize,
    /// Defaults to zero when absent.
    pub omega: Option<OmegaFn>,
    /// Standard deviation of the measurement noise on `(q, p)` seen by the
    /// controller, held over each step.
    pub noise_std: f64,
    pub noise_seed: u64,
}

impl fmt::Debug for SimConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimConfig")
            .field("t_end", &self.t_end)
            .field("dt", &self.dt)
            .field("initial_state", &self.initial_state)
            .field("initial_virtual_state", &self.initial_virtual_state)
            .field("log_stride", &self.log_stride)
            .field("omega", &self.omega.as_ref().map(|_| "<fn>"))
            .field("noise_std", &self.noise_std)
            .field("noise_seed", &self.noise_seed)
            .finish()
    }
}

impl SimConfig {
    pub fn new(initial_state: State, t_end: f64) -> Self {
        Self {
            t_end,
            dt: DEFAULT_DT,
            initial_state,
            initial_virtual_state: None,
            log_stride: 1,
            omega: None,
            noise_std: 0.0,
            noise_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::param("t_end", "must be at least dt"));
        }
        if self.log_stride == 0 {
            return Err(Error::param("log_stride", "must be at least 1"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::param("noise_std", "must be non-negative"));
        }
        if !self.initial_state.is_finite() {
            return Err(Error::NonFinite("initial state"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    fn omega_at(&self, t: f64, n: usize) -> Omega {
        self.omega.as_ref().map_or_else(|| Omega::zero(n), |f| f(t))
    }
}

/// One RK4 step of `ẏ = f(t, y)`.
pub fn rk4_step<F>(f: &mut F, t: f64, y: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let h2 = 0.5 * dt;
    let k1 = f(t, y)?;
    let k2 = f(t + h2, &(y + &k1 * h2))?;
    let k3 = f(t + h2, &(y + &k2 * h2))?;
    let k4 = f(t + dt, &(y + &k3 * dt))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Classical RK4 with a fixed step. Returns the `steps + 1` samples; a
/// non-finite value aborts with the last valid time.
pub fn integrate_rk4<F>(mut f: F, y0: &DVector<f64>, t0: f64, dt: f64, steps: usize) -> Result<Vec<(f64, DVector<f64>)>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0.clone();
    out.push((t0, y.clone()));
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        y = rk4_step(&mut f, t, &y, dt).map_err(|e| abort(t, e))?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(abort(t, Error::NonFinite("state")));
        }
        out.push((t0 + (k + 1) as f64 * dt, y.clone()));
    }
    Ok(out)
}

fn abort(t: f64, e: Error) -> Error {
    match e {
        Error::SimulationAborted { .. } => e,
        other => Error::SimulationAborted {
            t,
            reason: other.to_string(),
        },
    }
}

/// Summary of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// RMS of `‖q̃_l‖` over the final 25% of the run.
    pub rms_link_error: f64,
    /// RMS of `‖q̃_l‖` over the final second.
    pub rms_link_error_final_1s: f64,
    pub peak_control: f64,
    /// Largest excursion of a link error past zero, relative to its initial value.
    pub overshoot: f64,
    /// Decay exponent of `‖q̃_l‖`, absent when the initial error is zero or the
    /// fit window is too short.
    pub fitted_rate: Option<f64>,
    /// Largest absolute entry of the state over the run.
    pub peak_state: f64,
}

/// Logged closed-loop trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub n_joints: usize,
    pub t: Vec<f64>,
    pub states: Vec<State>,
    pub q_d: Vec<DVector<f64>>,
    pub q_md: Vec<DVector<f64>>,
    /// Error coordinates `[q̃_l; q̃_m; σ_l; σ_m]`.
    pub errors: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub hamiltonian: Vec<f64>,
    /// Storage distance to the virtual trajectory; zero without a pair.
    pub w: Vec<f64>,
    pub power_supplied: Vec<f64>,
    pub power_dissipated: Vec<f64>,
    /// Integrals of the supplied and dissipated power from the start.
    pub energy_supplied: Vec<f64>,
    pub energy_dissipated: Vec<f64>,
    pub virtual_states: Option<Vec<State>>,
}

impl TrajectoryLog {
    fn new(n_joints: usize, with_virtual: bool) -> Self {
        Self {
            n_joints,
            t: Vec::new(),
            states: Vec::new(),
            q_d: Vec::new(),
            q_md: Vec::new(),
            errors: Vec::new(),
            u: Vec::new(),
            hamiltonian: Vec::new(),
            w: Vec::new(),
            power_supplied: Vec::new(),
            power_dissipated: Vec::new(),
            energy_supplied: Vec::new(),
            energy_dissipated: Vec::new(),
            virtual_states: with_virtual.then(Vec::new),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn header(n: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for name in [
            "q_l", "q_m", "p_l", "p_m", "q_ld", "q_md", "qtil_l", "qtil_m", "sigma_l", "sigma_m", "u",
        ] {
            h.extend((1..=n).map(|i| format!("{name}{i}")));
        }
        h.extend(["H", "W", "P_supplied", "P_dissipated"].map(String::from));
        h
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        let s = &self.states[k];
        let mut r = vec![self.t[k]];
        r.extend(s.q.iter().chain(s.p.iter()));
        r.extend(self.q_d[k].iter().chain(self.q_md[k].iter()));
        r.extend(self.errors[k].iter());
        r.extend(self.u[k].iter());
        r.extend([self.hamiltonian[k], self.w[k], self.power_supplied[k], self.power_dissipated[k]]);
        r
    }

    /// CSV with a header row and 15 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::header(self.n_joints).join(","))?;
        for k in 0..self.len() {
            let line: Vec<String> = self.row(k).iter().map(|v| format!("{v:.14e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn link_error_norms(&self) -> Vec<f64> {
        let n = self.n_joints;
        self.errors.iter().map(|e| e.rows(0, n).norm()).collect()
    }

    fn rms_from(&self, t_start: f64) -> f64 {
        let norms = self.link_error_norms();
        let vals: Vec<f64> = self
            .t
            .iter()
            .zip(&norms)
            .filter(|(t, _)| **t >= t_start - 1e-12)
            .map(|(_, e)| e * e)
            .collect();
        if vals.is_empty() {
            return 0.0;
        }
        (vals.iter().sum::<f64>() / vals.len() as f64).sqrt()
    }

    pub fn metrics(&self) -> Metrics {
        let n = self.n_joints;
        let (t0, t1) = (self.t.first().copied().unwrap_or(0.0), self.t.last().copied().unwrap_or(0.0));
        let peak_control = self.u.iter().flat_map(|u| u.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
        let peak_state = self
            .states
            .iter()
            .flat_map(|s| s.q.iter().chain(s.p.iter()))
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let mut overshoot = 0.0f64;
        if let Some(e0) = self.errors.first() {
            for i in 0..n {
                let init = e0[i];
                if init != 0.0 {
                    let past = self.errors.iter().map(|e| -init.signum() * e[i]).fold(0.0f64, f64::max);
                    overshoot = overshoot.max(past / init.abs());
                }
            }
        }
        Metrics {
            rms_link_error: self.rms_from(t0 + 0.75 * (t1 - t0)),
            rms_link_error_final_1s: self.rms_from(t1 - 1.0),
            peak_control,
            overshoot,
            fitted_rate: fit_decay_rate(&self.t, &self.link_error_norms()),
            peak_state,
        }
    }
}

/// Least-squares decay exponent of `y(t)` from the first sample up to the
/// first crossing of 1% of `y(0)`.
pub fn fit_decay_rate(t: &[f64], y: &[f64]) -> Option<f64> {
    let y0 = *y.first()?;
    if !(y0 > 0.0) {
        return None;
    }
    let end = y.iter().position(|&v| v <= 0.01 * y0).map_or(y.len(), |i| i + 1);
    if end < MIN_FIT_SAMPLES {
        return None;
    }
    let pts: Vec<(f64, f64)> = t[..end]
        .iter()
        .zip(&y[..end])
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let lm = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(t, l)| (t - tm) * (l - lm)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - tm) * (t - tm)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

struct Layout {
    n: usize,
    /// Length of the mechanical state `(q, p)`.
    dof: usize,
    filter: bool,
    pair: bool,
}

impl Layout {
    fn filter_range(&self) -> std::ops::Range<usize> {
        self.dof..self.dof + if self.filter { 3 * self.n } else { 0 }
    }

    fn virtual_start(&self) -> usize {
        self.filter_range().end
    }

    fn energy_start(&self) -> usize {
        self.virtual_start() + if self.pair { self.dof } else { 0 }
    }

    fn len(&self) -> usize {
        self.energy_start() + 2
    }

    fn state(&self, y: &DVector<f64>) -> State {
        State::from_vector(&y.rows(0, self.dof).into_owned(), self.n)
    }

    fn virtual_state(&self, y: &DVector<f64>) -> Option<State> {
        self.pair
            .then(|| State::from_vector(&y.rows(self.virtual_start(), self.dof).into_owned(), self.n))
    }

    fn filter(&self, y: &DVector<f64>) -> Option<FilterState> {
        self.filter
            .then(|| FilterState::from_slice(&y.as_slice()[self.filter_range()], self.n))
    }
}

struct Evaluation {
    terms: ControlTerms,
    dy: DVector<f64>,
    balance: ph::PowerBalance,
}

struct ClosedLoop<'a> {
    model: &'a FjrModel,
    spec: &'a ControllerSpec,
    reference: &'a dyn Reference,
    cfg: &'a SimConfig,
    layout: Layout,
}

impl ClosedLoop<'_> {
    fn evaluate(&self, t: f64, y: &DVector<f64>, noise: &DVector<f64>) -> Result<Evaluation> {
        let lay = &self.layout;
        let x = lay.state(y);
        let measured = State::from_vector(&(x.to_vector() + noise), lay.n);
        let omega = self.cfg.omega_at(t, lay.n);
        let filter = lay.filter(y);
        let terms = control_terms(
            self.model,
            self.spec,
            self.reference,
            &measured,
            &measured,
            t,
            &omega,
            filter.as_ref(),
        )?;
        let u = &terms.u_mv;
        let rate = ph::dynamics(self.model, &x, u)?;
        let balance = ph::power_balance(self.model, &x, u)?;
        let mut dy = DVector::zeros(lay.len());
        dy.rows_mut(0, lay.dof).copy_from(&rate.to_vector());
        if let Some(fr) = &terms.filter_rate {
            dy.rows_mut(lay.dof, 3 * lay.n).copy_from(&fr.to_vector());
        }
        if let Some(x_v) = lay.virtual_state(y) {
            let u_v = control_terms(self.model, self.spec, self.reference, &x_v, &x, t, &omega, None)?.u_mv;
            let vs = VirtualState::new(x_v, x.clone())?;
            let rate_v = vsys::virtual_dynamics(self.model, &vs, &u_v)?;
            dy.rows_mut(lay.virtual_start(), lay.dof).copy_from(&rate_v.to_vector());
        }
        let e = lay.energy_start();
        dy[e] = balance.supplied;
        dy[e + 1] = balance.dissipated;
        Ok(Evaluation { terms, dy, balance })
    }

    fn record(&self, log: &mut TrajectoryLog, t: f64, y: &DVector<f64>, ev: &Evaluation) -> Result<()> {
        let lay = &self.layout;
        let x = lay.state(y);
        // Errors are logged for the true state; the controller saw a noisy one.
        let true_terms;
        let terms = if self.cfg.noise_std > 0.0 {
            let omega = self.cfg.omega_at(t, lay.n);
            let filter = lay.filter(y);
            true_terms = control_terms(self.model, self.spec, self.reference, &x, &x, t, &omega, filter.as_ref())?;
            &true_terms
        } else {
            &ev.terms
        };
        let mut w = 0.0;
        if let Some(x_v) = lay.virtual_state(y) {
            let omega = self.cfg.omega_at(t, lay.n);
            let virt = control_terms(self.model, self.spec, self.reference, &x_v, &x, t, &omega, None)?;
            let delta = virt.errors.to_vector() - ev.terms.errors.to_vector();
            w = differential_storage(self.model, self.spec, &x.q_l(), &delta)?;
            log.virtual_states.as_mut().expect("pair log").push(x_v);
        }
        log.t.push(t);
        log.hamiltonian.push(ph::hamiltonian(self.model, &x)?);
        log.q_d.push(terms.q_d.clone());
        log.q_md.push(terms.q_md.clone());
        log.errors.push(terms.errors.to_vector());
        log.u.push(ev.terms.u_mv.clone());
        log.w.push(w);
        log.power_supplied.push(ev.balance.supplied);
        log.power_dissipated.push(ev.balance.dissipated);
        let e = lay.energy_start();
        log.energy_supplied.push(y[e]);
        log.energy_dissipated.push(y[e + 1]);
        log.states.push(x);
        Ok(())
    }

    fn run(&self) -> Result<TrajectoryLog> {
        self.cfg.validate()?;
        self.cfg.initial_state.check(self.model)?;
        let lay = &self.layout;
        let x0 = &self.cfg.initial_state;
        let mut y = DVector::zeros(lay.len());
        y.rows_mut(0, lay.dof).copy_from(&x0.to_vector());
        if lay.filter {
            let omega = self.cfg.omega_at(0.0, lay.n);
            let z = initial_filter(self.model, self.spec, self.reference, x0, x0, 0.0, &omega)?;
            y.rows_mut(lay.dof, 3 * lay.n).copy_from(&z.to_vector());
        }
        if let Some(x_v) = &self.cfg.initial_virtual_state {
            x_v.check(self.model)?;
            y.rows_mut(lay.virtual_start(), lay.dof).copy_from(&x_v.to_vector());
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.noise_seed);
        let normal = Normal::new(0.0, self.cfg.noise_std.max(f64::MIN_POSITIVE)).expect("valid deviation");
        let draw = |rng: &mut ChaCha8Rng| {
            if self.cfg.noise_std > 0.0 {
                DVector::from_fn(lay.dof, |_, _| normal.sample(rng))
            } else {
                DVector::zeros(lay.dof)
            }
        };

        let steps = self.cfg.steps();
        let dt = self.cfg.dt;
        let mut log = TrajectoryLog::new(lay.n, lay.pair);
        for k in 0..=steps {
            let t = k as f64 * dt;
            let noise = draw(&mut rng);
            let ev = self.evaluate(t, &y, &noise).map_err(|e| abort(t, e))?;
            if k % self.cfg.log_stride == 0 || k == steps {
                self.record(&mut log, t, &y, &ev).map_err(|e| abort(t, e))?;
            }
            if k == steps {
                break;
            }
            let mut f = |tt: f64, yy: &DVector<f64>| {
                if tt == t && yy == &y {
                    Ok(ev.dy.clone())
                } else {
                    self.evaluate(tt, yy, &noise).map(|e| e.dy)
                }
            };
            let next = rk4_step(&mut f, t, &y, dt).map_err(|e| abort(t, e))?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(abort(t, Error::NonFinite("state")));
            }
            y = next;
        }
        Ok(log)
    }
}

fn closed_loop<'a>(
    model: &'a FjrModel,
    spec: &'a ControllerSpec,
    reference: &'a dyn Reference,
    cfg: &'a SimConfig,
    pair: bool,
) -> ClosedLoop<'a> {
    ClosedLoop {
        model,
        spec,
        reference,
        cfg,
        layout: Layout {
            n: model.n_joints(),
            dof: 2 * model.dof(),
            filter: spec.derivative_mode == DerivativeMode::FilteredNumeric,
            pair,
        },
    }
}

/// Integrates the robot under the tracking controller.
pub fn run_closed_loop(
    model: &FjrModel,
    spec: &ControllerSpec,
    reference: &dyn Reference,
    cfg: &SimConfig,
) -> Result<TrajectoryLog> {
    closed_loop(model, spec, reference, cfg, false).run()
}

/// Integrates the robot together with a virtual system anchored to it and
/// logs their distance in the differential storage.
pub fn run_virtual_pair(
    model: &FjrModel,
    spec: &ControllerSpec,
    reference: &dyn Reference,
    cfg: &SimConfig,
) -> Result<TrajectoryLog> {
    if cfg.initial_virtual_state.is_none() {
        return Err(Error::param("initial_virtual_state", "required for a virtual pair"));
    }
    if spec.derivative_mode != DerivativeMode::ModelExact {
        return Err(Error::Unsupported("virtual pairs use exact derivatives".into()));
    }
    if cfg.noise_std > 0.0 {
        return Err(Error::Unsupported("virtual pairs are noise free".into()));
    }
    closed_loop(model, spec, reference, cfg, true).run()
}
