//! Link law, motor matching, motor law and the resulting state feedback.
//!
//! The law needs time derivatives of three internal signals: the link
//! momentum reference `p_lr`, the motor position reference `q_md` and the
//! motor momentum reference `p_mr`. In exact mode they are obtained by
//! pushing degree-4 Taylor series of the actual and virtual trajectories
//! through the law. The series are built by Picard iteration on the
//! unforced dynamics; the input only enters the motor momentum, which the
//! law uses at order 0, so the truncated orders that it would affect are
//! never read.

use nalgebra::{DMatrix, DVector};

use super::phi::{phi_block, Block};
use super::reference::{Reference, REFERENCE_ORDER};
use super::{ControllerSpec, DerivativeMode};
use crate::error::{Error, Result};
use crate::fjr::FjrModel;
use crate::linalg;
use crate::ph::{self, State};
use crate::scalar::{lift_vec, values, Jet, Real};
use crate::vsys::{self, VirtualState};

/// Taylor series truncated after the fourth derivative.
pub type Series = Jet<{ REFERENCE_ORDER + 1 }>;

/// External inputs entering the link and motor feedback terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Omega {
    pub link: DVector<f64>,
    pub motor: DVector<f64>,
}

impl Omega {
    pub fn zero(n: usize) -> Self {
        Self {
            link: DVector::zeros(n),
            motor: DVector::zeros(n),
        }
    }
}

/// Tracking errors of a virtual state.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCoords {
    /// `q_lv − q_ld`
    pub qtil_l: DVector<f64>,
    /// `p_lv − p_lr`
    pub sigma_l: DVector<f64>,
    /// `q_mv − q_md`
    pub qtil_m: DVector<f64>,
    /// `p_mv − p_mr`
    pub sigma_m: DVector<f64>,
}

impl ErrorCoords {
    pub fn zeros(n: usize) -> Self {
        Self {
            qtil_l: DVector::zeros(n),
            sigma_l: DVector::zeros(n),
            qtil_m: DVector::zeros(n),
            sigma_m: DVector::zeros(n),
        }
    }

    /// Link position offset only.
    pub fn link_offset(offset: &DVector<f64>) -> Self {
        Self {
            qtil_l: offset.clone(),
            ..Self::zeros(offset.len())
        }
    }

    /// `[q̃_l; q̃_m; σ_l; σ_m]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let parts = [&self.qtil_l, &self.qtil_m, &self.sigma_l, &self.sigma_m];
        DVector::from_iterator(
            parts.iter().map(|p| p.len()).sum(),
            parts.iter().flat_map(|p| p.iter().copied()),
        )
    }
}

/// States of the three filtered differentiators.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub p_lr: DVector<f64>,
    pub q_md: DVector<f64>,
    pub p_mr: DVector<f64>,
}

impl FilterState {
    pub fn zeros(n: usize) -> Self {
        Self {
            p_lr: DVector::zeros(n),
            q_md: DVector::zeros(n),
            p_mr: DVector::zeros(n),
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.p_lr.len();
        DVector::from_iterator(
            3 * n,
            self.p_lr.iter().chain(self.q_md.iter()).chain(self.p_mr.iter()).copied(),
        )
    }

    pub fn from_slice(z: &[f64], n: usize) -> Self {
        Self {
            p_lr: DVector::from_column_slice(&z[..n]),
            q_md: DVector::from_column_slice(&z[n..2 * n]),
            p_mr: DVector::from_column_slice(&z[2 * n..3 * n]),
        }
    }
}

/// Every intermediate signal of one controller evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTerms {
    pub errors: ErrorCoords,
    pub q_d: DVector<f64>,
    pub dq_d: DVector<f64>,
    pub p_lr: DVector<f64>,
    pub dp_lr: DVector<f64>,
    pub u_lv: DVector<f64>,
    pub q_md: DVector<f64>,
    pub dq_md: DVector<f64>,
    pub vbar_mr: DVector<f64>,
    pub p_mr: DVector<f64>,
    pub dp_mr: DVector<f64>,
    pub u_mv: DVector<f64>,
    /// Time derivative of the differentiator states (filtered mode only).
    pub filter_rate: Option<FilterState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkControl {
    pub u_lv: DVector<f64>,
    pub q_md: DVector<f64>,
    pub dq_md: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Signal {
    LinkMomentumRef,
    MotorPositionRef,
    MotorMomentumRef,
}

struct Chain<S: Real> {
    qtil_l: DVector<S>,
    sigma_l: DVector<S>,
    qtil_m: DVector<S>,
    sigma_m: DVector<S>,
    p_lr: DVector<S>,
    dp_lr: DVector<S>,
    u_lv: DVector<S>,
    q_md: DVector<S>,
    dq_md: DVector<S>,
    vbar_mr: DVector<S>,
    p_mr: DVector<S>,
    dp_mr: DVector<S>,
    u_mv: DVector<S>,
}

fn lift<S: Real>(m: &DMatrix<f64>) -> DMatrix<S> {
    m.map(S::from_f64)
}

#[allow(clippy::too_many_arguments)]
fn chain<S: Real>(
    model: &FjrModel,
    spec: &ControllerSpec,
    q_d: &DVector<S>,
    dq_d: &DVector<S>,
    x_v: &State<S>,
    x: &State<S>,
    omega: &Omega,
    deriv: &mut dyn FnMut(Signal, &DVector<S>) -> DVector<S>,
) -> Result<Chain<S>> {
    let q_l = x.q_l();
    let (q_lv, q_mv, p_lv, p_mv) = (x_v.q_l(), x_v.q_m(), x_v.p_l(), x_v.p_m());

    let m_l = model.link_inertia(&q_l);
    let m_l_inv = linalg::inverse(&m_l).ok_or_else(|| Error::SingularInertia {
        q: values(&x.q).iter().copied().collect(),
    })?;
    let v_l = &m_l_inv * x.p_l();
    let e_l = ph::workless_from_partials(&model.link_inertia_partials(&q_l), &v_l);

    let qtil_l = &q_lv - q_d;
    let p_lr = &m_l * (dq_d - phi_block(spec, Block::Link, &qtil_l));
    let dp_lr = deriv(Signal::LinkMomentumRef, &p_lr);
    let sigma_l = &p_lv - &p_lr;
    let v_sigma_l = &m_l_inv * &sigma_l;
    let u_lv = &dp_lr + model.link_gravity_grad(&q_lv)
        + (e_l + lift::<S>(model.link_damping())) * (&m_l_inv * &p_lr)
        - lift::<S>(&spec.lambda_l) * &qtil_l
        - lift::<S>(&spec.kd_l) * &v_sigma_l
        + lift_vec::<S>(&omega.link);

    let q_md = &q_lv + lift::<S>(model.stiffness_inv()) * &u_lv;
    let dq_md = deriv(Signal::MotorPositionRef, &q_md);
    let qtil_m = &q_mv - &q_md;
    let coupling = spec.lambda_m_inv() * model.stiffness().transpose();
    let vbar_mr = -(lift::<S>(&coupling) * &v_sigma_l);
    let m_m = lift::<S>(model.motor_inertia());
    let m_m_inv = lift::<S>(model.motor_inertia_inv());
    let p_mr = &m_m * (&dq_md - phi_block(spec, Block::Motor, &qtil_m) + &vbar_mr);
    let dp_mr = deriv(Signal::MotorMomentumRef, &p_mr);
    let sigma_m = &p_mv - &p_mr;
    // The motor inertia is constant, so the motor workless term vanishes.
    let u_mv = &dp_mr + model.motor_gravity_grad(&q_mv)
        + lift::<S>(model.stiffness()) * (&q_mv - &q_lv)
        + lift::<S>(model.motor_damping()) * (&m_m_inv * &p_mr)
        - lift::<S>(&spec.lambda_m) * &qtil_m
        - lift::<S>(&spec.kd_m) * (&m_m_inv * &sigma_m)
        + lift_vec::<S>(&omega.motor);

    Ok(Chain {
        qtil_l,
        sigma_l,
        qtil_m,
        sigma_m,
        p_lr,
        dp_lr,
        u_lv,
        q_md,
        dq_md,
        vbar_mr,
        p_mr,
        dp_mr,
        u_mv,
    })
}

fn lift_state(s: &State) -> State<Series> {
    State {
        q: s.q.map(Series::constant),
        p: s.p.map(Series::constant),
        n_links: s.n_links,
    }
}

fn integrate_from(x0: &State, rate: &ph::StateRate<Series>) -> State<Series> {
    let step = |v0: f64, r: &Series| {
        let mut s = r.integrate();
        s.c[0] = v0;
        s
    };
    State {
        q: DVector::from_fn(x0.q.len(), |i, _| step(x0.q[i], &rate.dq[i])),
        p: DVector::from_fn(x0.p.len(), |i, _| step(x0.p[i], &rate.dp[i])),
        n_links: x0.n_links,
    }
}

/// Taylor series of the actual and the virtual trajectory through `x` and
/// `x_v`, exact up to the orders the law consumes.
fn flow_series(model: &FjrModel, x_v: &State, x: &State) -> Result<(State<Series>, State<Series>)> {
    let n = model.n_joints();
    let zero = DVector::<Series>::zeros(n);
    let diagonal = x_v == x;
    let mut anchor = lift_state(x);
    let mut virt = anchor.clone();
    if !diagonal {
        virt = lift_state(x_v);
    }
    for _ in 0..REFERENCE_ORDER {
        let ra = ph::dynamics(model, &anchor, &zero)?;
        let next_anchor = integrate_from(x, &ra);
        if diagonal {
            virt = next_anchor.clone();
        } else {
            let vs = VirtualState {
                x_v: virt,
                anchor: anchor.clone(),
            };
            let rv = vsys::virtual_dynamics(model, &vs, &zero)?;
            virt = integrate_from(x_v, &rv);
        }
        anchor = next_anchor;
    }
    Ok((virt, anchor))
}

fn reference_series(reference: &dyn Reference, t: f64) -> DVector<Series> {
    let derivs: Vec<DVector<f64>> = (0..=REFERENCE_ORDER).map(|k| reference.derivative(t, k)).collect();
    DVector::from_fn(reference.n(), |i, _| {
        let d: Vec<f64> = derivs.iter().map(|v| v[i]).collect();
        Series::from_derivatives(&d)
    })
}

fn check_inputs(model: &FjrModel, spec: &ControllerSpec, reference: &dyn Reference, x_v: &State, x: &State) -> Result<()> {
    let n = model.n_joints();
    Error::check_len("controller gains", n, spec.n_joints())?;
    Error::check_len("reference", n, reference.n())?;
    x.check(model)?;
    x_v.check(model)
}

fn exact_terms(
    model: &FjrModel,
    spec: &ControllerSpec,
    reference: &dyn Reference,
    x_v: &State,
    x: &State,
    t: f64,
    omega: &Omega,
) -> Result<ControlTerms> {
    let (virt, anchor) = flow_series(model, x_v, x)?;
    let q_d = reference_series(reference, t);
    let dq_d = q_d.map(|s| s.differentiate());
    let c = chain(model, spec, &q_d, &dq_d, &virt, &anchor, omega, &mut |_, y| {
        y.map(|s| s.differentiate())
    })?;
    Ok(ControlTerms {
        errors: ErrorCoords {
            qtil_l: values(&c.qtil_l),
            sigma_l: values(&c.sigma_l),
            qtil_m: values(&c.qtil_m),
            sigma_m: values(&c.sigma_m),
        },
        q_d: values(&q_d),
        dq_d: values(&dq_d),
        p_lr: values(&c.p_lr),
        dp_lr: values(&c.dp_lr),
        u_lv: values(&c.u_lv),
        q_md: values(&c.q_md),
        dq_md: values(&c.dq_md),
        vbar_mr: values(&c.vbar_mr),
        p_mr: values(&c.p_mr),
        dp_mr: values(&c.dp_mr),
        u_mv: values(&c.u_mv),
        filter_rate: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn filtered_terms(
    model: &FjrModel,
    spec: &ControllerSpec,
    reference: &dyn Reference,
    x_v: &State,
    x: &State,
    t: f64,
    omega: &Omega,
    filter: &FilterState,
) -> Result<ControlTerms> {
    let q_d = reference.position(t);
    let dq_d = reference.velocity(t);
    let tau = spec.filter_tau;
    let c = chain(model, spec, &q_d, &dq_d, x_v, x, omega, &mut |sig, y| {
        let z = match sig {
            Signal::LinkMomentumRef => &filter.p_lr,
            Signal::MotorPositionRef => &filter.q_md,
            Signal::MotorMomentumRef => &filter.p_mr,
        };
        (y - z) / tau
    })?;
    let rate = FilterState {
        p_lr: c.dp_lr.clone(),
        q_md: c.dq_md.clone(),
        p_mr: c.dp_mr.clone(),
    };
    Ok(ControlTerms {
        errors: ErrorCoords {
            qtil_l: c.qtil_l,
            sigma_l: c.sigma_l,
            qtil_m: c.qtil_m,
            sigma_m: c.sigma_m,
        },
        q_d,
        dq_d,
        p_lr: c.p_lr,
        dp_lr: c.dp_lr,
        u_lv: c.u_lv,
        q_md: c.q_md,
        dq_md: c.dq_md,
        vbar_mr: c.vbar_mr,
        p_mr: c.p_mr,
        dp_mr: c.dp_mr,
        u_mv: c.u_mv,
        filter_rate: Some(rate),
    })
}

/// Evaluates the virtual controller at `(x_v, x, t)`. Filtered mode needs the
/// current differentiator state.
#[allow(clippy::too_many_arguments)]
pub fn control_terms(
    model: &FjrModel,
    spec: &ControllerSpec,
    reference: &dyn Reference,
    x_v: &State,
    x: &State,
    t: f64,
    omega: &Omega,
    filter: Option<&FilterState>,
) -> Result<ControlTerms> {
    check_inputs(model, spec, reference, x_v, x)?;
    let terms = match (spec.derivative_mode, filter) {
        (DerivativeMode::ModelExact, _) => exact_terms(model, spec, reference, x_v, x, t, omega)?,
        (DerivativeMode::FilteredNumeric, Some(f)) => {
            filtered_terms(model, spec, reference, x_v, x, t, omega, f)?
        }
        (DerivativeMode::FilteredNumeric, None) => {
            return Err(Error::Unsupported(
                "filtered differentiation needs a filter state".into(),
            ))
        }
    };
    if terms.u_mv.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("control"));
    }
    Ok(terms)
}

/// Differentiator state that makes every derivative estimate zero at `(x_v, x, t)`.
pub fn initial_filter(
    model: &FjrModel,
    spec: &ControllerSpec,
    reference: &dyn Reference,
    x_v: &State,
    x: &State,
    t: f64,
    omega: &Omega,
) -> Result<FilterState> {
    check_inputs(model, spec, reference, x_v, x)?;
    let q_d = reference.position(t);
    let dq_d = reference.velocity(t);
    let mut filter = FilterState::zeros(model.n_joints());
    chain(model, spec, &q_d, &dq_d, x_v, x, omega, &mut |sig, y| {
        match sig {
            Signal::LinkMomentumRef => filter.p_lr = y.clone(),
            Signal::MotorPositionRef => filter.q_md = y.clone(),
            Signal::MotorMomentumRef => filter.p_mr = y.clone(),
        }
        DVector::zeros(y.len())
    })?;
    Ok(filter)
}

fn exact_only(spec: &ControllerSpec) -> Result<()> {
    match spec.derivative_mode {
        DerivativeMode::ModelExact => Ok(()),
        DerivativeMode::FilteredNumeric => Err(Error::Unsupported(
            "use control_terms with a filter state in filtered mode".into(),
        )),
    }
}

/// `p_lr = M_l(q_l)(q̇_ld − φ_l(q̃_lv))` and its time derivative.
pub fn link_momentum_ref(
    model: &FjrModel,
    spec: &ControllerSpec,
    reference: &dyn Reference,
    x_v: &State,
    x: &State,
    t: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    exact_only(spec)?;
    let n = model.n_joints();
    let c = control_terms(model, spec, reference, x_v, x, t, &Omega::zero(n), None)?;
    Ok((c.p_lr, c.dp_lr))
}

/// Link law `u_lv` and the motor position reference `q_md = q_lv + K⁻¹u_lv`.
pub fn link_control(
    model: &FjrModel,
    spec: &ControllerSpec,
    reference: &dyn Reference,
    x_v: &State,
    x: &State,
    t: f64,
    omega_l: &DVector<f64>,
) -> Result<LinkControl> {
    exact_only(spec)?;
    let omega = Omega {
        link: omega_l.clone(),
        motor: DVector::zeros(model.n_joints()),
    };
    let c = control_terms(model, spec, reference, x_v, x, t, &omega, None)?;
    Ok(LinkControl {
        u_lv: c.u_lv,
        q_md: c.q_md,
        dq_md: c.dq_md,
    })
}

/// Motor law `u_mv` of the virtual system.
pub fn motor_control(
    model: &FjrModel,
    spec: &ControllerSpec,
    reference: &dyn Reference,
    x_v: &State,
    x: &State,
    t: f64,
    omega: &Omega,
) -> Result<DVector<f64>> {
    exact_only(spec)?;
    Ok(control_terms(model, spec, reference, x_v, x, t, omega, None)?.u_mv)
}

/// Control applied to the robot: the motor law on the diagonal `x_v = x`.
pub fn tracking_controller(
    model: &FjrModel,
    spec: &ControllerSpec,
    reference: &dyn Reference,
    x: &State,
    t: f64,
    omega: &Omega,
) -> Result<DVector<f64>> {
    motor_control(model, spec, reference, x, x, t, omega)
}

/// Robot state whose tracking errors on the diagonal equal `errors`.
///
/// The references are solved block by block: `p_lr` depends on `q_l` only,
/// `q_md` additionally on `p_l`, and `p_mr` additionally on `q_m`.
pub fn state_from_errors(
    model: &FjrModel,
    spec: &ControllerSpec,
    reference: &dyn Reference,
    errors: &ErrorCoords,
    t: f64,
) -> Result<State> {
    let n = model.n_joints();
    let mut exact = spec.clone();
    exact.derivative_mode = DerivativeMode::ModelExact;
    let omega = Omega::zero(n);
    let q_l = reference.position(t) + &errors.qtil_l;
    let mut x = State::from_blocks(&q_l, &q_l, &DVector::zeros(n), &DVector::zeros(n));
    let terms = |x: &State| control_terms(model, &exact, reference, x, x, t, &omega, None);

    let p_l = terms(&x)?.p_lr + &errors.sigma_l;
    x = State::from_blocks(&q_l, &x.q_m(), &p_l, &x.p_m());
    let q_m = terms(&x)?.q_md + &errors.qtil_m;
    x = State::from_blocks(&q_l, &q_m, &p_l, &x.p_m());
    let p_m = terms(&x)?.p_mr + &errors.sigma_m;
    Ok(State::from_blocks(&q_l, &q_m, &p_l, &p_m))
}
