//! Virtual mechanical control system attached to a trajectory of the actual
//! system, and its variational dynamics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ph::{self, MechModel, State, StateRate};
use crate::scalar::Real;

/// A virtual state together with the actual state it is anchored to.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualState<S: Real = f64> {
    pub x_v: State<S>,
    pub anchor: State<S>,
}

impl<S: Real> VirtualState<S> {
    pub fn new(x_v: State<S>, anchor: State<S>) -> Result<Self> {
        Error::check_len("virtual state", anchor.dof(), x_v.dof())?;
        Error::check_len("virtual link block", anchor.n_links, x_v.n_links)?;
        Ok(Self { x_v, anchor })
    }

    /// The diagonal `x_v = x`.
    pub fn diagonal(x: State<S>) -> Self {
        Self {
            x_v: x.clone(),
            anchor: x,
        }
    }
}

/// `q̇_v = M⁻¹(q) p_v`, `ṗ_v = −∂P/∂q(q_v) − (E(x) + D(x)) M⁻¹(q) p_v + B u_v`.
pub fn virtual_dynamics<M: MechModel, S: Real>(
    model: &M,
    vs: &VirtualState<S>,
    u_v: &DVector<S>,
) -> Result<StateRate<S>> {
    Error::check_len("virtual input", model.n_inputs(), u_v.len())?;
    let x = &vs.anchor;
    let m_inv = ph::inertia_inverse(model, &x.q)?;
    let v = &m_inv * &x.p;
    let e = ph::workless_from_partials(&model.inertia_partials(&x.q), &v);
    let d = model.damping(&x.q, &x.p);
    let v_v = &m_inv * &vs.x_v.p;
    let mut dp = -model.potential_grad(&vs.x_v.q) - (e + d) * &v_v;
    let n = model.dof();
    let m = model.n_inputs();
    let b = model.input_map();
    for i in 0..n {
        for j in 0..m {
            if b[(i, j)] != 0.0 {
                dp[i] += u_v[j].scale(b[(i, j)]);
            }
        }
    }
    Ok(StateRate { dq: v_v, dp })
}

/// `H_v = ½ p_vᵀ M⁻¹(q) p_v + P(q_v)`.
pub fn virtual_hamiltonian<M: MechModel>(model: &M, vs: &VirtualState) -> Result<f64> {
    let m_inv = ph::inertia_inverse(model, &vs.anchor.q)?;
    Ok(0.5 * vs.x_v.p.dot(&(m_inv * &vs.x_v.p)) + model.potential(&vs.x_v.q))
}

/// Virtual output `y_v = Bᵀ M⁻¹(q) p_v`.
pub fn virtual_output<M: MechModel>(model: &M, vs: &VirtualState) -> Result<DVector<f64>> {
    let m_inv = ph::inertia_inverse(model, &vs.anchor.q)?;
    Ok(model.input_map().transpose() * (m_inv * &vs.x_v.p))
}

/// Interconnection and dissipation matrices of the variational system:
/// `J_v = [[0, I], [−I, −S_H]]`, `R_v = [[0, 0], [0, D − ½Ṁ]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalStructure {
    pub interconnection: DMatrix<f64>,
    pub dissipation: DMatrix<f64>,
    /// `blockdiag(∂²P(q_v), M⁻¹(q))`.
    pub hessian: DMatrix<f64>,
    pub input: DMatrix<f64>,
}

pub fn variational_structure<M: MechModel>(model: &M, vs: &VirtualState) -> Result<VariationalStructure> {
    let n = model.dof();
    let x = &vs.anchor;
    let m_inv = ph::inertia_inverse(model, &x.q)?;
    let v = &m_inv * &x.p;
    let partials = model.inertia_partials(&x.q);
    let s_h = ph::coriolis_from_partials(&partials, &v);
    let m_dot = ph::inertia_rate(&partials, &v);
    let d = model.damping(&x.q, &x.p);

    let mut j = DMatrix::zeros(2 * n, 2 * n);
    j.view_mut((0, n), (n, n)).fill_with_identity();
    j.view_mut((n, 0), (n, n)).copy_from(&(-DMatrix::<f64>::identity(n, n)));
    j.view_mut((n, n), (n, n)).copy_from(&(-s_h));

    let mut r = DMatrix::zeros(2 * n, 2 * n);
    r.view_mut((n, n), (n, n)).copy_from(&(d - m_dot * 0.5));

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&model.potential_hessian(&vs.x_v.q));
    h.view_mut((n, n), (n, n)).copy_from(&m_inv);

    let mut g = DMatrix::zeros(2 * n, model.n_inputs());
    g.view_mut((n, 0), (n, model.n_inputs())).copy_from(&model.input_map());

    Ok(VariationalStructure {
        interconnection: j,
        dissipation: r,
        hessian: h,
        input: g,
    })
}

/// `δẋ_v = (J_v − R_v) ∂²H_v δx_v + g δu`.
pub fn variational_dynamics<M: MechModel>(
    model: &M,
    vs: &VirtualState,
    delta: &DVector<f64>,
    delta_u: &DVector<f64>,
) -> Result<DVector<f64>> {
    Error::check_len("variation", 2 * model.dof(), delta.len())?;
    Error::check_len("input variation", model.n_inputs(), delta_u.len())?;
    let st = variational_structure(model, vs)?;
    Ok((st.interconnection - st.dissipation) * st.hessian * delta + st.input * delta_u)
}
