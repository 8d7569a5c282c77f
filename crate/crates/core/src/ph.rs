//! Port-Hamiltonian mechanical systems: energy, the Coriolis structure matrix,
//! workless forces and the two equivalent forms of the dynamics.
//!
//! Every function is generic over [`Real`] so the same formulas can be
//! evaluated on plain floats or on Taylor jets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{Real, values};

/// A mechanical system `H = ½ pᵀM⁻¹(q)p + P(q)` with dissipation `D` and a
/// constant input map `B`.
///
/// The first `n_links()` coordinates are links, the rest are motors.
pub trait MechModel: Send + Sync {
    fn n_links(&self) -> usize;
    fn n_motors(&self) -> usize;

    fn dof(&self) -> usize {
        self.n_links() + self.n_motors()
    }

    fn n_inputs(&self) -> usize {
        self.n_motors()
    }

    fn inertia<S: Real>(&self, q: &DVector<S>) -> DMatrix<S>;

    /// `∂M/∂q_k` for every `k`.
    fn inertia_partials<S: Real>(&self, q: &DVector<S>) -> Vec<DMatrix<S>>;

    fn damping<S: Real>(&self, q: &DVector<S>, p: &DVector<S>) -> DMatrix<S>;

    fn potential<S: Real>(&self, q: &DVector<S>) -> S;

    fn potential_grad<S: Real>(&self, q: &DVector<S>) -> DVector<S>;

    fn potential_hessian(&self, q: &DVector<f64>) -> DMatrix<f64>;

    fn input_map(&self) -> DMatrix<f64> {
        let n = self.dof();
        let m = self.n_inputs();
        let mut b = DMatrix::zeros(n, m);
        b.view_mut((n - m, 0), (m, m)).fill_with_identity();
        b
    }
}

/// Phase-space point `(q, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct State<S: Real = f64> {
    pub q: DVector<S>,
    pub p: DVector<S>,
    pub n_links: usize,
}

/// Time derivative of a [`State`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateRate<S: Real = f64> {
    pub dq: DVector<S>,
    pub dp: DVector<S>,
}

impl<S: Real> State<S> {
    pub fn new(q: DVector<S>, p: DVector<S>, n_links: usize) -> Result<Self> {
        Error::check_len("state momentum", q.len(), p.len())?;
        if n_links > q.len() {
            return Err(Error::DimensionMismatch {
                what: "state link block",
                expected: q.len(),
                got: n_links,
            });
        }
        Ok(Self { q, p, n_links })
    }

    pub fn from_blocks(
        q_l: &DVector<S>,
        q_m: &DVector<S>,
        p_l: &DVector<S>,
        p_m: &DVector<S>,
    ) -> Self {
        let cat = |a: &DVector<S>, b: &DVector<S>| {
            DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
        };
        Self {
            q: cat(q_l, q_m),
            p: cat(p_l, p_m),
            n_links: q_l.len(),
        }
    }

    pub fn zeros(n_links: usize, n_motors: usize) -> Self {
        let n = n_links + n_motors;
        Self {
            q: DVector::zeros(n),
            p: DVector::zeros(n),
            n_links,
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn n_motors(&self) -> usize {
        self.q.len() - self.n_links
    }

    pub fn q_l(&self) -> DVector<S> {
        self.q.rows(0, self.n_links).into_owned()
    }

    pub fn q_m(&self) -> DVector<S> {
        self.q.rows(self.n_links, self.n_motors()).into_owned()
    }

    pub fn p_l(&self) -> DVector<S> {
        self.p.rows(0, self.n_links).into_owned()
    }

    pub fn p_m(&self) -> DVector<S> {
        self.p.rows(self.n_links, self.n_motors()).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|v| v.value().is_finite())
    }

    pub fn values(&self) -> State<f64> {
        State {
            q: values(&self.q),
            p: values(&self.p),
            n_links: self.n_links,
        }
    }

    /// Packs as `[q; p]`.
    pub fn to_vector(&self) -> DVector<S> {
        DVector::from_iterator(2 * self.dof(), self.q.iter().chain(self.p.iter()).copied())
    }

    pub fn from_vector(x: &DVector<S>, n_links: usize) -> Self {
        let n = x.len() / 2;
        Self {
            q: x.rows(0, n).into_owned(),
            p: x.rows(n, n).into_owned(),
            n_links,
        }
    }

    pub fn check<M: MechModel>(&self, model: &M) -> Result<()> {
        Error::check_len("state dimension", model.dof(), self.q.len())?;
        Error::check_len("state momentum", model.dof(), self.p.len())?;
        Error::check_len("state link block", model.n_links(), self.n_links)?;
        if !self.is_finite() {
            return Err(Error::NonFinite("state"));
        }
        Ok(())
    }
}

impl<S: Real> StateRate<S> {
    pub fn to_vector(&self) -> DVector<S> {
        DVector::from_iterator(
            self.dq.len() + self.dp.len(),
            self.dq.iter().chain(self.dp.iter()).copied(),
        )
    }
}

pub fn inertia_inverse<M: MechModel, S: Real>(model: &M, q: &DVector<S>) -> Result<DMatrix<S>> {
    linalg::inverse(&model.inertia(q)).ok_or_else(|| Error::SingularInertia {
        q: values(q).iter().copied().collect(),
    })
}

/// `q̇ = M⁻¹(q) p`.
pub fn velocity<M: MechModel, S: Real>(model: &M, s: &State<S>) -> Result<DVector<S>> {
    Ok(inertia_inverse(model, &s.q)? * &s.p)
}

pub fn hamiltonian<M: MechModel, S: Real>(model: &M, s: &State<S>) -> Result<S> {
    let v = velocity(model, s)?;
    Ok(s.p.dot(&v).scale(0.5) + model.potential(&s.q))
}

/// `Ṁ = Σ_k ∂M/∂q_k q̇_k`.
pub fn inertia_rate<S: Real>(partials: &[DMatrix<S>], qdot: &DVector<S>) -> DMatrix<S> {
    let n = qdot.len();
    let mut out = DMatrix::zeros(n, n);
    for (dm, &v) in partials.iter().zip(qdot.iter()) {
        out += dm * v;
    }
    out
}

/// `S_L[k][j] = ½ Σ_i (∂M_ki/∂q_j − ∂M_ij/∂q_k) q̇_i` from precomputed partials.
pub fn coriolis_from_partials<S: Real>(partials: &[DMatrix<S>], qdot: &DVector<S>) -> DMatrix<S> {
    let n = qdot.len();
    let mut out = DMatrix::<S>::zeros(n, n);
    for k in 0..n {
        for j in (k + 1)..n {
            let mut acc = S::zero();
            for i in 0..n {
                acc += (partials[j][(k, i)] - partials[k][(i, j)]) * qdot[i];
            }
            let v = acc.scale(0.5);
            out[(k, j)] = v;
            out[(j, k)] = -v;
        }
    }
    out
}

pub fn coriolis_structure<M: MechModel, S: Real>(
    model: &M,
    q: &DVector<S>,
    qdot: &DVector<S>,
) -> Result<DMatrix<S>> {
    Error::check_len("coriolis q", model.dof(), q.len())?;
    Error::check_len("coriolis qdot", model.dof(), qdot.len())?;
    Ok(coriolis_from_partials(&model.inertia_partials(q), qdot))
}

/// `E = S_H − ½ Ṁ` from precomputed partials and velocity.
pub fn workless_from_partials<S: Real>(partials: &[DMatrix<S>], qdot: &DVector<S>) -> DMatrix<S> {
    coriolis_from_partials(partials, qdot) - inertia_rate(partials, qdot).map(|x| x.scale(0.5))
}

pub fn workless_matrix<M: MechModel, S: Real>(model: &M, s: &State<S>) -> Result<DMatrix<S>> {
    let v = velocity(model, s)?;
    Ok(workless_from_partials(&model.inertia_partials(&s.q), &v))
}

/// Alternative form: `ṗ = −∂P/∂q − (E + D) M⁻¹p + B u`.
pub fn dynamics<M: MechModel, S: Real>(model: &M, s: &State<S>, u: &DVector<S>) -> Result<StateRate<S>> {
    Error::check_len("input", model.n_inputs(), u.len())?;
    let v = velocity(model, s)?;
    let e = workless_from_partials(&model.inertia_partials(&s.q), &v);
    let d = model.damping(&s.q, &s.p);
    let dp = -model.potential_grad(&s.q) - (e + d) * &v + input_force(model, u);
    Ok(StateRate { dq: v, dp })
}

/// Standard form: `ṗ = −∂H/∂q − D ∂H/∂p + B u`.
pub fn dynamics_standard<M: MechModel, S: Real>(
    model: &M,
    s: &State<S>,
    u: &DVector<S>,
) -> Result<StateRate<S>> {
    Error::check_len("input", model.n_inputs(), u.len())?;
    let v = velocity(model, s)?;
    let partials = model.inertia_partials(&s.q);
    // ∂/∂q_k ½pᵀM⁻¹p = −½ q̇ᵀ ∂M/∂q_k q̇
    let kinetic_grad = DVector::from_iterator(
        v.len(),
        partials.iter().map(|dm| -(v.dot(&(dm * &v))).scale(0.5)),
    );
    let d = model.damping(&s.q, &s.p);
    let dp = -(kinetic_grad + model.potential_grad(&s.q)) - d * &v + input_force(model, u);
    Ok(StateRate { dq: v, dp })
}

fn input_force<M: MechModel, S: Real>(model: &M, u: &DVector<S>) -> DVector<S> {
    let n = model.dof();
    let m = model.n_inputs();
    let b = model.input_map();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        for j in 0..m {
            let bij = b[(i, j)];
            if bij != 0.0 {
                out[i] += u[j].scale(bij);
            }
        }
    }
    out
}

/// Supplied power `uᵀy` with `y = BᵀM⁻¹p` and dissipated power `q̇ᵀDq̇`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBalance {
    pub supplied: f64,
    pub dissipated: f64,
}

pub fn power_balance<M: MechModel>(model: &M, s: &State, u: &DVector<f64>) -> Result<PowerBalance> {
    Error::check_len("input", model.n_inputs(), u.len())?;
    let v = velocity(model, s)?;
    let y = model.input_map().transpose() * &v;
    let d = model.damping(&s.q, &s.p);
    Ok(PowerBalance {
        supplied: u.dot(&y),
        dissipated: v.dot(&(d * &v)),
    })
}

/// Power exchanged by the workless forces, `q̇ᵀE q̇ + ½ q̇ᵀṀq̇`, which is zero
/// for any `M`: the `S_H` part is skew and the `Ṁ` part reappears as the
/// kinetic-energy gradient of the standard form.
pub fn workless_residual<M: MechModel>(model: &M, s: &State) -> Result<f64> {
    let v = velocity(model, s)?;
    let partials = model.inertia_partials(&s.q);
    let e = workless_from_partials(&partials, &v);
    let mdot = inertia_rate(&partials, &v);
    Ok(v.dot(&(&e * &v)) + 0.5 * v.dot(&(mdot * &v)))
}

/// Forward-difference `∂M/∂q_k`, for checking analytic partials.
pub fn inertia_partials_fd<M: MechModel>(model: &M, q: &DVector<f64>, h: f64) -> Vec<DMatrix<f64>> {
    let m0 = model.inertia(q);
    (0..q.len())
        .map(|k| {
            let mut qh = q.clone();
            qh[k] += h;
            (model.inertia(&qh) - &m0) / h
        })
        .collect()
}

/// Constant-inertia quadratic-potential system `H = ½pᵀM⁻¹p + ½qᵀKq`.
#[derive(Debug, Clone)]
pub struct LinearMechModel {
    pub n_links: usize,
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
}

impl LinearMechModel {
    pub fn new(
        n_links: usize,
        mass: DMatrix<f64>,
        damping: DMatrix<f64>,
        stiffness: DMatrix<f64>,
    ) -> Result<Self> {
        let n = mass.nrows();
        Error::check_len("damping", n, damping.nrows())?;
        Error::check_len("stiffness", n, stiffness.nrows())?;
        if !linalg::is_symmetric(&mass, 1e-14) || !linalg::is_positive_definite(&mass) {
            return Err(Error::param("mass", "must be symmetric positive definite"));
        }
        if n_links > n {
            return Err(Error::param("n_links", "exceeds the number of coordinates"));
        }
        Ok(Self {
            n_links,
            mass,
            damping,
            stiffness,
        })
    }
}

impl MechModel for LinearMechModel {
    fn n_links(&self) -> usize {
        self.n_links
    }

    fn n_motors(&self) -> usize {
        self.mass.nrows() - self.n_links
    }

    fn inertia<S: Real>(&self, _q: &DVector<S>) -> DMatrix<S> {
        self.mass.map(S::from_f64)
    }

    fn inertia_partials<S: Real>(&self, q: &DVector<S>) -> Vec<DMatrix<S>> {
        let n = q.len();
        vec![DMatrix::zeros(n, n); n]
    }

    fn damping<S: Real>(&self, _q: &DVector<S>, _p: &DVector<S>) -> DMatrix<S> {
        self.damping.map(S::from_f64)
    }

    fn potential<S: Real>(&self, q: &DVector<S>) -> S {
        q.dot(&(self.stiffness.map(S::from_f64) * q)).scale(0.5)
    }

    fn potential_grad<S: Real>(&self, q: &DVector<S>) -> DVector<S> {
        self.stiffness.map(S::from_f64) * q
    }

    fn potential_hessian(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        self.stiffness.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_model(n: usize) -> LinearMechModel {
        LinearMechModel::new(
            n / 2,
            DMatrix::identity(n, n),
            DMatrix::zeros(n, n),
            DMatrix::zeros(n, n),
        )
        .unwrap()
    }

    #[test]
    fn zero_momentum_zero_potential_has_zero_energy() {
        let m = unit_model(2);
        let s = State::<f64>::zeros(1, 1);
        assert_eq!(hamiltonian(&m, &s).unwrap(), 0.0);
    }

    #[test]
    fn identity_inertia_energy() {
        let m = unit_model(2);
        let s = State::new(DVector::zeros(2), DVector::from_vec(vec![1.0, 1.0]), 1).unwrap();
        assert_relative_eq!(hamiltonian(&m, &s).unwrap(), 1.0);
    }

    #[test]
    fn constant_inertia_has_no_coriolis_or_workless_terms() {
        let m = unit_model(4);
        let q = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        assert_eq!(coriolis_structure(&m, &q, &v).unwrap(), DMatrix::zeros(4, 4));
        let s = State::new(q, v, 2).unwrap();
        assert_eq!(workless_matrix(&m, &s).unwrap(), DMatrix::zeros(4, 4));
    }

    #[test]
    fn equilibrium_is_stationary() {
        let m = LinearMechModel::new(
            1,
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 3.0,
        )
        .unwrap();
        let s = State::<f64>::zeros(1, 1);
        let r = dynamics(&m, &s, &DVector::zeros(1)).unwrap();
        assert_eq!(r.dq, DVector::zeros(2));
        assert_eq!(r.dp, DVector::zeros(2));
    }

    #[test]
    fn input_enters_motor_momentum() {
        let m = unit_model(4);
        let s = State::<f64>::zeros(2, 2);
        let u = DVector::from_vec(vec![1.5, -2.0]);
        let r = dynamics(&m, &s, &u).unwrap();
        assert_eq!(r.dp.as_slice(), &[0.0, 0.0, 1.5, -2.0]);
    }

    #[test]
    fn power_balance_vanishes_without_input_or_motion() {
        let m = unit_model(2);
        let s = State::new(DVector::zeros(2), DVector::from_vec(vec![0.3, 0.4]), 1).unwrap();
        let pb = power_balance(&m, &s, &DVector::zeros(1)).unwrap();
        assert_eq!((pb.supplied, pb.dissipated), (0.0, 0.0));
        let s0 = State::<f64>::zeros(1, 1);
        let pb = power_balance(&m, &s0, &DVector::from_vec(vec![2.0])).unwrap();
        assert_eq!((pb.supplied, pb.dissipated), (0.0, 0.0));
    }

    #[test]
    fn dimension_errors_are_reported() {
        let m = unit_model(2);
        let s = State::<f64>::zeros(1, 1);
        assert!(matches!(
            dynamics(&m, &s, &DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = State::<f64>::zeros(2, 2);
        assert!(bad.check(&m).is_err());
    }
}
