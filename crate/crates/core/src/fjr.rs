//! Flexible-joint robots: planar serial links driven through linear springs
//! by motors with constant inertia.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, MatrixSpec};
use crate::ph::{MechModel, State};
use crate::scalar::Real;

/// Physical parameters in SI units. Damping entries are the diagonals of
/// `D_l` and `D_m` in N·m·s/rad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FjrParams {
    pub link_masses: Vec<f64>,
    pub link_inertias: Vec<f64>,
    pub link_lengths: Vec<f64>,
    pub link_com: Vec<f64>,
    pub motor_masses: Vec<f64>,
    pub link_damping: Vec<f64>,
    pub motor_damping: Vec<f64>,
    /// Joint stiffness `K` in N·m/rad.
    pub stiffness: MatrixSpec,
    #[serde(default)]
    pub gravity_enabled: bool,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    9.81
}

/// Joint stiffness used when none is given.
pub const DEFAULT_STIFFNESS: [f64; 2] = [9.0, 4.0];

/// The Quanser 2-DOF serial flexible-joint robot.
pub fn quanser_params() -> FjrParams {
    FjrParams {
        link_masses: vec![1.510, 0.873],
        link_inertias: vec![0.0392, 0.00808],
        link_lengths: vec![0.343, 0.267],
        link_com: vec![0.159, 0.055],
        motor_masses: vec![0.23, 0.01],
        link_damping: vec![0.8, 0.55],
        motor_damping: vec![0.2, 90.0],
        stiffness: MatrixSpec::diagonal(&DEFAULT_STIFFNESS),
        gravity_enabled: false,
        gravity: default_gravity(),
    }
}

impl FjrParams {
    pub fn n_joints(&self) -> usize {
        self.link_masses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_joints();
        if n == 0 {
            return Err(Error::param("link_masses", "at least one joint is required"));
        }
        let positive = [
            ("link_masses", &self.link_masses),
            ("link_inertias", &self.link_inertias),
            ("link_lengths", &self.link_lengths),
            ("link_com", &self.link_com),
            ("motor_masses", &self.motor_masses),
        ];
        for (key, v) in positive {
            check_entries(key, v, n, |x| x > 0.0, "entries must be > 0")?;
        }
        for (key, v) in [("link_damping", &self.link_damping), ("motor_damping", &self.motor_damping)] {
            check_entries(key, v, n, |x| x >= 0.0, "entries must be >= 0")?;
        }
        self.stiffness.to_spd("stiffness", n)?;
        if !self.gravity.is_finite() {
            return Err(Error::param("gravity", "must be finite"));
        }
        Ok(())
    }

    /// `(a1, a2, b)` of the two-link inertia `[[a1+a2+2b cos q2, a2+b cos q2], [a2+b cos q2, a2]]`.
    pub fn two_link_constants(&self) -> Option<(f64, f64, f64)> {
        if self.n_joints() != 2 {
            return None;
        }
        let (m, i, l, r) = (&self.link_masses, &self.link_inertias, &self.link_lengths, &self.link_com);
        let a1 = m[0] * r[0] * r[0] + m[1] * l[0] * l[0] + i[0];
        let a2 = m[1] * r[1] * r[1] + i[1];
        let b = m[1] * l[0] * r[1];
        Some((a1, a2, b))
    }
}

fn check_entries(
    key: &str,
    v: &[f64],
    n: usize,
    ok: impl Fn(f64) -> bool,
    reason: &str,
) -> Result<()> {
    if v.len() != n {
        return Err(Error::param(key, format!("expected {n} entries, got {}", v.len())));
    }
    if v.iter().any(|&x| !x.is_finite() || !ok(x)) {
        return Err(Error::param(key, reason));
    }
    Ok(())
}

/// Flexible-joint robot with coordinates `q = [q_l; q_m]`.
#[derive(Debug, Clone)]
pub struct FjrModel {
    params: FjrParams,
    n: usize,
    stiffness: DMatrix<f64>,
    stiffness_inv: DMatrix<f64>,
    motor_inertia: DMatrix<f64>,
    motor_inertia_inv: DMatrix<f64>,
    link_damping: DMatrix<f64>,
    motor_damping: DMatrix<f64>,
}

impl FjrModel {
    pub fn new(params: FjrParams) -> Result<Self> {
        params.validate()?;
        let n = params.n_joints();
        let stiffness = params.stiffness.to_spd("stiffness", n)?;
        let stiffness_inv = linalg::inverse(&stiffness)
            .ok_or_else(|| Error::param("stiffness", "is singular"))?;
        let motor_inertia = linalg::diag(&params.motor_masses);
        let motor_inertia_inv = linalg::diag(&params.motor_masses.iter().map(|m| 1.0 / m).collect::<Vec<_>>());
        Ok(Self {
            n,
            stiffness,
            stiffness_inv,
            motor_inertia,
            motor_inertia_inv,
            link_damping: linalg::diag(&params.link_damping),
            motor_damping: linalg::diag(&params.motor_damping),
            params,
        })
    }

    pub fn quanser() -> Self {
        Self::new(quanser_params()).expect("built-in parameters are valid")
    }

    pub fn params(&self) -> &FjrParams {
        &self.params
    }

    pub fn n_joints(&self) -> usize {
        self.n
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn stiffness_inv(&self) -> &DMatrix<f64> {
        &self.stiffness_inv
    }

    pub fn motor_inertia(&self) -> &DMatrix<f64> {
        &self.motor_inertia
    }

    pub fn motor_inertia_inv(&self) -> &DMatrix<f64> {
        &self.motor_inertia_inv
    }

    pub fn link_damping(&self) -> &DMatrix<f64> {
        &self.link_damping
    }

    pub fn motor_damping(&self) -> &DMatrix<f64> {
        &self.motor_damping
    }

    /// Lever arm of joint `a` in the position of the centre of mass of link `i`.
    fn arm(&self, i: usize, a: usize) -> f64 {
        if a < i {
            self.params.link_lengths[a]
        } else {
            self.params.link_com[i]
        }
    }

    /// `sin` and `cos` of `θ_a − θ_b` for all `a ≥ b`, where `θ_a` is the
    /// absolute angle of link `a`.
    fn relative_angles<S: Real>(&self, q_l: &DVector<S>) -> Vec<Vec<(S, S)>> {
        let n = self.n;
        let mut out = vec![vec![(S::zero(), S::one()); n]; n];
        for a in 0..n {
            let mut diff = S::zero();
            for b in (0..a).rev() {
                diff += q_l[b + 1];
                out[a][b] = diff.sin_cos();
            }
        }
        out
    }

    fn sin_cos_between<S: Real>(rel: &[Vec<(S, S)>], a: usize, b: usize) -> (S, S) {
        if a >= b {
            rel[a][b]
        } else {
            let (s, c) = rel[b][a];
            (-s, c)
        }
    }

    pub fn link_inertia<S: Real>(&self, q_l: &DVector<S>) -> DMatrix<S> {
        let n = self.n;
        let rel = self.relative_angles(q_l);
        let mut m = DMatrix::<S>::zeros(n, n);
        for j in 0..n {
            for k in j..n {
                let mut acc = 0.0_f64;
                let mut trig = S::zero();
                for i in k..n {
                    acc += self.params.link_inertias[i];
                    let mi = self.params.link_masses[i];
                    for a in j..=i {
                        for b in k..=i {
                            let w = mi * self.arm(i, a) * self.arm(i, b);
                            if a == b {
                                acc += w;
                            } else {
                                trig += Self::sin_cos_between(&rel, a, b).1.scale(w);
                            }
                        }
                    }
                }
                let v = trig + S::from_f64(acc);
                m[(j, k)] = v;
                m[(k, j)] = v;
            }
        }
        m
    }

    /// `∂M_l/∂q_lc` for every link coordinate `c`.
    pub fn link_inertia_partials<S: Real>(&self, q_l: &DVector<S>) -> Vec<DMatrix<S>> {
        let n = self.n;
        let rel = self.relative_angles(q_l);
        let mut out = vec![DMatrix::<S>::zeros(n, n); n];
        for (c, dm) in out.iter_mut().enumerate() {
            for j in 0..n {
                for k in j..n {
                    let mut v = S::zero();
                    for i in k..n {
                        let mi = self.params.link_masses[i];
                        for a in j..=i {
                            for b in k..=i {
                                let sign = (c <= a) as i32 - (c <= b) as i32;
                                if sign == 0 {
                                    continue;
                                }
                                let w = mi * self.arm(i, a) * self.arm(i, b);
                                v -= Self::sin_cos_between(&rel, a, b).0.scale(w * sign as f64);
                            }
                        }
                    }
                    dm[(j, k)] = v;
                    dm[(k, j)] = v;
                }
            }
        }
        out
    }

    fn absolute_angles<S: Real>(q_l: &DVector<S>) -> Vec<S> {
        let mut acc = S::zero();
        q_l.iter()
            .map(|&q| {
                acc += q;
                acc
            })
            .collect()
    }

    /// Gravity potential of the links, `g Σ_i m_i y_i`, with `y` the height of
    /// each centre of mass. Zero when gravity is disabled.
    pub fn link_gravity<S: Real>(&self, q_l: &DVector<S>) -> S {
        if !self.params.gravity_enabled {
            return S::zero();
        }
        let th = Self::absolute_angles(q_l);
        let mut p = S::zero();
        for i in 0..self.n {
            let w = self.params.gravity * self.params.link_masses[i];
            for (a, t) in th.iter().enumerate().take(i + 1) {
                p += t.sin().scale(w * self.arm(i, a));
            }
        }
        p
    }

    pub fn link_gravity_grad<S: Real>(&self, q_l: &DVector<S>) -> DVector<S> {
        let mut g = DVector::<S>::zeros(self.n);
        if !self.params.gravity_enabled {
            return g;
        }
        let th = Self::absolute_angles(q_l);
        for i in 0..self.n {
            let w = self.params.gravity * self.params.link_masses[i];
            for (a, t) in th.iter().enumerate().take(i + 1) {
                let term = t.cos().scale(w * self.arm(i, a));
                for c in 0..=a {
                    g[c] += term;
                }
            }
        }
        g
    }

    pub fn link_gravity_hessian(&self, q_l: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        if !self.params.gravity_enabled {
            return h;
        }
        let th = Self::absolute_angles(q_l);
        for i in 0..self.n {
            let w = self.params.gravity * self.params.link_masses[i];
            for (a, t) in th.iter().enumerate().take(i + 1) {
                let term = -w * self.arm(i, a) * t.sin();
                for c in 0..=a {
                    for d in 0..=a {
                        h[(c, d)] += term;
                    }
                }
            }
        }
        h
    }

    /// Motor-side gravity gradient. Motors sit on the joint axes, so their
    /// weight acts on the links only and this is identically zero.
    pub fn motor_gravity_grad<S: Real>(&self, _q_m: &DVector<S>) -> DVector<S> {
        DVector::zeros(self.n)
    }

    /// Spring potential `½ ζᵀKζ`.
    pub fn spring_potential<S: Real>(&self, zeta: &DVector<S>) -> S {
        zeta.dot(&(self.stiffness.map(S::from_f64) * zeta)).scale(0.5)
    }
}

/// `ζ = q_m − q_l`.
pub fn spring_deflection<S: Real>(s: &State<S>) -> DVector<S> {
    s.q_m() - s.q_l()
}

fn split<S: Real>(q: &DVector<S>, n: usize) -> (DVector<S>, DVector<S>) {
    (q.rows(0, n).into_owned(), q.rows(n, n).into_owned())
}

impl MechModel for FjrModel {
    fn n_links(&self) -> usize {
        self.n
    }

    fn n_motors(&self) -> usize {
        self.n
    }

    fn inertia<S: Real>(&self, q: &DVector<S>) -> DMatrix<S> {
        let (q_l, _) = split(q, self.n);
        let mm = self.motor_inertia.map(S::from_f64);
        linalg::block_diag(&[&self.link_inertia(&q_l), &mm])
    }

    fn inertia_partials<S: Real>(&self, q: &DVector<S>) -> Vec<DMatrix<S>> {
        let n = self.n;
        let (q_l, _) = split(q, n);
        let mut out: Vec<DMatrix<S>> = self
            .link_inertia_partials(&q_l)
            .into_iter()
            .map(|dl| {
                let mut m = DMatrix::zeros(2 * n, 2 * n);
                m.view_mut((0, 0), (n, n)).copy_from(&dl);
                m
            })
            .collect();
        out.extend((0..n).map(|_| DMatrix::zeros(2 * n, 2 * n)));
        out
    }

    fn damping<S: Real>(&self, _q: &DVector<S>, _p: &DVector<S>) -> DMatrix<S> {
        linalg::block_diag(&[&self.link_damping, &self.motor_damping]).map(S::from_f64)
    }

    fn potential<S: Real>(&self, q: &DVector<S>) -> S {
        let (q_l, q_m) = split(q, self.n);
        self.spring_potential(&(q_m - &q_l)) + self.link_gravity(&q_l)
    }

    fn potential_grad<S: Real>(&self, q: &DVector<S>) -> DVector<S> {
        let n = self.n;
        let (q_l, q_m) = split(q, n);
        let force = self.stiffness.map(S::from_f64) * (&q_m - &q_l);
        let g_l = self.link_gravity_grad(&q_l) - &force;
        let g_m = force + self.motor_gravity_grad(&q_m);
        DVector::from_iterator(2 * n, g_l.iter().chain(g_m.iter()).copied())
    }

    fn potential_hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let (q_l, _) = split(q, n);
        let k = &self.stiffness;
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&(k + self.link_gravity_hessian(&q_l)));
        h.view_mut((0, n), (n, n)).copy_from(&(-k));
        h.view_mut((n, 0), (n, n)).copy_from(&(-k));
        h.view_mut((n, n), (n, n)).copy_from(k);
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ph;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_state(rng: &mut ChaCha8Rng) -> State {
        let mut v = || DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
        let q = v();
        let p = v() * 0.1;
        State::new(q, p, 2).unwrap()
    }

    #[test]
    fn quanser_table_values() {
        let p = quanser_params();
        assert_eq!(p.link_masses, vec![1.510, 0.873]);
        assert_eq!(p.link_inertias, vec![0.0392, 0.00808]);
        assert_eq!(p.link_lengths, vec![0.343, 0.267]);
        assert_eq!(p.link_com, vec![0.159, 0.055]);
        assert_eq!(p.motor_masses, vec![0.23, 0.01]);
        assert_eq!(p.link_damping, vec![0.8, 0.55]);
        assert_eq!(p.motor_damping, vec![0.2, 90.0]);
        assert!(!p.gravity_enabled);
    }

    #[test]
    fn two_link_constants_by_hand() {
        let (a1, a2, b) = quanser_params().two_link_constants().unwrap();
        // 1.510·0.025281 + 0.873·0.117649 + 0.0392
        assert_relative_eq!(a1, 0.038174_31 + 0.102_707_577 + 0.0392, epsilon = 1e-12);
        assert_relative_eq!(a1, 0.180_081_887, epsilon = 1e-9);
        assert_relative_eq!(a2, 0.873 * 0.003025 + 0.00808, epsilon = 1e-15);
        assert_relative_eq!(a2, 0.010_720_825, epsilon = 1e-9);
        assert_relative_eq!(b, 0.873 * 0.343 * 0.055, epsilon = 1e-15);
        assert_relative_eq!(b, 0.016_469_145, epsilon = 1e-9);
    }

    #[test]
    fn chain_inertia_matches_two_link_closed_form() {
        let m = FjrModel::quanser();
        let (a1, a2, b) = m.params().two_link_constants().unwrap();
        for &q2 in &[0.0, PI / 2.0, -1.3, 2.9] {
            let ml = m.link_inertia(&DVector::from_vec(vec![0.4, q2]));
            let c = q2.cos();
            let expected = DMatrix::from_row_slice(2, 2, &[a1 + a2 + 2.0 * b * c, a2 + b * c, a2 + b * c, a2]);
            assert_relative_eq!(ml, expected, epsilon = 1e-15);
        }
        let ml = m.link_inertia(&DVector::from_vec(vec![0.0, PI / 2.0]));
        assert_relative_eq!(ml[(0, 1)], a2, epsilon = 1e-15);
    }

    #[test]
    fn inertia_partials_against_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let models = [FjrModel::quanser(), three_link()];
        for model in &models {
            let n = model.dof();
            for _ in 0..20 {
                let q = DVector::from_fn(n, |_, _| rng.random_range(-PI..PI));
                let exact = model.inertia_partials(&q);
                let e4 = max_diff(&ph::inertia_partials_fd(model, &q, 1e-4), &exact);
                let e5 = max_diff(&ph::inertia_partials_fd(model, &q, 1e-5), &exact);
                assert!(e4 < 1e-4 && e5 < 1e-5, "fd errors {e4} {e5}");
                assert!(e5 < e4 * 0.2 || e4 < 1e-10);
            }
        }
    }

    fn max_diff(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
    }

    fn three_link() -> FjrModel {
        FjrModel::new(FjrParams {
            link_masses: vec![1.0, 0.8, 0.5],
            link_inertias: vec![0.02, 0.01, 0.005],
            link_lengths: vec![0.4, 0.3, 0.2],
            link_com: vec![0.2, 0.15, 0.1],
            motor_masses: vec![0.1, 0.05, 0.02],
            link_damping: vec![0.1, 0.1, 0.1],
            motor_damping: vec![0.1, 0.1, 0.1],
            stiffness: MatrixSpec::diagonal(&[5.0, 4.0, 3.0]),
            gravity_enabled: true,
            gravity: 9.81,
        })
        .unwrap()
    }

    #[test]
    fn link_inertia_positive_definite_on_grid() {
        let m = FjrModel::quanser();
        for i in 0..1000 {
            let q2 = -PI + 2.0 * PI * i as f64 / 999.0;
            let ml = m.link_inertia(&DVector::from_vec(vec![0.0, q2]));
            assert!(linalg::is_symmetric(&ml, 0.0));
            assert!(linalg::is_positive_definite(&ml), "q2 = {q2}");
        }
        let (a1, a2, b) = m.params().two_link_constants().unwrap();
        assert!(a1 * a2 > b * b);
    }

    #[test]
    fn energy_at_straight_configuration() {
        let m = FjrModel::quanser();
        let (a1, a2, b) = m.params().two_link_constants().unwrap();
        let s = State::new(DVector::zeros(4), DVector::from_vec(vec![0.1, 0.0, 0.0, 0.0]), 2).unwrap();
        // (M_l⁻¹)_11 = a2 / det
        let det = (a1 + a2 + 2.0 * b) * a2 - (a2 + b) * (a2 + b);
        let expected = 0.5 * 0.01 * a2 / det;
        assert_relative_eq!(ph::hamiltonian(&m, &s).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn coriolis_example_at_right_angle() {
        let m = FjrModel::quanser();
        let (_, _, b) = m.params().two_link_constants().unwrap();
        let q = DVector::from_vec(vec![0.0, PI / 2.0, 0.0, 0.0]);
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let s = ph::coriolis_structure(&m, &q, &v).unwrap();
        assert_relative_eq!(s[(0, 1)], -b, epsilon = 1e-15);
        assert_relative_eq!(s[(1, 0)], b, epsilon = 1e-15);
        assert_eq!(ph::coriolis_structure(&m, &q, &DVector::zeros(4)).unwrap(), DMatrix::zeros(4, 4));
    }

    /// Closed forms of the link blocks for the two-link arm.
    fn closed_forms(b: f64, q2: f64, v1: f64, v2: f64) -> [DMatrix<f64>; 3] {
        let s = q2.sin();
        let e = DMatrix::from_row_slice(2, 2, &[b * s * v2, -b * s * v1, b * s * (v1 + v2), 0.0]);
        let sl = DMatrix::from_row_slice(2, 2, &[0.0, -b * s * (v1 + 0.5 * v2), b * s * (v1 + 0.5 * v2), 0.0]);
        let mdot = DMatrix::from_row_slice(2, 2, &[2.0 * v2, v2, v2, 0.0]) * (-b * s);
        [e, sl, mdot]
    }

    #[test]
    fn workless_matrix_matches_closed_form() {
        let m = FjrModel::quanser();
        let (_, _, b) = m.params().two_link_constants().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let s = random_state(&mut rng);
            let v = ph::velocity(&m, &s).unwrap();
            let [e_l, s_l, mdot_l] = closed_forms(b, s.q[1], v[0], v[1]);
            let e = ph::workless_matrix(&m, &s).unwrap();
            assert!((e.view((0, 0), (2, 2)) - &e_l).amax() < 1e-12);
            assert_eq!(e.view((0, 2), (2, 2)).amax(), 0.0);
            assert_eq!(e.view((2, 0), (2, 4)).amax(), 0.0);
            let sh = ph::coriolis_structure(&m, &s.q, &v).unwrap();
            assert!((sh.view((0, 0), (2, 2)) - &s_l).amax() < 1e-12);
            let mdot = ph::inertia_rate(&m.inertia_partials(&s.q), &v);
            assert!((mdot.view((0, 0), (2, 2)) - &mdot_l).amax() < 1e-12);
            assert_eq!(mdot.view((2, 2), (2, 2)).amax(), 0.0);
        }
    }

    #[test]
    fn worked_example_at_right_angle() {
        let m = FjrModel::quanser();
        let (_, _, b) = m.params().two_link_constants().unwrap();
        let q = DVector::from_vec(vec![0.3, PI / 2.0, 0.0, 0.0]);
        let ml = m.link_inertia(&q.rows(0, 2).into_owned());
        let p_l = &ml * DVector::from_vec(vec![1.0, 1.0]);
        let p = DVector::from_vec(vec![p_l[0], p_l[1], 0.0, 0.0]);
        let e = ph::workless_matrix(&m, &State::new(q, p, 2).unwrap()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[b, -b, 2.0 * b, 0.0]);
        assert_relative_eq!(e.view((0, 0), (2, 2)).into_owned(), expected, epsilon = 1e-14);
    }

    #[test]
    fn spring_force_and_deflection() {
        let mut p = quanser_params();
        p.stiffness = MatrixSpec::diagonal(&[1.0, 1.0]);
        let m = FjrModel::new(p).unwrap();
        let q = DVector::from_vec(vec![0.0, 0.0, 0.1, 0.0]);
        let g = m.potential_grad(&q);
        assert_relative_eq!(g.rows(0, 2).into_owned(), DVector::from_vec(vec![-0.1, 0.0]), epsilon = 1e-16);
        let s = State::new(
            DVector::from_vec(vec![0.5, 0.0, 1.0, 1.0]),
            DVector::zeros(4),
            2,
        )
        .unwrap();
        assert_eq!(spring_deflection(&s).as_slice(), &[0.5, 1.0]);
        let same = State::new(DVector::from_vec(vec![0.2, 0.1, 0.2, 0.1]), DVector::zeros(4), 2).unwrap();
        assert_eq!(spring_deflection(&same), DVector::zeros(2));
    }

    #[test]
    fn potential_derivatives_against_finite_differences() {
        let m = three_link();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for _ in 0..20 {
            let q = DVector::from_fn(6, |_, _| rng.random_range(-PI..PI));
            let g = m.potential_grad(&q);
            let hess = m.potential_hessian(&q);
            for k in 0..6 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[k] += h;
                qm[k] -= h;
                let fd = (m.potential(&qp) - m.potential(&qm)) / (2.0 * h);
                assert_relative_eq!(g[k], fd, epsilon = 1e-7);
                let fd_col = (m.potential_grad(&qp) - m.potential_grad(&qm)) / (2.0 * h);
                assert!((hess.column(k) - fd_col).amax() < 1e-6);
            }
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = quanser_params();
        p.link_masses[0] = 0.0;
        assert!(matches!(FjrModel::new(p), Err(Error::InvalidParameter { key, .. }) if key == "link_masses"));
        let mut p = quanser_params();
        p.motor_damping[1] = -1.0;
        assert!(FjrModel::new(p).is_err());
        let mut p = quanser_params();
        p.stiffness = MatrixSpec::diagonal(&[1.0, -1.0]);
        assert!(matches!(FjrModel::new(p), Err(Error::InvalidParameter { key, .. }) if key == "stiffness"));
        let mut p = quanser_params();
        p.link_com.pop();
        assert!(FjrModel::new(p).is_err());
    }
}
