//! Scalar abstraction shared by the plain `f64` code paths and the
//! truncated Taylor-series arithmetic used for exact time derivatives.

use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, DVector, Scalar};
use num_traits::{One, Zero};

/// Field-like scalar the model and controller formulas are written against.
pub trait Real:
    Scalar
    + Copy
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
{
    fn from_f64(v: f64) -> Self;
    /// Leading (point) value.
    fn value(self) -> f64;
    fn scale(self, k: f64) -> Self;
    fn sin_cos(self) -> (Self, Self);
    fn tanh(self) -> Self;

    fn sin(self) -> Self {
        self.sin_cos().0
    }

    fn cos(self) -> Self {
        self.sin_cos().1
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
    #[inline]
    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

/// Truncated Taylor series `c[0] + c[1] s + ... + c[N-1] s^(N-1)` of a signal
/// around the current time, with normalized coefficients `c[k] = f^(k) / k!`.
///
/// Arithmetic is exact up to the truncation order, so feeding a jet of the
/// state trajectory through a formula yields the exact derivatives of the
/// formula's output along that trajectory.
#[derive(Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub c: [f64; N],
}

impl<const N: usize> Jet<N> {
    pub const fn constant(v: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = v;
        Self { c }
    }

    /// The independent variable `t0 + s`.
    pub fn variable(t0: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = t0;
        if N > 1 {
            c[1] = 1.0;
        }
        Self { c }
    }

    /// Builds a series from successive derivatives `f, f', f'', ...`.
    pub fn from_derivatives(derivs: &[f64]) -> Self {
        let mut c = [0.0; N];
        let mut fact = 1.0;
        for (k, slot) in c.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            if let Some(d) = derivs.get(k) {
                *slot = d / fact;
            }
        }
        Self { c }
    }

    /// k-th time derivative at the expansion point.
    pub fn derivative_at(&self, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        self.c[k] * fact
    }

    /// Series of the time derivative. The top coefficient is lost.
    pub fn differentiate(&self) -> Self {
        let mut c = [0.0; N];
        for k in 0..N.saturating_sub(1) {
            c[k] = (k + 1) as f64 * self.c[k + 1];
        }
        Self { c }
    }

    /// Antiderivative vanishing at the expansion point.
    pub fn integrate(&self) -> Self {
        let mut c = [0.0; N];
        for k in 1..N {
            c[k] = self.c[k - 1] / k as f64;
        }
        Self { c }
    }
}

impl<const N: usize> fmt::Debug for Jet<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet{:?}", self.c)
    }
}

impl<const N: usize> Default for Jet<N> {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

impl<const N: usize> Zero for Jet<N> {
    fn zero() -> Self {
        Self::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.c.iter().all(|v| *v == 0.0)
    }
}

impl<const N: usize> One for Jet<N> {
    fn one() -> Self {
        Self::constant(1.0)
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<const N: usize> AddAssign for Jet<N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        for k in 0..N {
            self.c[k] += rhs.c[k];
        }
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl<const N: usize> SubAssign for Jet<N> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        for k in 0..N {
            self.c[k] -= rhs.c[k];
        }
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        for v in self.c.iter_mut() {
            *v = -*v;
        }
        self
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut c = [0.0; N];
        for k in 0..N {
            let mut acc = 0.0;
            for i in 0..=k {
                acc += self.c[i] * rhs.c[k - i];
            }
            c[k] = acc;
        }
        Self { c }
    }
}

impl<const N: usize> MulAssign for Jet<N> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let mut q = [0.0; N];
        let inv = 1.0 / rhs.c[0];
        for k in 0..N {
            let mut acc = self.c[k];
            for i in 1..=k {
                acc -= rhs.c[i] * q[k - i];
            }
            q[k] = acc * inv;
        }
        Self { c: q }
    }
}

impl<const N: usize> DivAssign for Jet<N> {
    #[inline]
    fn div_assign(&mut self, rhs: Self) {
        *self = *self / rhs;
    }
}

impl<const N: usize> Real for Jet<N> {
    fn from_f64(v: f64) -> Self {
        Self::constant(v)
    }

    #[inline]
    fn value(self) -> f64 {
        self.c[0]
    }

    #[inline]
    fn scale(mut self, k: f64) -> Self {
        for v in self.c.iter_mut() {
            *v *= k;
        }
        self
    }

    fn sin_cos(self) -> (Self, Self) {
        // s' = c x', c' = -s x'
        let mut s = [0.0; N];
        let mut c = [0.0; N];
        let (s0, c0) = self.c[0].sin_cos();
        s[0] = s0;
        c[0] = c0;
        for k in 1..N {
            let mut ds = 0.0;
            let mut dc = 0.0;
            for j in 1..=k {
                let jx = j as f64 * self.c[j];
                ds += jx * c[k - j];
                dc -= jx * s[k - j];
            }
            s[k] = ds / k as f64;
            c[k] = dc / k as f64;
        }
        (Self { c: s }, Self { c })
    }

    fn tanh(self) -> Self {
        // t' = (1 - t^2) x'
        let mut t = [0.0; N];
        let mut w = [0.0; N];
        t[0] = self.c[0].tanh();
        w[0] = 1.0 - t[0] * t[0];
        for k in 1..N {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * self.c[j] * w[k - j];
            }
            t[k] = acc / k as f64;
            let mut sq = 0.0;
            for i in 0..=k {
                sq += t[i] * t[k - i];
            }
            w[k] = -sq;
        }
        Self { c: t }
    }
}

/// Lifts a plain vector to any scalar type.
pub fn lift_vec<S: Real>(v: &DVector<f64>) -> DVector<S> {
    v.map(S::from_f64)
}

pub fn lift_mat<S: Real>(m: &DMatrix<f64>) -> DMatrix<S> {
    m.map(S::from_f64)
}

pub fn values<S: Real>(v: &DVector<S>) -> DVector<f64> {
    v.map(|x| x.value())
}

pub fn mat_values<S: Real>(m: &DMatrix<S>) -> DMatrix<f64> {
    m.map(|x| x.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    type J = Jet<6>;

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|i| i as f64).product()
    }

    #[test]
    fn sin_series_matches_derivatives() {
        let t0 = 0.7;
        let s = J::variable(t0).sin();
        let expected = [t0.sin(), t0.cos(), -t0.sin(), -t0.cos(), t0.sin(), t0.cos()];
        for (k, e) in expected.iter().enumerate() {
            assert_relative_eq!(s.derivative_at(k), *e, epsilon = 1e-12);
        }
    }

    #[test]
    fn tanh_series_against_finite_differences() {
        // tanh(2 t) around t0, derivatives up to order 2 by central differences
        let t0 = 0.3;
        let f = |t: f64| (2.0 * t).tanh();
        let j = J::variable(t0).scale(2.0).tanh();
        let h = 1e-4;
        let d1 = (f(t0 + h) - f(t0 - h)) / (2.0 * h);
        let d2 = (f(t0 + h) - 2.0 * f(t0) + f(t0 - h)) / (h * h);
        assert_relative_eq!(j.derivative_at(1), d1, epsilon = 1e-7);
        assert_relative_eq!(j.derivative_at(2), d2, epsilon = 1e-5);
    }

    #[test]
    fn division_inverts_multiplication() {
        let a = J { c: [1.5, -0.2, 0.3, 0.01, 0.4, -0.7] };
        let b = J { c: [2.0, 0.5, -0.1, 0.2, 0.0, 0.3] };
        let back = (a * b) / b;
        for k in 0..6 {
            assert_relative_eq!(back.c[k], a.c[k], epsilon = 1e-13);
        }
    }

    #[test]
    fn differentiate_and_integrate_are_inverse_up_to_constant() {
        let a = J { c: [3.0, 1.0, 2.0, -1.0, 0.5, 0.25] };
        let round = a.differentiate().integrate();
        assert_eq!(round.c[0], 0.0);
        for k in 1..5 {
            assert_relative_eq!(round.c[k], a.c[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn exp_like_recursion_via_from_derivatives() {
        let j = J::from_derivatives(&[1.0; 6]);
        for k in 0..6 {
            assert_relative_eq!(j.c[k], 1.0 / factorial(k), epsilon = 1e-15);
        }
    }
}
