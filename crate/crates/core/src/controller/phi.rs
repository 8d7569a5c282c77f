use nalgebra::{DMatrix, DVector};

use super::{ControllerSpec, PhiKind};
use crate::linalg;
use crate::scalar::Real;

/// Which half of the coordinates a block map acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Link,
    Motor,
}

impl Block {
    fn offset(self, n: usize) -> usize {
        match self {
            Block::Link => 0,
            Block::Motor => n,
        }
    }
}

/// `φ_l(q̃_l)` or `φ_m(q̃_m)`.
pub fn phi_block<S: Real>(spec: &ControllerSpec, block: Block, qtil: &DVector<S>) -> DVector<S> {
    let lambda = match block {
        Block::Link => &spec.lambda_l,
        Block::Motor => &spec.lambda_m,
    };
    match spec.phi_kind {
        PhiKind::Linear => lambda.map(S::from_f64) * qtil,
        PhiKind::Saturated => lambda.map(S::from_f64) * qtil.map(|v| v.tanh()),
        PhiKind::Mu1 => {
            let o = block.offset(spec.n_joints());
            let (k, th) = (&spec.kappa, &spec.theta);
            DVector::from_vec(vec![
                qtil[0].scale(1.0 + k[o]) + qtil[1].tanh().scale(th[o + 1] / th[o]),
                qtil[0].tanh().scale(th[o] / th[o + 1]) + qtil[1].scale(1.0 + k[o + 1]),
            ])
        }
    }
}

/// `φ(q̃)` for `q̃ = [q̃_l; q̃_m]`.
pub fn phi(spec: &ControllerSpec, qtil: &DVector<f64>) -> DVector<f64> {
    let n = spec.n_joints();
    let l = phi_block(spec, Block::Link, &qtil.rows(0, n).into_owned());
    let m = phi_block(spec, Block::Motor, &qtil.rows(n, n).into_owned());
    DVector::from_iterator(2 * n, l.iter().chain(m.iter()).copied())
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

/// `∂φ/∂q̃`, block diagonal in the link and motor halves.
pub fn phi_jacobian(spec: &ControllerSpec, qtil: &DVector<f64>) -> DMatrix<f64> {
    let n = spec.n_joints();
    let block = |b: Block| -> DMatrix<f64> {
        let o = b.offset(n);
        let lambda = match b {
            Block::Link => &spec.lambda_l,
            Block::Motor => &spec.lambda_m,
        };
        let q = qtil.rows(o, n);
        match spec.phi_kind {
            PhiKind::Linear => lambda.clone(),
            PhiKind::Saturated => lambda * linalg::diag(&q.iter().map(|&v| sech2(v)).collect::<Vec<_>>()),
            PhiKind::Mu1 => {
                let (k, th) = (&spec.kappa, &spec.theta);
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        1.0 + k[o],
                        th[o + 1] / th[o] * sech2(q[1]),
                        th[o] / th[o + 1] * sech2(q[0]),
                        1.0 + k[o + 1],
                    ],
                )
            }
        }
    };
    linalg::block_diag(&[&block(Block::Link), &block(Block::Motor)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn vanishes_at_origin() {
        for kind in [PhiKind::Saturated, PhiKind::Linear, PhiKind::Mu1] {
            let s = ControllerSpec::quanser(kind);
            assert_eq!(phi(&s, &DVector::zeros(4)), DVector::zeros(4));
        }
    }

    #[test]
    fn linear_example() {
        let s = ControllerSpec::quanser(PhiKind::Linear);
        assert_relative_eq!(phi(&s, &v(&[0.1, 0.0, 0.0, 0.0])), v(&[5.5, 0.0, 0.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn mu1_example() {
        let s = ControllerSpec::quanser(PhiKind::Mu1);
        let out = phi(&s, &v(&[0.1, 0.2, 0.0, 0.0]));
        let (t1, t2) = (55.0_f64.sqrt(), 30.0_f64.sqrt());
        assert_relative_eq!(out[0], 11.0 * 0.1 + t2 / t1 * 0.2_f64.tanh(), epsilon = 1e-15);
        assert_relative_eq!(out[1], t1 / t2 * 0.1_f64.tanh() + 9.0 * 0.2, epsilon = 1e-15);
        assert_eq!(&out.as_slice()[2..], &[0.0, 0.0]);
    }

    #[test]
    fn jacobian_against_finite_differences() {
        let q = v(&[0.3, -0.7, 1.1, -0.2]);
        let h = 1e-6;
        for kind in [PhiKind::Saturated, PhiKind::Linear, PhiKind::Mu1] {
            let s = ControllerSpec::quanser(kind);
            let jac = phi_jacobian(&s, &q);
            for k in 0..4 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[k] += h;
                qm[k] -= h;
                let fd = (phi(&s, &qp) - phi(&s, &qm)) / (2.0 * h);
                assert!((jac.column(k) - fd).amax() < 1e-6, "{kind:?} column {k}");
            }
        }
    }
}
