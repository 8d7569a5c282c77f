//! The `(Λ, K_d, φ)` family of virtual-contraction-based tracking controllers.

mod law;
mod phi;
mod reference;

pub use law::{
    control_terms, initial_filter, link_control, link_momentum_ref, motor_control, state_from_errors,
    tracking_controller, ControlTerms, ErrorCoords, FilterState, LinkControl, Omega,
};
pub use phi::{phi, phi_block, phi_jacobian};
pub use reference::{Reference, SinusoidReference, REFERENCE_ORDER};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::MatrixSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhiKind {
    /// `φ = Λ tanh(q̃)`.
    #[serde(rename = "PHI1_SATURATED")]
    Saturated,
    /// `φ = Λ q̃`.
    #[serde(rename = "PHI2_LINEAR")]
    Linear,
    /// Diagonally dominant map certified by the 1-norm matrix measure.
    #[serde(rename = "PHI3_MU1")]
    Mu1,
}

impl PhiKind {
    pub fn label(self) -> &'static str {
        match self {
            PhiKind::Saturated => "PHI1_SATURATED",
            PhiKind::Linear => "PHI2_LINEAR",
            PhiKind::Mu1 => "PHI3_MU1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DerivativeMode {
    /// Exact time derivatives along the model flow.
    #[default]
    #[serde(rename = "MODEL_EXACT")]
    ModelExact,
    /// First-order filtered differentiation `s / (τ s + 1)`.
    #[serde(rename = "FILTERED_NUMERIC")]
    FilteredNumeric,
}

impl DerivativeMode {
    pub fn label(self) -> &'static str {
        match self {
            DerivativeMode::ModelExact => "MODEL_EXACT",
            DerivativeMode::FilteredNumeric => "FILTERED_NUMERIC",
        }
    }
}

pub const DEFAULT_FILTER_TAU: f64 = 0.01;

/// `[controller]` section of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub phi_kind: PhiKind,
    pub lambda_l: MatrixSpec,
    pub lambda_m: MatrixSpec,
    pub kd_l: MatrixSpec,
    pub kd_m: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub derivative_mode: DerivativeMode,
    #[serde(default = "default_tau")]
    pub filter_tau: f64,
}

fn default_tau() -> f64 {
    DEFAULT_FILTER_TAU
}

/// A validated controller in the family.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSpec {
    pub lambda_l: DMatrix<f64>,
    pub lambda_m: DMatrix<f64>,
    pub kd_l: DMatrix<f64>,
    pub kd_m: DMatrix<f64>,
    pub phi_kind: PhiKind,
    /// `κ` for links then motors (PHI3 only).
    pub kappa: Vec<f64>,
    /// Diagonal of `Θ` with `Λ = ΘᵀΘ`, links then motors (PHI3 only).
    pub theta: Vec<f64>,
    pub derivative_mode: DerivativeMode,
    pub filter_tau: f64,
    lambda_m_inv: DMatrix<f64>,
}

impl ControllerSpec {
    pub fn from_config(cfg: &ControllerConfig, n_joints: usize) -> Result<Self> {
        let n = n_joints;
        let lambda_l = cfg.lambda_l.to_spd("lambda_l", n)?;
        let lambda_m = cfg.lambda_m.to_spd("lambda_m", n)?;
        let kd_l = cfg.kd_l.to_spd("kd_l", n)?;
        let kd_m = cfg.kd_m.to_spd("kd_m", n)?;
        if !(cfg.filter_tau.is_finite() && cfg.filter_tau > 0.0) {
            return Err(Error::param("filter_tau", "must be > 0"));
        }
        let (kappa, theta) = match cfg.phi_kind {
            PhiKind::Mu1 => {
                let kappa = cfg
                    .kappa
                    .clone()
                    .ok_or_else(|| Error::param("kappa", "required for PHI3_MU1"))?;
                let theta = cfg
                    .theta
                    .clone()
                    .ok_or_else(|| Error::param("theta", "required for PHI3_MU1"))?;
                check_mu1_parameters(&kappa, &theta, &lambda_l, &lambda_m, n)?;
                (kappa, theta)
            }
            _ => (Vec::new(), Vec::new()),
        };
        let lambda_m_inv = lambda_m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::param("lambda_m", "is singular"))?;
        Ok(Self {
            lambda_l,
            lambda_m,
            kd_l,
            kd_m,
            phi_kind: cfg.phi_kind,
            kappa,
            theta,
            derivative_mode: cfg.derivative_mode,
            filter_tau: cfg.filter_tau,
            lambda_m_inv,
        })
    }

    pub fn to_config(&self) -> ControllerConfig {
        let opt = |v: &Vec<f64>| (!v.is_empty()).then(|| v.clone());
        ControllerConfig {
            phi_kind: self.phi_kind,
            lambda_l: MatrixSpec::from_matrix(&self.lambda_l),
            lambda_m: MatrixSpec::from_matrix(&self.lambda_m),
            kd_l: MatrixSpec::from_matrix(&self.kd_l),
            kd_m: MatrixSpec::from_matrix(&self.kd_m),
            kappa: opt(&self.kappa),
            theta: opt(&self.theta),
            derivative_mode: self.derivative_mode,
            filter_tau: self.filter_tau,
        }
    }

    pub fn n_joints(&self) -> usize {
        self.lambda_l.nrows()
    }

    pub fn lambda_m_inv(&self) -> &DMatrix<f64> {
        &self.lambda_m_inv
    }

    /// `Λ = blockdiag(Λ_l, Λ_m)`.
    pub fn lambda(&self) -> DMatrix<f64> {
        crate::linalg::block_diag(&[&self.lambda_l, &self.lambda_m])
    }

    pub fn kd(&self) -> DMatrix<f64> {
        crate::linalg::block_diag(&[&self.kd_l, &self.kd_m])
    }

    /// Gains used on the Quanser arm: `Λ_l = diag(55, 30)`, `Λ_m = diag(70, 60)`,
    /// `K_ld = diag(15, 10)`, `K_md = diag(10, 5)`, and for PHI3
    /// `κ = (10, 8, 10, 8)`, `θ_i = √Λ_ii`.
    pub fn quanser(kind: PhiKind) -> Self {
        Self::from_config(&quanser_config(kind), 2).expect("built-in gains are valid")
    }
}

pub fn quanser_config(kind: PhiKind) -> ControllerConfig {
    let lambda = [55.0_f64, 30.0, 70.0, 60.0];
    let mu1 = kind == PhiKind::Mu1;
    ControllerConfig {
        phi_kind: kind,
        lambda_l: MatrixSpec::diagonal(&lambda[..2]),
        lambda_m: MatrixSpec::diagonal(&lambda[2..]),
        kd_l: MatrixSpec::diagonal(&[15.0, 10.0]),
        kd_m: MatrixSpec::diagonal(&[10.0, 5.0]),
        kappa: mu1.then(|| vec![10.0, 8.0, 10.0, 8.0]),
        theta: mu1.then(|| lambda.iter().map(|l| l.sqrt()).collect()),
        derivative_mode: DerivativeMode::ModelExact,
        filter_tau: DEFAULT_FILTER_TAU,
    }
}

fn check_mu1_parameters(
    kappa: &[f64],
    theta: &[f64],
    lambda_l: &DMatrix<f64>,
    lambda_m: &DMatrix<f64>,
    n: usize,
) -> Result<()> {
    if n != 2 {
        return Err(Error::Unsupported(format!(
            "PHI3_MU1 is defined for two joints, got {n}"
        )));
    }
    if kappa.len() != 2 * n || kappa.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(Error::param("kappa", format!("expected {} positive entries", 2 * n)));
    }
    if theta.len() != 2 * n || theta.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::param("theta", format!("expected {} positive entries", 2 * n)));
    }
    let lambda = crate::linalg::block_diag(&[lambda_l, lambda_m]);
    for i in 0..2 * n {
        for j in 0..2 * n {
            let expected = if i == j { theta[i] * theta[i] } else { 0.0 };
            if (lambda[(i, j)] - expected).abs() > 1e-9 * (1.0 + expected) {
                return Err(Error::param(
                    "theta",
                    "Lambda must equal diag(theta)^2 for PHI3_MU1",
                ));
            }
        }
    }
    Ok(())
}
