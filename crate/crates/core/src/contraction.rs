//! Sample-based certificates for the contraction, differential-passivity and
//! incremental-passivity conditions of the controller family.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{phi, phi_jacobian, ControllerSpec, ErrorCoords, PhiKind};
use crate::error::{Error, Result};
use crate::fjr::FjrModel;
use crate::linalg;
use crate::ph::{self, MechModel, State};

pub const BISECTION_TOL: f64 = 1e-6;
pub const DEFAULT_GRID_POINTS: usize = 13;
pub const DEFAULT_PAIR_COUNT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub condition_id: String,
    pub sample_count: usize,
    /// Largest violation over the samples; negative values are slack.
    pub worst_margin: f64,
    pub worst_point: Vec<f64>,
    pub passed: bool,
    pub beta_estimate: Option<f64>,
    pub note: Option<String>,
}

impl CertificateReport {
    fn new(condition_id: &str, margins: &[f64], points: &[DVector<f64>], beta: Option<f64>) -> Self {
        let (idx, worst) = worst_of(margins);
        Self {
            condition_id: condition_id.to_string(),
            sample_count: margins.len(),
            worst_margin: worst,
            worst_point: points.get(idx).map(|p| p.iter().copied().collect()).unwrap_or_default(),
            passed: worst <= 0.0,
            beta_estimate: beta,
            note: None,
        }
    }

    pub fn verdict(&self) -> &'static str {
        if self.passed {
            "pass"
        } else {
            "fail"
        }
    }

    pub const CSV_HEADER: &'static str = "condition_id,verdict,worst_margin,beta";

    pub fn csv_row(&self) -> String {
        let beta = self.beta_estimate.map(|b| format!("{b:.12e}")).unwrap_or_default();
        format!("{},{},{:.12e},{}", self.condition_id, self.verdict(), self.worst_margin, beta)
    }
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {}  samples={} worst_margin={:.6e}",
            self.condition_id,
            self.verdict(),
            self.sample_count,
            self.worst_margin
        )?;
        if let Some(b) = self.beta_estimate {
            write!(f, " beta={b:.6}")?;
        }
        write!(f, " worst_point={:?}", self.worst_point)?;
        if let Some(n) = &self.note {
            write!(f, " ({n})")?;
        }
        Ok(())
    }
}

/// Index and value of the largest margin; ties keep the first sample.
fn worst_of(margins: &[f64]) -> (usize, f64) {
    margins
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv || v.is_nan() {
                (i, v)
            } else {
                (bi, bv)
            }
        })
}

/// Tensor grid on the cube `‖x‖∞ ≤ radius` with `points` samples per axis.
pub fn cube_grid(dim: usize, radius: f64, points: usize) -> Vec<DVector<f64>> {
    let axis: Vec<f64> = if points <= 1 {
        vec![0.0]
    } else {
        (0..points)
            .map(|i| -radius + 2.0 * radius * i as f64 / (points - 1) as f64)
            .collect()
    };
    let total = axis.len().pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            DVector::from_fn(dim, |_, _| {
                let v = axis[idx % axis.len()];
                idx /= axis.len();
                v
            })
        })
        .collect()
}

/// Seeded uniform pairs in the cube `‖x‖∞ ≤ radius`.
pub fn random_pairs(dim: usize, radius: f64, count: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = || DVector::from_fn(dim, |_, _| rng.random_range(-radius..=radius));
    (0..count).map(|_| (sample(), sample())).collect()
}

/// How the metric inequality `−ΛJ − JᵀΛ ⪯ −2βΛ` is turned into a rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricBound {
    /// Uniform bound `λ_max(−ΛJ − JᵀΛ) + 2β λ_max(Λ) ≤ 0`, which for `φ = Λq̃`
    /// gives `β = λ_min(Λ²)/λ_max(Λ)`.
    #[default]
    Uniform,
    /// The matrix inequality itself, `λ_max(−ΛJ − JᵀΛ + 2βΛ) ≤ 0`.
    Generalized,
}

/// Largest `β` on `[0, ∞)` with `pred(β)`, assuming `pred` is monotone.
fn bisect_beta(pred: impl Fn(f64) -> bool) -> f64 {
    if !pred(0.0) {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while pred(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return lo;
        }
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Certifies the contraction rate of `q̃̇ = −φ(q̃)` in the constant metric `Λ`.
pub fn check_metric_inequality(spec: &ControllerSpec, grid: &[DVector<f64>], bound: MetricBound) -> CertificateReport {
    let lambda = spec.lambda();
    let lambda_max = linalg::lambda_max(&lambda);
    let l_inv_sqrt = inverse_sqrt(&lambda);
    let sym: Vec<DMatrix<f64>> = grid
        .par_iter()
        .map(|q| {
            let j = phi_jacobian(spec, q);
            -(&lambda * &j + j.transpose() * &lambda)
        })
        .collect();
    // Both bounds are affine in β once the eigenvalue part is fixed.
    let offsets: Vec<f64> = sym
        .par_iter()
        .map(|a| match bound {
            MetricBound::Uniform => linalg::lambda_max(a) / (2.0 * lambda_max),
            MetricBound::Generalized => linalg::lambda_max(&(&l_inv_sqrt * a * &l_inv_sqrt)) / 2.0,
        })
        .collect();
    let worst_offset = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let beta = bisect_beta(|b| worst_offset + b <= 0.0);
    let margins: Vec<f64> = sym
        .par_iter()
        .map(|a| match bound {
            MetricBound::Uniform => linalg::lambda_max(a) + 2.0 * beta * lambda_max,
            MetricBound::Generalized => linalg::lambda_max(&(a + &lambda * (2.0 * beta))),
        })
        .collect();
    let id = match bound {
        MetricBound::Uniform => "metric_inequality",
        MetricBound::Generalized => "metric_inequality_generalized",
    };
    let mut report = CertificateReport::new(id, &margins, grid, Some(beta));
    if beta == 0.0 {
        report.passed = false;
    }
    report
}

fn inverse_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// `μ₁(A) = max_j (A_jj + Σ_{i≠j} |A_ij|)`.
pub fn matrix_measure_mu1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| {
            (0..a.nrows())
                .map(|i| if i == j { a[(i, j)] } else { a[(i, j)].abs() })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `J̄ = Θ(−∂φ/∂q̃)Θ⁻¹` with `Θ = diag(θ)`.
pub fn generalized_jacobian(spec: &ControllerSpec, qtil: &DVector<f64>) -> Result<DMatrix<f64>> {
    if spec.theta.len() != qtil.len() {
        return Err(Error::param("theta", "a diagonal Theta with one entry per coordinate is required"));
    }
    let j = phi_jacobian(spec, qtil);
    let th = &spec.theta;
    Ok(DMatrix::from_fn(j.nrows(), j.ncols(), |r, c| -(th[r] / th[c]) * j[(r, c)]))
}

/// Certifies `μ₁(J̄(q̃)) ≤ −2β` with `2β = min κ`.
pub fn check_mu1_contraction(spec: &ControllerSpec, grid: &[DVector<f64>]) -> Result<CertificateReport> {
    if spec.phi_kind != PhiKind::Mu1 {
        return Err(Error::Unsupported(format!(
            "the 1-norm certificate applies to PHI3_MU1, not {}",
            spec.phi_kind.label()
        )));
    }
    let two_beta = spec.kappa.iter().copied().fold(f64::INFINITY, f64::min);
    let margins = grid
        .par_iter()
        .map(|q| generalized_jacobian(spec, q).map(|jb| matrix_measure_mu1(&jb) + two_beta))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CertificateReport::new("mu1_contraction", &margins, grid, Some(two_beta / 2.0)))
}

/// Ratio `Δᵀ(χ(q̃₂) − χ(q̃₁)) / (2β ΔᵀΛΔ)` for `χ = Λφ`, or `None` for a
/// degenerate pair.
pub fn monotonicity_ratio(spec: &ControllerSpec, beta: f64, a: &DVector<f64>, b: &DVector<f64>) -> Option<f64> {
    let lambda = spec.lambda();
    let d = b - a;
    let rhs = 2.0 * beta * d.dot(&(&lambda * &d));
    if rhs <= 0.0 {
        return None;
    }
    let lhs = d.dot(&(&lambda * (phi(spec, b) - phi(spec, a))));
    Some(lhs / rhs)
}

/// Checks `Δᵀ(χ(q̃₂) − χ(q̃₁)) ≥ 2β ΔᵀΛΔ` on sampled pairs. The margin is
/// `1 − min ratio`. `sweep_radii` are probed beyond the sampled pairs and
/// the first radius with a violating pair is recorded in the note.
pub fn check_incremental_passivity(
    spec: &ControllerSpec,
    beta: f64,
    pairs: &[(DVector<f64>, DVector<f64>)],
    sweep_radii: &[f64],
    seed: u64,
) -> CertificateReport {
    let ratios: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|(a, b)| monotonicity_ratio(spec, beta, a, b))
        .collect();
    let margins: Vec<f64> = ratios.iter().map(|r| r.map_or(f64::NEG_INFINITY, |r| 1.0 - r)).collect();
    let points: Vec<DVector<f64>> = pairs
        .iter()
        .map(|(a, b)| DVector::from_iterator(a.len() * 2, a.iter().chain(b.iter()).copied()))
        .collect();
    let skipped = ratios.iter().filter(|r| r.is_none()).count();
    let mut report = CertificateReport::new("incremental_passivity", &margins, &points, Some(beta));
    report.sample_count = pairs.len() - skipped;
    let dim = pairs.first().map_or(0, |p| p.0.len());
    let failure = sweep_radii.iter().copied().find(|&r| {
        random_pairs(dim, r, pairs.len().max(1), seed ^ r.to_bits())
            .par_iter()
            .any(|(a, b)| monotonicity_ratio(spec, beta, a, b).is_some_and(|x| x < 1.0))
    });
    report.note = Some(match failure {
        Some(r) => format!("failure radius {r}"),
        None => "no failure on the radius sweep".into(),
    });
    report
}

/// Worst-case rate `β = 2 min{β_q̃, λ_min(D + K_d) λ_min(M⁻¹)}` over sampled
/// link configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub beta: f64,
    pub beta_q: f64,
    pub lambda_min_damping: f64,
    pub lambda_min_inertia_inv: f64,
    pub box_radius: f64,
    pub box_points: usize,
}

impl fmt::Display for RateEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "beta={:.6} (beta_q={:.6}, lambda_min(D+Kd)={:.6}, lambda_min(M^-1)={:.6}, q box |q|<={} with {} points/axis, p=0)",
            self.beta,
            self.beta_q,
            self.lambda_min_damping,
            self.lambda_min_inertia_inv,
            self.box_radius,
            self.box_points
        )
    }
}

pub fn convergence_rate(
    model: &FjrModel,
    spec: &ControllerSpec,
    certificate: &CertificateReport,
    box_radius: f64,
    box_points: usize,
) -> Result<RateEstimate> {
    let beta_q = match (certificate.passed, certificate.beta_estimate) {
        (true, Some(b)) if b > 0.0 => b,
        _ => {
            return Err(Error::Uncertified(format!(
                "{} did not certify a positive rate",
                certificate.condition_id
            )))
        }
    };
    let n = model.dof();
    let dk = model.damping(&DVector::<f64>::zeros(n), &DVector::zeros(n)) + spec.kd();
    let lambda_min_damping = linalg::lambda_min(&dk);
    let lambda_min_inertia_inv = cube_grid(model.n_links(), box_radius, box_points)
        .par_iter()
        .map(|q_l| {
            let q = DVector::from_iterator(n, q_l.iter().copied().chain(std::iter::repeat_n(0.0, model.n_motors())));
            1.0 / linalg::lambda_max(&model.inertia(&q))
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let beta = 2.0 * beta_q.min(lambda_min_damping * lambda_min_inertia_inv);
    Ok(RateEstimate {
        beta,
        beta_q,
        lambda_min_damping,
        lambda_min_inertia_inv,
        box_radius,
        box_points,
    })
}

/// Block matrices of the closed-loop variational dynamics
/// `δx̃̇ = (Ξ − Υ) Π δx̃ + Ψ δω` in coordinates `[q̃_l; q̃_m; σ_l; σ_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopStructure {
    pub metric: DMatrix<f64>,
    pub interconnection: DMatrix<f64>,
    pub dissipation: DMatrix<f64>,
    pub input: DMatrix<f64>,
    /// `Π̇` along the actual motion.
    pub metric_rate: DMatrix<f64>,
}

impl ClosedLoopStructure {
    pub fn system_matrix(&self) -> DMatrix<f64> {
        (&self.interconnection - &self.dissipation) * &self.metric
    }

    /// `Π̇ − Π(Υ + Υᵀ)Π`; `δᵀ Q δ = 2Ẇ` for `δω = 0`.
    pub fn dissipation_form(&self) -> DMatrix<f64> {
        let ups = &self.dissipation + self.dissipation.transpose();
        &self.metric_rate - &self.metric * ups * &self.metric
    }

    /// Largest `c` with `δᵀQδ ≤ c δᵀΠδ`, so `Ẇ ≤ c W`.
    pub fn dissipation_margin(&self) -> f64 {
        let l = self
            .metric
            .clone()
            .cholesky()
            .expect("metric is positive definite")
            .l();
        let l_inv = linalg::inverse(&l).expect("triangular factor is invertible");
        linalg::lambda_max(&(&l_inv * self.dissipation_form() * l_inv.transpose()))
    }
}

pub fn closed_loop_structure(
    model: &FjrModel,
    spec: &ControllerSpec,
    x: &State,
    errors: &ErrorCoords,
) -> Result<ClosedLoopStructure> {
    x.check(model)?;
    let n = model.n_joints();
    let q_l = x.q_l();
    let m_l = model.link_inertia(&q_l);
    let m_l_inv = linalg::inverse(&m_l).ok_or_else(|| Error::SingularInertia {
        q: x.q.iter().copied().collect(),
    })?;
    let v_l = &m_l_inv * x.p_l();
    let partials = model.link_inertia_partials(&q_l);
    let s_l = ph::coriolis_from_partials(&partials, &v_l);
    let m_dot = ph::inertia_rate(&partials, &v_l);
    let m_m_inv = model.motor_inertia_inv();

    let qtil = DVector::from_iterator(2 * n, errors.qtil_l.iter().chain(errors.qtil_m.iter()).copied());
    let jac = phi_jacobian(spec, &qtil);
    let lambda_l_inv = linalg::inverse(&spec.lambda_l).expect("validated gain");
    let lambda_m_inv = spec.lambda_m_inv();
    let k = model.stiffness();
    let eye = DMatrix::<f64>::identity(n, n);

    let metric = linalg::block_diag(&[&spec.lambda_l, &spec.lambda_m, &m_l_inv, m_m_inv]);
    let mut xi = DMatrix::zeros(4 * n, 4 * n);
    let put = |m: &mut DMatrix<f64>, r: usize, c: usize, b: &DMatrix<f64>| {
        m.view_mut((r * n, c * n), (n, n)).copy_from(b);
    };
    put(&mut xi, 0, 2, &eye);
    put(&mut xi, 1, 2, &-(lambda_m_inv * k.transpose()));
    put(&mut xi, 1, 3, &eye);
    put(&mut xi, 2, 0, &-&eye);
    put(&mut xi, 2, 1, &(k * lambda_m_inv));
    put(&mut xi, 2, 2, &-&s_l);
    put(&mut xi, 3, 1, &-&eye);

    let mut ups = DMatrix::zeros(4 * n, 4 * n);
    put(&mut ups, 0, 0, &(jac.view((0, 0), (n, n)) * &lambda_l_inv));
    put(&mut ups, 1, 1, &(jac.view((n, n), (n, n)) * lambda_m_inv));
    put(&mut ups, 2, 2, &(model.link_damping() + &spec.kd_l - &m_dot * 0.5));
    put(&mut ups, 3, 3, &(model.motor_damping() + &spec.kd_m));

    let mut input = DMatrix::zeros(4 * n, 2 * n);
    input.view_mut((2 * n, 0), (2 * n, 2 * n)).fill_with_identity();

    let mut metric_rate = DMatrix::zeros(4 * n, 4 * n);
    put(&mut metric_rate, 2, 2, &-(&m_l_inv * &m_dot * &m_l_inv));

    Ok(ClosedLoopStructure {
        metric,
        interconnection: xi,
        dissipation: ups,
        input,
        metric_rate,
    })
}

/// Block storages `(W_l, W_m)` of `W = ½ δᵀ blockdiag(Λ_l, Λ_m, M_l⁻¹, M_m⁻¹) δ`
/// with `δ = [δq̃_l; δq̃_m; δσ_l; δσ_m]`.
pub fn differential_storage_blocks(
    model: &FjrModel,
    spec: &ControllerSpec,
    q_l: &DVector<f64>,
    delta: &DVector<f64>,
) -> Result<(f64, f64)> {
    let n = model.n_joints();
    Error::check_len("variation", 4 * n, delta.len())?;
    let m_l_inv = linalg::inverse(&model.link_inertia(q_l)).ok_or_else(|| Error::SingularInertia {
        q: q_l.iter().copied().collect(),
    })?;
    let part = |i: usize| delta.rows(i * n, n).into_owned();
    let quad = |m: &DMatrix<f64>, v: &DVector<f64>| 0.5 * v.dot(&(m * v));
    let w_l = quad(&spec.lambda_l, &part(0)) + quad(&m_l_inv, &part(2));
    let w_m = quad(&spec.lambda_m, &part(1)) + quad(model.motor_inertia_inv(), &part(3));
    Ok((w_l, w_m))
}

pub fn differential_storage(
    model: &FjrModel,
    spec: &ControllerSpec,
    q_l: &DVector<f64>,
    delta: &DVector<f64>,
) -> Result<f64> {
    let (w_l, w_m) = differential_storage_blocks(model, spec, q_l, delta)?;
    Ok(w_l + w_m)
}

/// Sampling used by the certificate suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    /// Half-width of the error grid for the metric inequality (rad).
    pub grid_radius: f64,
    pub grid_points: usize,
    /// Half-width of the error grid for the 1-norm certificate (rad).
    pub mu1_radius: f64,
    pub pair_count: usize,
    /// Radius of the incremental-passivity pairs (rad).
    pub pair_radius: f64,
    /// Larger radii probed for a failure of incremental passivity (rad).
    pub sweep_radii: Vec<f64>,
    /// Half-width of the link-configuration box for the rate (rad).
    pub box_radius: f64,
    pub box_points: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        Self {
            grid_radius: pi,
            grid_points: DEFAULT_GRID_POINTS,
            mu1_radius: 10.0,
            pair_count: DEFAULT_PAIR_COUNT,
            pair_radius: pi,
            sweep_radii: vec![5.0, 10.0, 20.0],
            box_radius: pi,
            box_points: DEFAULT_GRID_POINTS,
        }
    }
}

impl VerifySettings {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("grid_radius", self.grid_radius),
            ("mu1_radius", self.mu1_radius),
            ("pair_radius", self.pair_radius),
            ("box_radius", self.box_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(key, "must be positive"));
            }
        }
        if self.grid_points < 2 || self.box_points < 2 {
            return Err(Error::param("grid_points", "need at least 2 points per axis"));
        }
        if self.pair_count == 0 {
            return Err(Error::param("pair_count", "must be at least 1"));
        }
        Ok(())
    }
}

/// Certificates appropriate to the controller kind and the resulting rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateSuite {
    pub reports: Vec<CertificateReport>,
    pub rate: std::result::Result<RateEstimate, String>,
}

impl CertificateSuite {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
}

/// Metric inequality for the saturated and linear maps, the 1-norm
/// certificate for the coupled map, and incremental passivity for all.
pub fn certificate_suite(
    model: &FjrModel,
    spec: &ControllerSpec,
    settings: &VerifySettings,
    seed: u64,
) -> Result<CertificateSuite> {
    settings.validate()?;
    let dim = 2 * spec.n_joints();
    let primary = match spec.phi_kind {
        PhiKind::Saturated | PhiKind::Linear => check_metric_inequality(
            spec,
            &cube_grid(dim, settings.grid_radius, settings.grid_points),
            MetricBound::Uniform,
        ),
        PhiKind::Mu1 => check_mu1_contraction(spec, &cube_grid(dim, settings.mu1_radius, settings.grid_points))?,
    };
    let beta = primary.beta_estimate.unwrap_or(0.0);
    let pairs = random_pairs(dim, settings.pair_radius, settings.pair_count, seed);
    let passivity = check_incremental_passivity(spec, beta, &pairs, &settings.sweep_radii, seed);
    let rate = convergence_rate(model, spec, &primary, settings.box_radius, settings.box_points)
        .map_err(|e| e.to_string());
    Ok(CertificateSuite {
        reports: vec![primary, passivity],
        rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mu1_examples() {
        assert_eq!(matrix_measure_mu1(&linalg::diag(&[-1.0, -2.0])), -1.0);
        let a = DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, 2.0, -4.0]);
        assert_eq!(matrix_measure_mu1(&a), -1.0);
        assert_eq!(matrix_measure_mu1(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn grid_shape() {
        let g = cube_grid(2, 1.0, 3);
        assert_eq!(g.len(), 9);
        assert!(g.contains(&DVector::from_vec(vec![0.0, 0.0])));
        assert!(g.contains(&DVector::from_vec(vec![-1.0, 1.0])));
    }

    #[test]
    fn linear_metric_rate() {
        let s = ControllerSpec::quanser(PhiKind::Linear);
        let r = check_metric_inequality(&s, &cube_grid(4, std::f64::consts::PI, 5), MetricBound::Uniform);
        assert!(r.passed);
        assert_relative_eq!(r.beta_estimate.unwrap(), 900.0 / 70.0, epsilon = 1e-5);
        let g = check_metric_inequality(&s, &cube_grid(4, 1.0, 3), MetricBound::Generalized);
        assert_relative_eq!(g.beta_estimate.unwrap(), 30.0, epsilon = 1e-5);
    }

    #[test]
    fn saturated_matches_linear_at_origin() {
        let s1 = ControllerSpec::quanser(PhiKind::Saturated);
        let r = check_metric_inequality(&s1, &[DVector::zeros(4)], MetricBound::Uniform);
        assert_relative_eq!(r.beta_estimate.unwrap(), 900.0 / 70.0, epsilon = 1e-5);
    }

    #[test]
    fn identity_map_jacobian() {
        let mut cfg = crate::controller::quanser_config(PhiKind::Mu1);
        cfg.lambda_l = linalg::MatrixSpec::diagonal(&[1.0, 1.0]);
        cfg.lambda_m = linalg::MatrixSpec::diagonal(&[1.0, 1.0]);
        cfg.theta = Some(vec![1.0; 4]);
        let s = ControllerSpec::from_config(&cfg, 2).unwrap();
        let mut lin = s.clone();
        lin.phi_kind = PhiKind::Linear;
        assert_eq!(generalized_jacobian(&lin, &DVector::zeros(4)).unwrap(), -DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn mu1_requires_mu1_kind() {
        let s = ControllerSpec::quanser(PhiKind::Linear);
        assert!(matches!(check_mu1_contraction(&s, &[DVector::zeros(4)]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn storage_example() {
        let m = FjrModel::quanser();
        let s = ControllerSpec::quanser(PhiKind::Linear);
        let mut d = DVector::zeros(8);
        d[0] = 1.0;
        assert_relative_eq!(differential_storage(&m, &s, &DVector::zeros(2), &d).unwrap(), 27.5);
        assert_eq!(differential_storage(&m, &s, &DVector::zeros(2), &DVector::zeros(8)).unwrap(), 0.0);
    }

    #[test]
    fn uncertified_rate_is_an_error() {
        let m = FjrModel::quanser();
        let s = ControllerSpec::quanser(PhiKind::Linear);
        let mut r = check_metric_inequality(&s, &[DVector::zeros(4)], MetricBound::Uniform);
        r.passed = false;
        assert!(matches!(convergence_rate(&m, &s, &r, 3.14, 13), Err(Error::Uncertified(_))));
    }
}
