use std::sync::Arc;

use nalgebra::DVector;

use vcbc::controller::{state_from_errors, ControllerSpec, DerivativeMode, ErrorCoords, Omega, PhiKind, SinusoidReference};
use vcbc::fjr::FjrModel;
use vcbc::sim::{run_closed_loop, run_virtual_pair, SimConfig, TrajectoryLog};
use vcbc::{Error, State};

fn reference() -> SinusoidReference {
    SinusoidReference::unit(2)
}

fn rest(offset: f64) -> State {
    let q = DVector::from_element(2, offset);
    State::from_blocks(&q, &q, &DVector::zeros(2), &DVector::zeros(2))
}

fn filtered(kind: PhiKind, tau: f64) -> ControllerSpec {
    let mut spec = ControllerSpec::quanser(kind);
    spec.derivative_mode = DerivativeMode::FilteredNumeric;
    spec.filter_tau = tau;
    spec
}

fn csv(log: &TrajectoryLog) -> String {
    let mut out = Vec::new();
    log.write_csv(&mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn runs_are_deterministic() {
    let model = FjrModel::quanser();
    let spec = filtered(PhiKind::Mu1, 0.005);
    let mut cfg = SimConfig::new(rest(0.3), 0.2);
    cfg.noise_std = 1e-3;
    cfg.noise_seed = 42;
    let a = run_closed_loop(&model, &spec, &reference(), &cfg).unwrap();
    let b = run_closed_loop(&model, &spec, &reference(), &cfg).unwrap();
    assert_eq!(csv(&a), csv(&b));

    cfg.noise_seed = 43;
    let c = run_closed_loop(&model, &spec, &reference(), &cfg).unwrap();
    assert_ne!(csv(&a), csv(&c));
}

#[test]
fn starting_on_the_reference_stays_on_it() {
    let model = FjrModel::quanser();
    let spec = ControllerSpec::quanser(PhiKind::Linear);
    let x0 = state_from_errors(&model, &spec, &reference(), &ErrorCoords::zeros(2), 0.0).unwrap();
    let log = run_closed_loop(&model, &spec, &reference(), &SimConfig::new(x0, 1.0)).unwrap();
    let worst = log.link_error_norms().into_iter().fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
    assert!(log.metrics().fitted_rate.is_none());
}

#[test]
fn csv_layout() {
    let model = FjrModel::quanser();
    let spec = ControllerSpec::quanser(PhiKind::Saturated);
    let mut cfg = SimConfig::new(rest(0.3), 0.05);
    cfg.log_stride = 5;
    let log = run_closed_loop(&model, &spec, &reference(), &cfg).unwrap();
    let text = csv(&log);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 27);
    assert_eq!(header[0], "t");
    assert_eq!(header, TrajectoryLog::header(2));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), log.len());
    assert_eq!(log.len(), 101);
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 27);
        for f in fields {
            let v: f64 = f.parse().unwrap();
            assert!(v.is_finite());
            let mantissa = f.trim_start_matches('-').split('e').next().unwrap();
            assert!(mantissa.chars().filter(|c| c.is_ascii_digit()).count() >= 12, "{f}");
        }
    }
}

#[test]
fn halving_the_step_changes_little() {
    let model = FjrModel::quanser();
    let spec = ControllerSpec::quanser(PhiKind::Mu1);
    let run = |dt: f64, stride: usize| {
        let mut cfg = SimConfig::new(rest(0.3), 1.0);
        cfg.dt = dt;
        cfg.log_stride = stride;
        run_closed_loop(&model, &spec, &reference(), &cfg).unwrap()
    };
    let coarse = run(2e-4, 10);
    let fine = run(1e-4, 20);
    assert_eq!(coarse.len(), fine.len());
    let (ec, ef) = (coarse.link_error_norms(), fine.link_error_norms());
    let scale = ef.iter().copied().fold(0.0, f64::max);
    let gap = ec.iter().zip(&ef).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 0.01 * scale, "{gap} vs {scale}");
}

#[test]
fn coincident_pair_has_zero_storage() {
    let model = FjrModel::quanser();
    let spec = ControllerSpec::quanser(PhiKind::Saturated);
    let mut cfg = SimConfig::new(rest(0.3), 0.1);
    cfg.initial_virtual_state = Some(rest(0.3));
    let log = run_virtual_pair(&model, &spec, &reference(), &cfg).unwrap();
    assert!(log.w.iter().all(|&w| w == 0.0));
    assert_eq!(log.virtual_states.as_ref().unwrap(), &log.states);
}

#[test]
fn virtual_pair_preconditions() {
    let model = FjrModel::quanser();
    let cfg = SimConfig::new(rest(0.3), 0.1);
    let spec = ControllerSpec::quanser(PhiKind::Linear);
    assert!(matches!(
        run_virtual_pair(&model, &spec, &reference(), &cfg),
        Err(Error::InvalidParameter { .. })
    ));
    let mut cfg = cfg;
    cfg.initial_virtual_state = Some(rest(0.2));
    assert!(matches!(
        run_virtual_pair(&model, &filtered(PhiKind::Linear, 0.01), &reference(), &cfg),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn blow_up_aborts_with_the_last_good_time() {
    let model = FjrModel::quanser();
    let spec = ControllerSpec::quanser(PhiKind::Linear);
    let mut cfg = SimConfig::new(rest(0.3), 1.0);
    cfg.dt = 0.01;
    match run_closed_loop(&model, &spec, &reference(), &cfg) {
        Err(Error::SimulationAborted { t, .. }) => assert!((0.0..1.0).contains(&t)),
        other => panic!("expected an abort, got {:?}", other.map(|l| l.len())),
    }
}

#[test]
fn external_input_moves_the_trajectory() {
    let model = FjrModel::quanser();
    let spec = ControllerSpec::quanser(PhiKind::Mu1);
    let x0 = state_from_errors(&model, &spec, &reference(), &ErrorCoords::zeros(2), 0.0).unwrap();
    let mut cfg = SimConfig::new(x0, 0.2);
    cfg.omega = Some(Arc::new(|_| Omega {
        link: DVector::from_element(2, 0.5),
        motor: DVector::zeros(2),
    }));
    let log = run_closed_loop(&model, &spec, &reference(), &cfg).unwrap();
    assert!(*log.link_error_norms().last().unwrap() > 1e-6);
}

#[test]
fn energy_is_accounted_from_rest() {
    let model = FjrModel::quanser();
    let spec = ControllerSpec::quanser(PhiKind::Mu1);
    let x0 = state_from_errors(&model, &spec, &reference(), &ErrorCoords::zeros(2), 0.0).unwrap();
    let log = run_closed_loop(&model, &spec, &reference(), &SimConfig::new(x0, 0.5)).unwrap();
    let k = log.len() - 1;
    let gap = (log.hamiltonian[k] - log.hamiltonian[0]) - (log.energy_supplied[k] - log.energy_dissipated[k]);
    assert!(gap.abs() < 1e-8, "{gap}");
    assert!(log.power_dissipated.iter().all(|&p| p >= 0.0));
}
