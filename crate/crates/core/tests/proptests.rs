use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use vcbc::config::RunConfig;
use vcbc::contraction::{differential_storage, matrix_measure_mu1};
use vcbc::controller::{
    control_terms, phi, state_from_errors, ControllerSpec, ErrorCoords, Omega, PhiKind, SinusoidReference,
};
use vcbc::fjr::FjrModel;
use vcbc::ph::{self, MechModel, State};
use vcbc::vsys::{self, VirtualState};

fn dvec(n: usize, r: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-r..r, n).prop_map(DVector::from_vec)
}

fn state() -> impl Strategy<Value = State> {
    (dvec(4, 3.2), dvec(4, 3.0)).prop_map(|(q, p)| State::new(q, p, 2).unwrap())
}

fn kind() -> impl Strategy<Value = PhiKind> {
    prop_oneof![Just(PhiKind::Saturated), Just(PhiKind::Linear), Just(PhiKind::Mu1)]
}

fn errors(r: f64) -> impl Strategy<Value = ErrorCoords> {
    (dvec(2, r), dvec(2, r / 5.0), dvec(2, r), dvec(2, r / 5.0)).prop_map(|(a, b, c, d)| ErrorCoords {
        qtil_l: a,
        sigma_l: b,
        qtil_m: c,
        sigma_m: d,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn energy_is_nonnegative(s in state()) {
        let model = FjrModel::quanser();
        prop_assert!(ph::hamiltonian(&model, &s).unwrap() >= 0.0);
    }

    #[test]
    fn inertia_is_positive_definite(q in dvec(4, 10.0)) {
        let m = FjrModel::quanser().inertia(&q);
        prop_assert!((&m - m.transpose()).amax() < 1e-15);
        prop_assert!(m.cholesky().is_some());
    }

    #[test]
    fn coriolis_structure_is_skew(s in state()) {
        let model = FjrModel::quanser();
        let v = ph::velocity(&model, &s).unwrap();
        let c = ph::coriolis_structure(&model, &s.q, &v).unwrap();
        prop_assert!((&c + c.transpose()).amax() == 0.0);
        prop_assert!(ph::workless_residual(&model, &s).unwrap().abs() < 1e-10);
    }

    #[test]
    fn energy_rate_is_supply_minus_dissipation(s in state(), u in dvec(2, 5.0)) {
        let model = FjrModel::quanser();
        let rate = ph::dynamics(&model, &s, &u).unwrap();
        let h = 1e-6;
        let at = |k: f64| {
            let x = State::new(&s.q + &rate.dq * k, &s.p + &rate.dp * k, 2).unwrap();
            ph::hamiltonian(&model, &x).unwrap()
        };
        let dh = (at(h) - at(-h)) / (2.0 * h);
        let pb = ph::power_balance(&model, &s, &u).unwrap();
        let expect = pb.supplied - pb.dissipated;
        prop_assert!(pb.dissipated >= 0.0);
        prop_assert!((dh - expect).abs() < 1e-5 * (1.0 + expect.abs()), "{} vs {}", dh, expect);
    }

    #[test]
    fn virtual_system_coincides_on_the_diagonal(s in state(), u in dvec(2, 5.0)) {
        let model = FjrModel::quanser();
        let a = ph::dynamics(&model, &s, &u).unwrap().to_vector();
        let b = vsys::virtual_dynamics(&model, &VirtualState::diagonal(s.clone()), &u).unwrap().to_vector();
        prop_assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn maps_vanish_at_zero_and_are_odd(k in kind(), q in dvec(4, 5.0)) {
        let spec = ControllerSpec::quanser(k);
        prop_assert!(phi(&spec, &DVector::zeros(4)).amax() == 0.0);
        prop_assert!((phi(&spec, &q) + phi(&spec, &(-&q))).amax() < 1e-12);
    }

    #[test]
    fn diagonal_maps_are_monotone(linear in any::<bool>(), a in dvec(4, 20.0), b in dvec(4, 20.0)) {
        let spec = ControllerSpec::quanser(if linear { PhiKind::Linear } else { PhiKind::Saturated });
        let d = &b - &a;
        prop_assert!(d.dot(&(phi(&spec, &b) - phi(&spec, &a))) >= 0.0);
    }

    #[test]
    fn mu1_is_a_sublinear_functional(
        a in prop::collection::vec(-10.0f64..10.0, 16),
        b in prop::collection::vec(-10.0f64..10.0, 16),
        c in 0.0f64..5.0,
    ) {
        let (a, b) = (DMatrix::from_vec(4, 4, a), DMatrix::from_vec(4, 4, b));
        let (ma, mb) = (matrix_measure_mu1(&a), matrix_measure_mu1(&b));
        prop_assert!(matrix_measure_mu1(&(&a + &b)) <= ma + mb + 1e-12);
        prop_assert!((matrix_measure_mu1(&(&a * c)) - c * ma).abs() < 1e-9);
        prop_assert!(ma <= a.column_iter().map(|col| col.abs().sum()).fold(f64::MIN, f64::max) + 1e-12);
    }

    #[test]
    fn storage_is_positive_definite(q in dvec(2, 3.2), d in dvec(8, 2.0)) {
        let model = FjrModel::quanser();
        let spec = ControllerSpec::quanser(PhiKind::Linear);
        let w = differential_storage(&model, &spec, &q, &d).unwrap();
        prop_assert!(w >= 0.0);
        prop_assert_eq!(w == 0.0, d.amax() == 0.0);
    }

    #[test]
    fn errors_round_trip_through_the_state(k in kind(), e in errors(0.5), t in 0.0f64..10.0) {
        let model = FjrModel::quanser();
        let spec = ControllerSpec::quanser(k);
        let reference = SinusoidReference::unit(2);
        let x = state_from_errors(&model, &spec, &reference, &e, t).unwrap();
        let c = control_terms(&model, &spec, &reference, &x, &x, t, &Omega::zero(2), None).unwrap();
        prop_assert!((c.errors.to_vector() - e.to_vector()).amax() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_round_trips(t_end in 0.01f64..100.0, offset in dvec(2, 1.0), seed in any::<u64>()) {
        let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/quanser_phi3.toml");
        let mut cfg = RunConfig::load(&path).unwrap();
        cfg.sim.t_end = t_end;
        cfg.sim.link_offset = offset.iter().copied().collect();
        cfg.sim.noise_seed = seed;
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
