use std::f64::consts::PI;

use nvspin::config::SpinSystemConfig;
use nvspin::dynamics::{linspace, nuclear_drive, propagate_lab, propagate_rwa, rabi_trace, with_resonant_drive, Frame, PropagationSettings};
use nvspin::estimation::{synth_measurement, ReadoutModel, SweepDataset, SweepPoint};
use nvspin::hamiltonian::{build_full_spin1, build_rf, build_rf_rwa, build_static};
use nvspin::mixing::{diagonalize, enhancement_exact, enhancement_first_order, enhancement_full_model, zq_angles, zq_pairs, zq_unitary, ZqAngles};
use nvspin::operator::{BasisLabel, CVector, Manifold, Model, C64};
use nvspin::oscillation::fit_cosine;
use proptest::prelude::*;

fn manifold() -> impl Strategy<Value = Manifold> {
    prop_oneof![Just(Manifold::Plus), Just(Manifold::Zero), Just(Manifold::Minus)]
}

fn config() -> impl Strategy<Value = SpinSystemConfig> {
    (0.0..1500.0f64, -5.0..5.0f64, 0.0..50.0f64, 0.0..10.0f64).prop_map(|(b_z, a_perp, b1, omega_rf)| SpinSystemConfig {
        b_z,
        a_perp,
        b1,
        omega_rf,
        ..SpinSystemConfig::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonians_are_hermitian(c in config(), t in 0.0..10.0f64) {
        prop_assert!(build_static(&c).is_hermitian(1e-12));
        prop_assert!(build_rf(&c, t).is_hermitian(1e-12));
        prop_assert!(build_rf_rwa(&c).is_hermitian(1e-12));
        prop_assert!(build_full_spin1(&c).is_hermitian(1e-12));
    }

    #[test]
    fn zq_rotation_is_unitary(tp in -PI..PI, tm in -PI..PI) {
        let u = zq_unitary(ZqAngles { theta_plus: tp, theta_minus: tm });
        prop_assert!(u.unitarity_error() < 1e-14);
        let back = u.mul(&zq_unitary(ZqAngles { theta_plus: tp, theta_minus: tm }.negate()));
        prop_assert!(back.unitarity_error() < 1e-14);
        prop_assert!((back.matrix() - nvspin::operator::Operator::identity(Model::Reduced).matrix()).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn zq_rotation_removes_pair_coupling(b_z in 0.0..600.0f64, a_perp in -5.0..5.0f64) {
        let c = SpinSystemConfig::default().with_field(b_z).with_a_perp(a_perp);
        let u = zq_unitary(zq_angles(&c).unwrap());
        let rotated = u.mul(&build_static(&c)).mul(&u.adjoint());
        for (a, b) in zq_pairs() {
            prop_assert!(rotated.element(a, b).norm() < 1e-9 * a_perp.abs().max(1.0));
        }
    }

    #[test]
    fn dressed_labels_are_a_bijection(c in config()) {
        let eig = diagonalize(&build_static(&c)).unwrap();
        let mut labels = eig.labels.clone();
        labels.sort_by_key(|l| (l.m_s, l.m_i));
        labels.dedup();
        prop_assert_eq!(labels.len(), 6);
        for m in Manifold::ALL {
            for m_i in [1, 0] {
                let v = eig.state(BasisLabel::new(m.m_s(), m_i));
                let idx = Model::Reduced.index_of(BasisLabel::new(m.m_s(), m_i)).unwrap();
                prop_assert!(v[idx].im.abs() < 1e-12 && v[idx].re > 0.0);
            }
        }
    }

    #[test]
    fn first_order_is_affine_in_coupling(b_z in 0.0..1500.0f64, a_perp in -5.0..5.0f64) {
        let c = SpinSystemConfig::default().with_field(b_z);
        let plus = enhancement_first_order(&c.with_a_perp(a_perp)).unwrap().as_array();
        let minus = enhancement_first_order(&c.with_a_perp(-a_perp)).unwrap().as_array();
        for k in 0..3 {
            prop_assert!((plus[k] + minus[k] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn perturbative_and_exact_agree_below_600_gauss(b_z in 0.0..600.0f64) {
        let c = SpinSystemConfig::default().with_field(b_z);
        let approx = enhancement_first_order(&c).unwrap().as_array();
        let exact = enhancement_exact(&c).unwrap().as_array();
        for k in 0..3 {
            prop_assert!(((approx[k] - exact[k]) / exact[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn reduced_model_matches_full_spin1_away_from_zero_field(b_z in 0.1..600.0f64) {
        let c = SpinSystemConfig::default().with_field(b_z);
        let reduced = enhancement_exact(&c).unwrap().as_array();
        let full = enhancement_full_model(&c).unwrap().as_array();
        for k in 0..3 {
            prop_assert!((reduced[k] / full[k] - 1.0).abs() < 1e-2);
        }
    }

    #[test]
    fn rwa_evolution_preserves_norm(c in config(), m in manifold(), tau in 0.0..100.0f64) {
        let [a, b] = propagate_rwa(&c, m, tau).unwrap();
        prop_assert!((a.norm_sqr() + b.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detuned_rwa_traces_follow_generalized_frequency(b_z in 0.0..600.0f64, m in manifold(), frac in -1.0..1.0f64) {
        let c0 = with_resonant_drive(&SpinSystemConfig::default().with_field(b_z), m).unwrap();
        let rabi = nuclear_drive(&c0, m).unwrap().rabi;
        let c = c0.with_omega_rf(c0.omega_rf + frac * rabi.abs());
        let want = rabi.hypot(frac * rabi);
        let trace = rabi_trace(&c, m, &linspace(3.0 / want, 80), Frame::Rwa, &PropagationSettings::for_config(&c)).unwrap();
        let fit = fit_cosine(&trace.times, &trace.population).unwrap();
        prop_assert!((fit.frequency / want - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_fit_recovers_noiseless_parameters(
        f in 0.01..5.0f64, amp in 0.05..3.0f64, phase in -PI..PI, offset in -2.0..2.0f64,
        periods in 1.6..6.0f64, per_period in 10.0..30.0f64,
    ) {
        let t = linspace(periods / f, (periods * per_period).ceil().max(30.0) as usize);
        let y: Vec<f64> = t.iter().map(|&t| amp * (2.0 * PI * f * t + phase).cos() + offset).collect();
        let fit = fit_cosine(&t, &y).unwrap();
        prop_assert!((fit.frequency / f - 1.0).abs() < 1e-9, "{} vs {}", fit.frequency, f);
        prop_assert!((fit.amplitude.abs() / amp - 1.0).abs() < 1e-8);
        prop_assert!((fit.offset - offset).abs() < 1e-8 * amp.max(1.0));
    }

    #[test]
    fn synthetic_measurements_depend_only_on_seed(m in manifold(), seed in any::<u64>()) {
        let c = with_resonant_drive(&SpinSystemConfig::default().with_field(509.0), m).unwrap();
        let times = linspace(30.0, 12);
        let r = ReadoutModel::default();
        let a = synth_measurement(&c, m, &times, &r, seed).unwrap();
        let b = synth_measurement(&c, m, &times, &r, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sweep_csv_round_trips(points in prop::collection::vec((manifold(), 0.01..1.0f64, 1e-4..1.0f64, 1e-6..1e-2f64), 1..20)) {
        let data = SweepDataset {
            b_z: 509.0,
            points: points.iter().map(|&(manifold, x, omega_m, sigma)| SweepPoint { manifold, x, omega_m, sigma }).collect(),
        };
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = SweepDataset::read_csv(buf.as_slice(), 509.0).unwrap();
        prop_assert_eq!(back.points.len(), data.points.len());
        for (a, b) in back.points.iter().zip(&data.points) {
            prop_assert_eq!(a.manifold, b.manifold);
            prop_assert!((a.x / b.x - 1.0).abs() < 1e-12);
            prop_assert!((a.omega_m / b.omega_m - 1.0).abs() < 1e-12);
            prop_assert!((a.sigma / b.sigma - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn full_model_hybridizes_opposite_manifolds_at_zero_field() {
    // |-1,+1> and |+1,-1> are degenerate at zero field and share the coupling to |0,0>
    let eig = diagonalize(&build_full_spin1(&SpinSystemConfig::default())).unwrap();
    let k = eig.position(BasisLabel::new(-1, 1)).unwrap();
    assert!((eig.dominant_weight[k] - 0.5).abs() < 1e-6);
    let eig = diagonalize(&build_full_spin1(&SpinSystemConfig::default().with_field(1.0))).unwrap();
    let k = eig.position(BasisLabel::new(-1, 1)).unwrap();
    assert!(eig.dominant_weight[k] > 0.999);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lab_evolution_preserves_norm(b_z in 0.0..900.0f64, m in manifold(), b1 in 0.0..60.0f64, tau in 0.0..0.05f64, mix in 0.0..1.0f64) {
        let c = with_resonant_drive(&SpinSystemConfig::default().with_field(b_z).with_b1(b1), m).unwrap();
        let eig = diagonalize(&build_static(&c)).unwrap();
        let up = eig.state(BasisLabel::new(m.m_s(), 1));
        let down = eig.state(BasisLabel::new(m.m_s(), 0));
        let psi: CVector = up * C64::new(mix.sqrt(), 0.0) + down * C64::new(0.0, (1.0 - mix).sqrt());
        let out = propagate_lab(&c, &psi, tau, &PropagationSettings::for_config(&c)).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-9);
    }
}
