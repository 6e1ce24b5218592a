use eoc_core::activations::{ActivationKind, ActivationSpec};
use eoc_core::finite_width::{lemma_q1_closed_form, lemma_r_closed_form, max_abs_q1, nlo_trajectory, theorem1_bound};
use eoc_core::gaussian::PanelRule;
use eoc_core::maps;
use eoc_core::solver::solve_init;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = ActivationKind> {
    prop_oneof![Just(ActivationKind::Crelu), Just(ActivationKind::Cst)]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn solved_inits_sit_on_the_eoc(
        kind in kind(),
        s in 0.55f64..0.95,
        q_star in 0.5f64..3.0,
        v in 0.3f64..0.95,
    ) {
        let init = solve_init(kind, s, q_star, v).unwrap();
        let (chi, fp) = init.eoc_residuals().unwrap();
        prop_assert!(chi.abs() <= 1e-9 && fp.abs() <= 1e-9);
        prop_assert!(init.sb2 >= 0.0);
        prop_assert!((init.spec.sparsity(q_star) - s).abs() <= 1e-9);
        prop_assert!((init.v_prime_at_fp - v).abs() <= 1e-9);
    }

    #[test]
    fn nlo_closed_forms_hold_to_depth_200(
        s in 0.55f64..0.95,
        q_star in 0.5f64..3.0,
        v in 0.3f64..0.95,
    ) {
        let init = solve_init(ActivationKind::Crelu, s, q_star, v).unwrap();
        let traj = nlo_trajectory(&init, 200).unwrap();
        for layer in [3, 10, 50, 200] {
            prop_assert!(close(lemma_r_closed_form(&init, layer).unwrap(), traj[layer - 1].r, 1e-9));
            prop_assert!(close(lemma_q1_closed_form(&init, layer).unwrap(), traj[layer - 1].q1, 1e-9));
        }
        prop_assert!(max_abs_q1(&traj) <= theorem1_bound(&init).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn derivatives_match_finite_differences(
        kind in kind(),
        tau in 0.0f64..3.0,
        m in 0.1f64..4.0,
        q in 0.3f64..5.0,
    ) {
        let spec = ActivationSpec::new(kind, tau, m).unwrap();
        let (sw2, sb2) = (1.7, 0.3);
        let h = 1e-4 * q;
        let v = |q| maps::v_map(&spec, sw2, sb2, q).unwrap();
        let vp = |q| maps::v_prime(&spec, sw2, q).unwrap();
        let chi = |q| maps::chi1(&spec, sw2, q).unwrap();
        let fd = |f: &dyn Fn(f64) -> f64| (f(q + h) - f(q - h)) / (2.0 * h);
        prop_assert!(close(fd(&v), vp(q), 1e-5));
        prop_assert!(close(fd(&vp), maps::v_prime2(&spec, sw2, q).unwrap(), 1e-5));
        prop_assert!(close(fd(&chi), maps::chi1_prime(&spec, sw2, q).unwrap(), 1e-5));
    }

    #[test]
    fn chi_and_slope_identities(
        kind in kind(),
        tau in 0.0f64..3.0,
        m in 0.1f64..4.0,
        q in 0.3f64..5.0,
    ) {
        let spec = ActivationSpec::new(kind, tau, m).unwrap();
        let d = maps::diagnostics(&spec, 1.3, 0.2, q).unwrap();
        prop_assert!(close(d.chi1 - d.v_prime, maps::chi1_vprime_gap(&spec, 1.3, q).unwrap(), 1e-10));
        prop_assert!(close(d.chi1_prime - d.v_prime2, maps::chi1_prime_v_prime2_gap(&spec, 1.3, q).unwrap(), 1e-10));
        let quad = maps::v_map_quadrature(&spec, 1.3, 0.2, q, &PanelRule::default()).unwrap();
        prop_assert!(close(quad, d.v, 1e-10));
    }

    #[test]
    fn cst_doubles_the_crelu_quantities(
        tau in 0.0f64..3.0,
        m in 0.1f64..4.0,
        q in 0.3f64..5.0,
    ) {
        let half = ActivationSpec::crelu(tau, m).unwrap();
        let full = ActivationSpec::cst(tau, m).unwrap();
        let a = maps::diagnostics(&half, 1.0, 0.0, q).unwrap();
        let b = maps::diagnostics(&full, 1.0, 0.0, q).unwrap();
        for (x, y) in [(a.v, b.v), (a.v_prime, b.v_prime), (a.v_prime2, b.v_prime2), (a.chi1, b.chi1)] {
            prop_assert!(close(2.0 * x, y, 1e-12));
        }
    }

    #[test]
    fn correlation_map_is_bounded_and_fixes_one(
        s in 0.55f64..0.9,
        v in 0.4f64..0.95,
        rho in -1.0f64..1.0,
    ) {
        let init = solve_init(ActivationKind::Crelu, s, 1.0, v).unwrap();
        let rule = PanelRule::default();
        let r = |rho| maps::correlation_map(&init.spec, init.sw2, init.sb2, 1.0, rho, &rule).unwrap();
        prop_assert!((r(1.0) - 1.0).abs() < 1e-9);
        prop_assert!(r(rho).abs() <= 1.0 + 1e-9);
    }
}
