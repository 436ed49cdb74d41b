use burkholder::functions::{eval_l1, eval_l1_det_form, eval_phi, Exponent, Mat2};
use burkholder::identities::{check_l_moment_identity, phi_upper_bound_gap, RankOneProbe, PROBE_POINTS};
use burkholder::optimizer::linspace;
use burkholder::radial::{integral_l_stretch, StretchProfile};
use burkholder::torus::{dirichlet_energy, energy_f, null_lagrangian, GridFunction, TorusGrid};
use burkholder::{Complex64, WirtingerPair};
use proptest::prelude::*;

fn complex(bound: f64) -> impl Strategy<Value = Complex64> {
    (-bound..bound, -bound..bound).prop_map(|(re, im)| Complex64::new(re, im))
}

fn matrix(bound: f64) -> impl Strategy<Value = Mat2> {
    prop::array::uniform4(-bound..bound).prop_map(|[a, b, c, d]| Mat2 { a, b, c, d })
}

fn grid_function() -> impl Strategy<Value = GridFunction> {
    (2usize..9).prop_flat_map(|n| {
        prop::collection::vec(-3.0..3.0f64, 2 * n * n)
            .prop_map(move |c| GridFunction::from_coefficients(TorusGrid::new(n).unwrap(), c).unwrap())
    })
}

fn sampled_profile() -> impl Strategy<Value = StretchProfile> {
    (prop::collection::vec((0.05..1.0f64, 0.0..3.0f64), 1..10), 0.05..=1.0f64).prop_map(|(knots, tail)| {
        let mut radii = vec![0.0];
        let mut values = vec![0.0];
        for (dr, v) in knots {
            radii.push(radii.last().unwrap() + dr);
            values.push(v);
        }
        StretchProfile::sampled(radii, values, tail).unwrap()
    })
}

proptest! {
    #[test]
    fn matrix_forms_of_l1_agree(m in matrix(3.0)) {
        let scale = 1.0 + m.norm_sq();
        prop_assert!((eval_l1(&m) - eval_l1_det_form(&m)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn phi_is_p_homogeneous(z in complex(2.0), w in complex(2.0), lam in complex(3.0), p in 1.05..6.0f64) {
        let p = Exponent::new(p).unwrap();
        let base = eval_phi(&WirtingerPair::new(z, w).unwrap(), &p);
        let scaled = eval_phi(&WirtingerPair::new(z * lam, w * lam).unwrap(), &p);
        let expect = lam.norm().powf(p.p()) * base;
        prop_assert!((scaled - expect).abs() <= 1e-11 * (1.0 + expect.abs()));
    }

    #[test]
    fn phi_stays_below_its_bound(z in complex(3.0), w in complex(3.0), p in 1.05..6.0f64) {
        let p = Exponent::new(p).unwrap();
        let pair = WirtingerPair::new(z, w).unwrap();
        let (a, b) = pair.moduli();
        let scale = 1.0 + ((p.pstar() - 1.0) * a).powf(p.p()) + b.powf(p.p());
        prop_assert!(phi_upper_bound_gap(&pair, &p) >= -1e-13 * scale);
    }

    #[test]
    fn rank_one_lines_are_midpoint_convex(
        base in matrix(1.5),
        tu in 0.0..std::f64::consts::TAU,
        tv in 0.0..std::f64::consts::TAU,
        s in -2.0..2.0f64,
    ) {
        let direction = Mat2::outer([tu.cos(), tu.sin()], [tv.cos(), tv.sin()]).scale(10f64.powf(s));
        let probe = RankOneProbe { base, direction };
        let out = probe.run(&linspace(-5.0, 5.0, PROBE_POINTS));
        prop_assert!(out.violation.is_none(), "{:?}", out.violation);
        prop_assert!(out.max_closed_form_error <= 1e-12);
    }

    #[test]
    fn jacobian_integrates_to_zero(f in grid_function()) {
        prop_assert!(null_lagrangian(&f).abs() <= 1e-12 * (1.0 + dirichlet_energy(&f)));
    }

    #[test]
    fn energy_is_translation_invariant(f in grid_function(), dm in -4i64..4, dn in -4i64..4) {
        let e = energy_f(&f);
        prop_assert!((energy_f(&f.shifted(dm, dn)) - e).abs() <= 1e-12 * (1.0 + e.abs()));
    }

    #[test]
    fn lipschitz_stretches_have_nonnegative_integral(g in sampled_profile()) {
        prop_assert!(integral_l_stretch(&g).unwrap() >= -1e-8);
    }

    #[test]
    fn profile_json_round_trips(g in sampled_profile()) {
        prop_assert_eq!(StretchProfile::from_json(&g.to_json().unwrap()).unwrap(), g);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn l_moment_identity_holds_off_grid(z in complex(3.0), w in complex(3.0), p in 1.05..1.95f64) {
        prop_assume!(z.norm() + w.norm() > 1e-3);
        let p = Exponent::new(p).unwrap();
        let chk = check_l_moment_identity(&WirtingerPair::new(z, w).unwrap(), &p).unwrap();
        prop_assert!(chk.relative_error < 1e-6, "{:?}", chk);
    }
}
