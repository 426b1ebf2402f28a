use memheat_core::spectral::{
    eigenbasis, f_dot_u, nonlinear_galerkin, nonlocal_value, DiffusionLaw, Nonlinearity, NonlocalCoefficient,
    SpectralField,
};
use proptest::collection::vec;
use proptest::prelude::*;

fn field(n: usize) -> impl Strategy<Value = SpectralField> {
    vec(-2.0f64..2.0, n).prop_map(SpectralField::from_coeffs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_holds_on_the_grid(u in field(8), length in 0.5f64..3.0) {
        let basis = eigenbasis(length, 8, 12).unwrap();
        let nodal = basis.to_nodal(&u);
        let sq: Vec<f64> = nodal.iter().map(|v| v * v).collect();
        let by_grid = basis.integrate_nodal(&sq);
        let by_modes = u.norm_h_sq();
        prop_assert!((by_grid - by_modes).abs() <= 1e-10 * by_modes.max(1e-300));
    }

    #[test]
    fn transforms_round_trip(u in field(6)) {
        let basis = eigenbasis(1.3, 6, 9).unwrap();
        let back = basis.to_modal(&basis.to_nodal(&u));
        for (a, b) in back.coeffs.iter().zip(&u.coeffs) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn f_dot_u_two_ways_and_lower_bound(
        u in field(6),
        c1 in -2.0f64..2.0,
        c2 in -2.0f64..2.0,
        c0 in -1.0f64..1.0,
        lead in 0.3f64..2.0,
    ) {
        let f = Nonlinearity::new(vec![lead, c2, c1, c0]).unwrap();
        let basis = eigenbasis(1.0, 6, 24).unwrap();
        let modal = nonlinear_galerkin(&u, &f, &basis).unwrap().dot(&u);
        let nodal = f_dot_u(&u, &f, &basis);
        prop_assert!((modal - nodal).abs() <= 1e-8 * nodal.abs().max(1.0));

        let k = f.constants();
        let lp = basis.lp_norm_pow(&u, 2 * f.p() as i32);
        prop_assert!(nodal >= 0.5 * k.f0 * lp - k.a0 * basis.length() - 1e-9);
    }

    #[test]
    fn nonlocal_value_respects_declared_bounds(
        u in field(5),
        w in field(5),
        base in -3.0f64..3.0,
        slope in -5.0f64..5.0,
        m in 0.1f64..1.0,
        width in 0.0f64..2.0,
    ) {
        let law = DiffusionLaw::ClampedAffine { base, slope, m, m_tilde: m + width };
        let a = NonlocalCoefficient::new(law, w).unwrap();
        let v = nonlocal_value(&u, &a);
        prop_assert!(v >= a.lower() && v <= a.upper());
    }
}

#[test]
fn odd_nonlinearity_keeps_the_first_mode_in_odd_modes() {
    let basis = eigenbasis(1.0, 9, 27).unwrap();
    let f = Nonlinearity::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let out = nonlinear_galerkin(&SpectralField::mode(9, 1, 1.3), &f, &basis).unwrap();
    for (j, c) in out.coeffs.iter().enumerate() {
        // 1-based mode j+1; even modes are odd about L/2 and must vanish
        if (j + 1) % 2 == 0 {
            assert!(c.abs() < 1e-13, "mode {} = {c:e}", j + 1);
        }
    }
    assert!(out.coeffs[0].abs() > 0.1 && out.coeffs[2].abs() > 0.01);
}
