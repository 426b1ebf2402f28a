use memheat_core::diagnostics::{envelope_check, x_norm_direct};
use memheat_core::history::PastTrajectory;
use memheat_core::kernel::MemoryKernel;
use memheat_core::solver::{solve, ProblemConfig, ProblemSetup};
use memheat_core::spectral::{eigenbasis, Nonlinearity, NonlocalCoefficient, SpectralField};
use proptest::collection::vec;
use proptest::prelude::*;

fn config(forcing: Vec<f64>, horizon: f64) -> ProblemConfig {
    let n = forcing.len();
    let basis = eigenbasis(1.0, n, 2 * n).unwrap();
    let mut s = ProblemSetup::new(
        basis,
        Nonlinearity::new(vec![1.0, 0.0, -1.0, 0.0]).unwrap(),
        NonlocalCoefficient::constant(1.0, n).unwrap(),
    );
    s.kernel = Some(MemoryKernel::exponential(1.0, 1.0).unwrap());
    s.forcing = Some(SpectralField::from_coeffs(forcing));
    s.horizon = horizon;
    s.dt = 2e-3;
    s.build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stronger_forcing_means_a_larger_ball(g in vec(-2.0f64..2.0, 3), lo in 0.0f64..1.0, extra in 0.01f64..2.0) {
        let scaled = |s: f64| g.iter().map(|x| s * x).collect::<Vec<_>>();
        let a = config(scaled(lo), 0.0).constants;
        let b = config(scaled(lo + extra), 0.0).constants;
        prop_assert!(b.k0 >= a.k0);
        prop_assert!(b.k2 >= a.k2);
        prop_assert_eq!(a.k1, b.k1);
    }
}

#[test]
fn runs_stay_under_the_envelope_and_x_norm_agrees_with_the_direct_sum() {
    let cfg = config(vec![0.5, 0.0, -0.2], 3.0);
    let u0 = SpectralField::from_coeffs(vec![2.0, -1.0, 0.5]);
    let phi = PastTrajectory::exponential_mix(vec![vec![(2.0, 1.0)], vec![(-1.0, 2.0)], vec![(0.5, 0.5)]]);
    let out = solve(&cfg, &u0, &phi).unwrap();
    let times: Vec<f64> = out.records.iter().map(|r| r.t).collect();
    let report = envelope_check(&times, &out.x_norm_series(), &out.constants, out.x0, 1e-3);
    assert!(report.pass, "{report:?}");
    assert!(out.records.iter().all(|r| r.x_norm >= 0.0 && r.x_norm.is_finite()));

    let h: Vec<f64> = out.records.iter().map(|r| r.u_h * r.u_h).collect();
    let v: Vec<f64> = out.records.iter().map(|r| r.u_v * r.u_v).collect();
    let direct = x_norm_direct(&times, &h, &v, phi.lv2_norm(&cfg.basis, cfg.gamma), cfg.gamma);
    let worst = out
        .records
        .iter()
        .zip(&direct)
        .map(|(r, d)| (r.x_norm - d).abs() / d)
        .fold(0.0, f64::max);
    // both integrate the same samples; they differ only in the weight on each step
    assert!(worst <= 1e-5, "relative gap {worst:e}");
}
