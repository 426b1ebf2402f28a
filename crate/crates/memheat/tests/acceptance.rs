//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p memheat --test acceptance`. The randomized
//! campaign takes a few minutes on one core.

use anyhow::{anyhow, Result};
use memheat::campaign::{random_campaign, rng_for, run_campaign, CampaignOptions};
use memheat::config::{default_collocation, parse_file, FieldSpec, RunConfig};
use memheat_core::diagnostics::{attractor_probe, damped_steady_state, separation_decay};
use memheat_core::history::{equivalence_residual, history_norm_mu, lift, lv2_norm, PastTrajectory};
use memheat_core::kernel::{build_quadrature, default_s_max, k_mu_bound, MemoryKernel};
use memheat_core::solver::{solve, solve_reference, ProblemConfig, ProblemSetup};
use memheat_core::spectral::{eigenbasis, Nonlinearity, NonlocalCoefficient, SpectralField};
use rand::Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

const SEED: u64 = 7;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn standard() -> Result<RunConfig> {
    parse_file(&repo_root().join("configs/standard.toml"))
}

fn build(rc: &RunConfig) -> Result<memheat::config::Problem> {
    Ok(rc.build(&repo_root())?)
}

fn run_err(e: memheat_core::solver::SolveError) -> anyhow::Error {
    anyhow!("{e}")
}

type Outcome = Result<(bool, String)>;

fn memory_equivalence() -> Outcome {
    let basis = eigenbasis(1.0, 3, 5)?;
    let exp = MemoryKernel::exponential(1.0, 1.0)?;
    let exp_rule = Arc::new(build_quadrature(&exp, 128, default_s_max(&exp))?);
    let mut worst_exp: f64 = 0.0;
    for beta in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let phi = PastTrajectory::exponential_mix(vec![vec![(1.0, beta)], vec![(-0.5, 2.0 * beta)], vec![(0.3, beta + 1.0)]]);
        let eta = lift(&phi, &exp_rule, &basis, 0.5)?;
        worst_exp = worst_exp.max(equivalence_residual(&eta, &phi, &exp, &basis)?);
    }
    let sing = MemoryKernel::singular(1.0, 0.5)?;
    let sing_rule = Arc::new(build_quadrature(&sing, 128, default_s_max(&sing))?);
    let mut worst_sing: f64 = 0.0;
    for beta in [0.5, 1.0, 2.0] {
        let phi = PastTrajectory::single_exponential(1, 1.0, beta);
        let eta = lift(&phi, &sing_rule, &basis, 0.5)?;
        worst_sing = worst_sing.max(equivalence_residual(&eta, &phi, &sing, &basis)?);
    }
    Ok((
        worst_exp <= 1e-6 && worst_sing <= 1e-3,
        format!("exponential {worst_exp:.2e} (<= 1e-6), singular {worst_sing:.2e} (<= 1e-3)"),
    ))
}

fn lift_bound() -> Outcome {
    let basis = eigenbasis(1.0, 4, 6)?;
    let gamma = 0.5;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let kernels = [MemoryKernel::exponential(1.0, 1.0)?, MemoryKernel::singular(1.0, 0.5)?];
    for i in 0..100u64 {
        let mut rng = rng_for(SEED, i);
        let kernel = kernels[(i % 2) as usize];
        let rule = Arc::new(build_quadrature(&kernel, 128, default_s_max(&kernel))?);
        let terms = (0..4)
            .map(|_| {
                (0..rng.random_range(0..3))
                    .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-0.2..3.0)))
                    .collect()
            })
            .collect();
        let phi = PastTrajectory::exponential_mix(terms);
        let lhs = history_norm_mu(&lift(&phi, &rule, &basis, gamma)?, &basis);
        let rhs = k_mu_bound(&kernel, gamma, kernel.delta())? * lv2_norm(&phi, &basis, gamma);
        if lhs > rhs {
            violations += 1;
        }
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    Ok((violations == 0, format!("{violations} violations in 100 histories, largest ratio {worst:.3}")))
}

fn linear_setup(memory: bool, dt: f64, horizon: f64) -> Result<ProblemConfig> {
    let mut s = ProblemSetup::new(eigenbasis(1.0, 1, 2)?, Nonlinearity::zero(), NonlocalCoefficient::constant(1.0, 1)?);
    if memory {
        s.kernel = Some(MemoryKernel::exponential(1.0, 1.0)?);
        s.n_nodes = 128;
    }
    s.dt = dt;
    s.horizon = horizon;
    Ok(s.build()?)
}

fn linear_decay() -> Outcome {
    let w1 = SpectralField::mode(1, 1, 1.0);
    let fine = solve(&linear_setup(false, 1e-4, 1.0)?, &w1, &PastTrajectory::Zero).map_err(run_err)?;
    let coarse = solve(&linear_setup(false, 2e-4, 1.0)?, &w1, &PastTrajectory::Zero).map_err(run_err)?;
    let exact = (-std::f64::consts::PI.powi(2)).exp();
    let err = (fine.final_state.u.coeffs[0] - exact).abs();
    let ratio = (coarse.final_state.u.coeffs[0] - exact).abs() / err;
    Ok((
        err <= 1e-6 && (ratio - 2.0).abs() < 0.05,
        format!("|u(1) - e^-λ₁| = {err:.2e} (<= 1e-6), error ratio on halving {ratio:.3}"),
    ))
}

fn two_by_two() -> Outcome {
    // φ = e^{βr} w₁ meets u₀ = w₁ at r = 0
    let beta = 1.0;
    let cfg = linear_setup(true, 1e-4, 2.0)?;
    let out = solve(&cfg, &SpectralField::mode(1, 1, 1.0), &PastTrajectory::single_exponential(1, 1.0, beta))
        .map_err(run_err)?;
    let l = cfg.basis.lambda1();
    let (k0, delta) = (1.0, 1.0);
    let (a11, a12, a21, a22) = (-l, -l, k0, -delta);
    let tr = a11 + a22;
    let disc = (tr * tr / 4.0 - (a11 * a22 - a12 * a21)).sqrt();
    let (r1, r2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    let y0 = k0 / (delta + beta);
    let c1 = (a11 + a12 * y0 - r2) / (r1 - r2);
    let exact = c1 * (2.0 * r1).exp() + (1.0 - c1) * (2.0 * r2).exp();
    let err = (out.final_state.u.coeffs[0] - exact).abs();
    Ok((err <= 1e-5, format!("|b(2) - closed form| = {err:.2e} (<= 1e-5)")))
}

fn cross_validation() -> Outcome {
    let mut rc = standard()?;
    rc.space.n_modes = 16;
    rc.space.n_collocation = default_collocation(16, &rc.f.coeffs);
    rc.time.dt = 1e-4;
    rc.time.horizon = 1.0;
    let p = build(&rc)?;
    let out = solve(&p.cfg, &p.u0, &p.phi).map_err(run_err)?;
    let reference = solve_reference(&p.cfg, &p.u0, &p.phi)?;
    let gap = out.final_state.u.sub(&reference.last_field()).norm_h_sq().sqrt();
    Ok((gap <= 1e-3, format!("|u(1) - u_ref(1)| = {gap:.2e} (<= 1e-3), n = 16, dt = 1e-4")))
}

fn campaign() -> Result<[(bool, String); 2]> {
    let configs = random_campaign(SEED, 100);
    let opts = CampaignOptions {
        separation: false,
        ..CampaignOptions::default()
    };
    let rows: Vec<_> = run_campaign(&configs, &opts, &repo_root()).into_iter().collect::<Result<_>>()?;
    let steps: usize = rows.iter().map(|r| r.dissipation_violations).sum();
    let runs = rows.iter().filter(|r| r.dissipation_violations > 0).count();
    let worst = rows.iter().map(|r| r.worst_dissipation_excess).fold(f64::NEG_INFINITY, f64::max);
    let dissipation = (
        steps == 0,
        format!("{steps} violating steps in {runs} of 100 runs, largest excess over allowance {worst:.2e}"),
    );
    let env_fail = rows.iter().filter(|r| !r.envelope_pass).count();
    let entry_fail: Vec<_> = rows
        .iter()
        .filter(|r| !matches!(r.entry_status.as_str(), "entered" | "inside"))
        .map(|r| format!("{}:{}", r.index, r.entry_status))
        .collect();
    let entered = rows.iter().filter(|r| r.entry_status == "entered").count();
    let envelope = (
        env_fail == 0 && entry_fail.is_empty(),
        format!(
            "{env_fail} envelope failures; {entered} runs entered the ball on time, the rest started inside{}",
            if entry_fail.is_empty() {
                String::new()
            } else {
                format!("; failures {}", entry_fail.join(", "))
            }
        ),
    );
    Ok([dissipation, envelope])
}

fn separation() -> Outcome {
    let mut rc = standard()?;
    rc.time.horizon = 6.0;
    let p = build(&rc)?;
    let n = p.cfg.n_modes();
    let mut failures = 0;
    let (mut worst_ratio, mut slowest): (f64, f64) = (0.0, f64::INFINITY);
    for i in 0..20u64 {
        let mut rng = rng_for(SEED, i);
        let mut draw = || SpectralField::from_coeffs((1..=n).map(|j| 2.0 * rng.random_range(-1.0..=1.0) / j as f64).collect());
        let (ua, ub) = (draw(), draw());
        let a = solve(&p.cfg, &ua, &p.phi).map_err(run_err)?;
        let b = solve(&p.cfg, &ub, &PastTrajectory::Zero).map_err(run_err)?;
        let r = separation_decay(&a, &b, &p.phi, &PastTrajectory::Zero, &p.cfg, 1e-3)?;
        if !(r.bound_holds() && r.rate_at_least(0.9)) {
            failures += 1;
        }
        worst_ratio = worst_ratio.max(r.max_ratio);
        slowest = slowest.min(r.fitted_rate.unwrap_or(f64::INFINITY) / r.gamma);
    }
    Ok((
        failures == 0,
        format!("{failures} of 20 pairs fail; largest series/bound {worst_ratio:.3}, slowest rate {slowest:.3}γ"),
    ))
}

fn self_convergence() -> Outcome {
    let rc = standard()?;
    let base = build(&rc)?;
    let horizon = base.cfg.horizon;
    let run = |k: i32| -> Result<SpectralField> {
        let mut cfg = base.cfg.clone();
        cfg.dt = horizon * 2f64.powi(-k);
        Ok(solve(&cfg, &base.u0, &base.phi).map_err(run_err)?.final_state.u)
    };
    let reference = run(18)?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 8..=12 {
        let e = run(k)?.sub(&reference).norm_h_sq().sqrt();
        xs.push((horizon * 2f64.powi(-k)).ln());
        ys.push(e.ln());
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let order = sxy / sxx;
    Ok((order >= 0.9, format!("observed order {order:.3} (>= 0.9) over dt = 2^-8..2^-12")))
}

fn attractor() -> Outcome {
    // damped: the standard problem without forcing collapses to zero
    let mut rc = standard()?;
    rc.g.forcing = FieldSpec::Named("zero".into());
    let p = build(&rc)?;
    let n = p.cfg.n_modes();
    let ensemble = |members: u64, amplitude: f64, n: usize| -> Vec<(SpectralField, PastTrajectory)> {
        (0..members)
            .map(|i| {
                let mut rng = rng_for(SEED, i);
                let u0 = (1..=n).map(|j| amplitude * rng.random_range(-1.0..=1.0) / j as f64).collect();
                (SpectralField::from_coeffs(u0), PastTrajectory::Zero)
            })
            .collect()
    };
    let damped = attractor_probe(&p.cfg, &ensemble(8, 2.0, n), 20.0, 2.0)?;

    // bistable: on a long interval the zero state is unstable and u³ - u
    // has a positive and a negative steady state
    let mut rc = standard()?;
    rc.domain.length = 4.0;
    rc.kernel.spec = "none".into();
    rc.g.forcing = FieldSpec::Named("zero".into());
    rc.initial.past = None;
    let p = build(&rc)?;
    let probe = attractor_probe(&p.cfg, &ensemble(8, 2.0, n), 50.0, 10.0)?;
    let mut worst: f64 = 0.0;
    for c in &probe.clusters {
        // seed the iteration from ±w₁ only, so it finds the state on its own
        let guess = SpectralField::mode(n, 1, c.center[0].signum());
        let steady = damped_steady_state(&p.cfg, &guess, 1e-12, 200_000)?;
        let center = SpectralField::from_coeffs(c.center.clone());
        worst = worst.max(steady.sub(&center).norm_h_sq().sqrt());
    }
    let pass = damped.diameter <= 1e-6 && probe.clusters.len() >= 2 && worst <= 1e-4;
    Ok((
        pass,
        format!(
            "damped diameter {:.2e} (<= 1e-6); bistable {} clusters, largest gap to steady state {worst:.2e} (<= 1e-4)",
            damped.diameter,
            probe.clusters.len()
        ),
    ))
}

fn report(id: usize, name: &str, started: Instant, outcome: Outcome, failed: &mut usize) {
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok((true, detail)) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1}s]"),
        Ok((false, detail)) => {
            *failed += 1;
            println!("criterion {id:>2} FAIL  {name}: {detail} [{secs:.1}s]");
        }
        Err(e) => {
            *failed += 1;
            println!("criterion {id:>2} FAIL  {name}: error: {e:#} [{secs:.1}s]");
        }
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let singles: [(usize, &str, fn() -> Outcome); 5] = [
        (1, "memory equivalence", memory_equivalence),
        (2, "lift bound", lift_bound),
        (3, "linear decay", linear_decay),
        (4, "single-mode memory oracle", two_by_two),
        (5, "history form vs convolution form", cross_validation),
    ];
    for (id, name, f) in singles {
        let t = Instant::now();
        report(id, name, t, f(), &mut failed);
    }

    let t = Instant::now();
    match campaign() {
        Ok([d, e]) => {
            report(6, "discrete dissipation", t, Ok(d), &mut failed);
            report(7, "decay envelope and absorbing ball", t, Ok(e), &mut failed);
        }
        Err(e) => {
            let msg = format!("{e:#}");
            report(6, "discrete dissipation", t, Err(anyhow!("{msg}")), &mut failed);
            report(7, "decay envelope and absorbing ball", t, Err(anyhow!("{msg}")), &mut failed);
        }
    }

    let rest: [(usize, &str, fn() -> Outcome); 3] = [
        (8, "separation decay", separation),
        (9, "self-convergence", self_convergence),
        (10, "attractor probe", attractor),
    ];
    for (id, name, f) in rest {
        let t = Instant::now();
        report(id, name, t, f(), &mut failed);
    }

    if failed == 0 {
        println!("all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("{failed} of 10 criteria fail");
        ExitCode::FAILURE
    }
}
