//! Energies, phase-space norms and the long-time checks built on them.
//!
//! The phase-space norm of the state `(u(t), u_t)` is
//! `‖·‖²_X = |u(t)|² + ‖u_t‖²_{L_V²}`, where the past segment splits as
//! `‖u_t‖²_{L_V²} = e^{-γt} ‖φ‖²_{L_V²} + ∫_0^t e^{-γ(t-σ)} ‖u(σ)‖² dσ`.
//! The integral is carried along the run by a one-step recursion.

use crate::error::{Error, Result};
use crate::history::{lv2_distance, PastTrajectory};
use crate::solver::{solve, ProblemConfig, RunOutput};
use crate::spectral::{nonlinear_galerkin, nonlocal_value, SpectralField};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Per-step diagnostics emitted by the solver.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `‖z‖²_𝓗 = |u|² + ‖η‖²_μ`
    pub energy: f64,
    /// `‖(u, u_t)‖²_X`
    pub x_norm: f64,
    /// `|u|`
    pub u_h: f64,
    /// `‖u‖ = |∇u|`
    pub u_v: f64,
    /// `‖η‖_μ`
    pub eta_mu: f64,
    /// `‖u_t‖²_{L_V²}`
    pub lv2: f64,
    /// discrete residual of the energy dissipation inequality
    pub dissipation_residual: f64,
    /// first-order allowance the residual is compared against
    pub dissipation_allowance: f64,
    /// `K₁ X₀ e^{-γt} + K₂ - x_norm`
    pub envelope_margin: f64,
    /// `|F_j|` per mode
    pub memory_force: Vec<f64>,
}

impl DiagnosticsRecord {
    pub fn dissipation_violated(&self) -> bool {
        self.dissipation_residual > self.dissipation_allowance
    }
}

/// Constants of the decay envelope, absorbing ball and separation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvelopeConstants {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k5: f64,
    pub k_mu: f64,
    pub gamma: f64,
    pub m: f64,
    pub delta: f64,
}

/// `K₀ = 2 a₀ |Ω| + 2 |g|² / (m λ₁)`.
pub fn dissipation_k0(a0: f64, domain_measure: f64, m: f64, lambda1: f64, g_norm_sq: f64) -> f64 {
    2.0 * a0 * domain_measure + 2.0 * g_norm_sq / (m * lambda1)
}

/// Builds the envelope constants.
///
/// `K₁ = (1 + 2/m) max(1, K_μ) + 1` and `K₂ = (1 + 2/m) K₀ / γ` follow from
/// integrating the dissipation inequality against `e^{γt}`, which bounds
/// `E(t) + (m/2) ∫_0^t e^{-γ(t-s)} ‖u‖²` by `E₀ e^{-γt} + K₀/γ`, and from
/// `E₀ ≤ max(1, K_μ) ‖(u₀, φ)‖²_X`. `K₅ = ((γ + δ)² + 1) / m`.
pub fn envelope_constants(m: f64, k_mu: f64, k0: f64, gamma: f64, delta: f64) -> Result<EnvelopeConstants> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::param("m", format!("must be positive, got {m}")));
    }
    if !(k_mu >= 0.0 && k0 >= 0.0 && k_mu.is_finite() && k0.is_finite()) {
        return Err(Error::param("K0", format!("K_mu = {k_mu} and K0 = {k0} must be finite and non-negative")));
    }
    if !(gamma > 0.0) || !(gamma < delta) {
        return Err(Error::param("gamma", format!("need 0 < gamma < delta, got gamma = {gamma}, delta = {delta}")));
    }
    let c = 1.0 + 2.0 / m;
    Ok(EnvelopeConstants {
        k0,
        k1: c * k_mu.max(1.0) + 1.0,
        k2: c * k0 / gamma,
        k5: ((gamma + delta) * (gamma + delta) + 1.0) / m,
        k_mu,
        gamma,
        m,
        delta,
    })
}

impl EnvelopeConstants {
    /// `K₁ X₀ e^{-γt} + K₂`.
    pub fn envelope(&self, x0: f64, t: f64) -> f64 {
        self.k1 * x0 * libm::exp(-self.gamma * t) + self.k2
    }

    /// Time at which the envelope reaches `2K₂`, or `None` when `K₂ = 0`.
    pub fn predicted_entry(&self, x0: f64) -> Option<f64> {
        if !(self.k2 > 0.0) {
            return None;
        }
        if self.k1 * x0 <= self.k2 {
            return Some(0.0);
        }
        Some(libm::log(self.k1 * x0 / self.k2) / self.gamma)
    }
}

/// One-step recursion for `I(t) = ∫_0^t e^{-γ(t-σ)} g(σ) dσ` with
/// `I^{k+1} = e^{-γh} I^k + h e^{-γh/2} (g^k + g^{k+1}) / 2`.
#[derive(Debug, Clone, Copy)]
pub struct DecayIntegral {
    gamma: f64,
    value: f64,
    last: f64,
}

impl DecayIntegral {
    pub fn new(gamma: f64, g0: f64) -> Self {
        DecayIntegral {
            gamma,
            value: 0.0,
            last: g0,
        }
    }

    pub fn step(&mut self, h: f64, g_next: f64) -> f64 {
        let decay = libm::exp(-self.gamma * h);
        self.value = decay * self.value + h * libm::exp(-0.5 * self.gamma * h) * 0.5 * (self.last + g_next);
        self.last = g_next;
        self.value
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// Direct evaluation of `|u(t_k)|² + e^{-γt_k} ‖φ‖² + ∫_0^{t_k} e^{-γ(t_k-σ)} ‖u‖² dσ`
/// at every sample, integrating the piecewise-linear interpolant of
/// `‖u‖²` exactly against the exponential weight. Independent of the
/// solver's recursion, used to cross-check it.
pub fn x_norm_direct(times: &[f64], u_h_sq: &[f64], u_v_sq: &[f64], phi_lv2: f64, gamma: f64) -> Vec<f64> {
    // ∫_a^b e^{-γ(t-σ)} (linear from ga to gb) dσ, exact
    let piece = |a: f64, b: f64, ga: f64, gb: f64, t: f64| -> f64 {
        let h = b - a;
        let x = gamma * h;
        let eb = libm::exp(-gamma * (t - b));
        if x < 1e-6 {
            let ea = libm::exp(-gamma * (t - a));
            return 0.5 * h * (ea * ga + eb * gb);
        }
        // ∫_0^1 e^{-x(1-v)} ((1-v) ga + v gb) dv = B ga + (A - B) gb
        let em = libm::exp(-x);
        let a_ = (1.0 - em) / x;
        let b_ = (1.0 - em - x * em) / (x * x);
        let (wa, wb) = (b_, a_ - b_);
        eb * h * (wa * ga + wb * gb)
    };
    let mut out = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let t = times[k];
        let mut integral = 0.0;
        for m in 0..k {
            integral += piece(times[m], times[m + 1], u_v_sq[m], u_v_sq[m + 1], t);
        }
        out.push(u_h_sq[k] + libm::exp(-gamma * t) * phi_lv2 + integral);
    }
    out
}

/// Outcome of comparing a run against the decay envelope.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvelopeReport {
    pub pass: bool,
    pub x0: f64,
    pub min_margin: f64,
    pub worst_t: f64,
    pub violations: usize,
    /// allowed negative margin, `tol_rel (K₂ + X₀)`
    pub tolerance: f64,
    /// largest `x_norm / envelope`, for judging how loose the constants are
    pub max_ratio: f64,
}

/// Checks `x_norm(t) ≤ K₁ X₀ e^{-γt} + K₂` up to `tol_rel (K₂ + X₀)`.
pub fn envelope_check(
    times: &[f64],
    x_norm: &[f64],
    constants: &EnvelopeConstants,
    x0: f64,
    tol_rel: f64,
) -> EnvelopeReport {
    let tolerance = tol_rel * (constants.k2 + x0);
    let mut report = EnvelopeReport {
        pass: true,
        x0,
        min_margin: f64::INFINITY,
        worst_t: 0.0,
        violations: 0,
        tolerance,
        max_ratio: 0.0,
    };
    for (t, x) in times.iter().zip(x_norm) {
        let env = constants.envelope(x0, *t);
        let margin = env - x;
        if margin < report.min_margin {
            report.min_margin = margin;
            report.worst_t = *t;
        }
        if env > 0.0 {
            report.max_ratio = report.max_ratio.max(x / env);
        }
        if !(margin >= -tolerance) {
            report.violations += 1;
        }
    }
    report.pass = report.violations == 0;
    report
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum AbsorbingStatus {
    /// first sample inside the ball, and whether the run stayed inside
    Entered { time: f64, persistent: bool },
    /// the run could not decide (zero radius, or horizon before `t*`)
    Inconclusive { reason: &'static str },
    /// the horizon passed `t*` and the ball was never reached
    Missed,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AbsorbingReport {
    pub status: AbsorbingStatus,
    /// `2K₂`
    pub radius_sq: f64,
    pub predicted: Option<f64>,
}

impl AbsorbingReport {
    /// Entered no later than `factor · t*` and stayed.
    pub fn on_time(&self, factor: f64) -> Option<bool> {
        match (&self.status, self.predicted) {
            (AbsorbingStatus::Entered { time, persistent }, Some(p)) => Some(*persistent && *time <= factor * p + 1e-12),
            (AbsorbingStatus::Missed, _) => Some(false),
            _ => None,
        }
    }
}

/// Locates the first entry into the ball `‖·‖²_X ≤ 2K₂`.
pub fn absorbing_entry(
    times: &[f64],
    x_norm: &[f64],
    constants: &EnvelopeConstants,
    x0: f64,
    tol: f64,
) -> AbsorbingReport {
    let radius_sq = 2.0 * constants.k2;
    let predicted = constants.predicted_entry(x0);
    if predicted.is_none() {
        return AbsorbingReport {
            status: AbsorbingStatus::Inconclusive {
                reason: "zero-radius ball",
            },
            radius_sq,
            predicted,
        };
    }
    let status = match x_norm.iter().position(|x| *x <= radius_sq) {
        Some(k) => AbsorbingStatus::Entered {
            time: times[k],
            persistent: x_norm[k..].iter().all(|x| *x <= radius_sq * (1.0 + tol)),
        },
        None => {
            let horizon = times.last().copied().unwrap_or(0.0);
            if predicted.is_some_and(|p| horizon < p) {
                AbsorbingStatus::Inconclusive {
                    reason: "horizon ends before the predicted entry time",
                }
            } else {
                AbsorbingStatus::Missed
            }
        }
    };
    AbsorbingReport {
        status,
        radius_sq,
        predicted,
    }
}

/// Separation of two runs in the past-history norm.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeparationReport {
    pub times: Vec<f64>,
    /// `‖u_t^A - u_t^B‖²_{L_V²}`
    pub series: Vec<f64>,
    /// `K₅ e^{-γt} S₀`
    pub bound: Vec<f64>,
    /// `|u₀^A - u₀^B|² + ‖φ^A - φ^B‖²_{L_V²}`
    pub initial: f64,
    pub violations: usize,
    pub max_ratio: f64,
    /// least-squares decay rate of `ln series` over the second half
    pub fitted_rate: Option<f64>,
    pub gamma: f64,
}

impl SeparationReport {
    pub fn bound_holds(&self) -> bool {
        self.violations == 0
    }

    /// Fitted rate at least `fraction · γ` (vacuous when the runs coincide).
    pub fn rate_at_least(&self, fraction: f64) -> bool {
        self.fitted_rate.is_none_or(|r| r >= fraction * self.gamma)
    }
}

/// Separation series and its pointwise check against `K₅ e^{-γt} S₀ (1 + tol)`.
pub fn separation_decay(
    a: &RunOutput,
    b: &RunOutput,
    phi_a: &PastTrajectory,
    phi_b: &PastTrajectory,
    cfg: &ProblemConfig,
    tol: f64,
) -> Result<SeparationReport> {
    let ta = &a.trajectory;
    let tb = &b.trajectory;
    if ta.n_modes() != tb.n_modes() || ta.times() != tb.times() || ta.n_modes() != cfg.basis.n_modes() {
        return Err(Error::structure("separation needs two runs of the same configuration"));
    }
    let basis = &cfg.basis;
    let gamma = cfg.gamma;
    let diff_v = |k: usize| -> f64 {
        ta.state(k)
            .iter()
            .zip(tb.state(k))
            .zip(basis.eigenvalues())
            .map(|((x, y), l)| l * (x - y) * (x - y))
            .sum()
    };
    let du0: f64 = ta.state(0).iter().zip(tb.state(0)).map(|(x, y)| (x - y) * (x - y)).sum();
    let dphi = lv2_distance(phi_a, phi_b, basis, gamma)?;
    let initial = du0 + dphi;
    let times = ta.times().to_vec();
    let mut series = Vec::with_capacity(times.len());
    let mut bound = Vec::with_capacity(times.len());
    let mut acc = DecayIntegral::new(gamma, diff_v(0));
    let k5 = cfg.constants.k5;
    let (mut violations, mut max_ratio) = (0, 0.0f64);
    for (k, t) in times.iter().enumerate() {
        if k > 0 {
            acc.step(t - times[k - 1], diff_v(k));
        }
        let value = libm::exp(-gamma * t) * dphi + acc.value();
        let b = k5 * libm::exp(-gamma * t) * initial;
        if b.is_finite() {
            if value > b * (1.0 + tol) {
                violations += 1;
            }
            if b > 0.0 {
                max_ratio = max_ratio.max(value / b);
            }
        }
        series.push(value);
        bound.push(b);
    }
    let fitted_rate = fit_decay_rate(&times, &series);
    Ok(SeparationReport {
        times,
        series,
        bound,
        initial,
        violations,
        max_ratio,
        fitted_rate,
        gamma,
    })
}

/// `-slope` of the least-squares line through `(t, ln y)` over the second
/// half of the horizon, skipping non-positive values.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Option<f64> {
    let horizon = *times.last()?;
    let start = times[0] + 0.5 * (horizon - times[0]);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, y)| **t >= start && **y > 0.0)
        .map(|(t, y)| (*t, libm::log(*y)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

/// Ranges of one trajectory after the transient.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryRange {
    pub u_h: (f64, f64),
    pub u_v: (f64, f64),
    pub energy: (f64, f64),
}

/// Terminal states grouped by proximity.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Cluster {
    pub center: Vec<f64>,
    pub members: Vec<usize>,
    /// largest member distance from the center
    pub spread: f64,
}

/// Empirical description of where an ensemble settles.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeReport {
    pub ranges: Vec<TrajectoryRange>,
    /// coordinate-wise bounding box of all post-transient states
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    /// Euclidean diagonal of the box
    pub diameter: f64,
    pub max_terminal_distance: f64,
    pub clusters: Vec<Cluster>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Statistics over runs that share a configuration. Terminal states closer
/// than `cluster_radius` to an existing cluster's first member join it.
pub fn attractor_statistics(outputs: &[RunOutput], t_transient: f64, cluster_radius: f64) -> Result<ProbeReport> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::param("run.ensemble", "attractor probe needs at least one trajectory"))?;
    let n = first.trajectory.n_modes();
    let mut box_lo = vec![f64::INFINITY; n];
    let mut box_hi = vec![f64::NEG_INFINITY; n];
    let mut ranges = Vec::with_capacity(outputs.len());
    let mut terminals: Vec<&[f64]> = Vec::with_capacity(outputs.len());
    for out in outputs {
        let traj = &out.trajectory;
        if traj.n_modes() != n {
            return Err(Error::structure("attractor probe runs have different mode counts"));
        }
        let mut range = TrajectoryRange {
            u_h: (f64::INFINITY, f64::NEG_INFINITY),
            u_v: (f64::INFINITY, f64::NEG_INFINITY),
            energy: (f64::INFINITY, f64::NEG_INFINITY),
        };
        for (k, rec) in out.records.iter().enumerate() {
            if rec.t < t_transient {
                continue;
            }
            for (j, b) in traj.state(k).iter().enumerate() {
                box_lo[j] = box_lo[j].min(*b);
                box_hi[j] = box_hi[j].max(*b);
            }
            let widen = |r: &mut (f64, f64), v: f64| {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            };
            widen(&mut range.u_h, rec.u_h);
            widen(&mut range.u_v, rec.u_v);
            widen(&mut range.energy, rec.energy);
        }
        ranges.push(range);
        terminals.push(traj.state(traj.len() - 1));
    }
    let diameter = libm::sqrt(
        box_lo
            .iter()
            .zip(&box_hi)
            .filter(|(lo, hi)| hi >= lo)
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum(),
    );
    let mut max_terminal_distance: f64 = 0.0;
    for i in 0..terminals.len() {
        for j in i + 1..terminals.len() {
            max_terminal_distance = max_terminal_distance.max(distance(terminals[i], terminals[j]));
        }
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    for (idx, term) in terminals.iter().enumerate() {
        match clusters.iter_mut().find(|c| distance(&c.center, term) <= cluster_radius) {
            Some(c) => c.members.push(idx),
            None => clusters.push(Cluster {
                center: term.to_vec(),
                members: vec![idx],
                spread: 0.0,
            }),
        }
    }
    for c in clusters.iter_mut() {
        let mut mean = vec![0.0; n];
        for &m in &c.members {
            for (acc, b) in mean.iter_mut().zip(terminals[m]) {
                *acc += b / c.members.len() as f64;
            }
        }
        c.spread = c.members.iter().map(|&m| distance(&mean, terminals[m])).fold(0.0, f64::max);
        c.center = mean;
    }
    Ok(ProbeReport {
        ranges,
        box_lo,
        box_hi,
        diameter,
        max_terminal_distance,
        clusters,
    })
}

/// Runs every ensemble member over `[0, t_transient + t_sample]` and
/// summarizes the post-transient states. Clusters use radius
/// `1e-3 · max(1, largest terminal norm)`.
pub fn attractor_probe(
    cfg: &ProblemConfig,
    ensemble: &[(SpectralField, PastTrajectory)],
    t_transient: f64,
    t_sample: f64,
) -> Result<ProbeReport> {
    if ensemble.is_empty() {
        return Err(Error::param("run.ensemble", "attractor probe needs at least one trajectory"));
    }
    let mut run_cfg = cfg.clone();
    run_cfg.horizon = t_transient + t_sample;
    let mut outputs = Vec::with_capacity(ensemble.len());
    for (u0, phi) in ensemble {
        outputs.push(solve(&run_cfg, u0, phi).map_err(|e| e.error)?);
    }
    let scale = outputs
        .iter()
        .map(|o| libm::sqrt(o.final_state.u.norm_h_sq()))
        .fold(1.0, f64::max);
    attractor_statistics(&outputs, t_transient, 1e-3 * scale)
}

/// Stationary point of the Galerkin system reached by damped pseudo-time
/// iteration from `guess`.
///
/// At rest the history is `η(s) = s u`, so the memory force is
/// `-λ_j b_j Σ_i ω_i s_i`. Each sweep treats the linear part implicitly
/// with pseudo-time `τ = 0.5 / (1 + max |f'(u)|)` on the grid:
/// `b ← (b + τ(g - P f(b))) / (1 + τ λ_j (a(l(b)) + M₁))`. The iteration
/// converges to stable equilibria only.
pub fn damped_steady_state(cfg: &ProblemConfig, guess: &SpectralField, tol: f64, max_iter: usize) -> Result<SpectralField> {
    let basis = &cfg.basis;
    let moment = cfg.rule.first_moment();
    let mut b = guess.clone();
    for _ in 0..max_iter {
        let a = nonlocal_value(&b, &cfg.a);
        let nl = nonlinear_galerkin(&b, &cfg.f, basis)?;
        let residual: f64 = libm::sqrt(
            b.coeffs
                .iter()
                .zip(basis.eigenvalues())
                .zip(&nl.coeffs)
                .zip(&cfg.forcing.coeffs)
                .map(|(((bj, l), n), g)| {
                    let r = -l * (a + moment) * bj - n + g;
                    r * r
                })
                .sum(),
        );
        if !residual.is_finite() {
            return Err(Error::Convergence {
                what: "damped steady-state iteration",
                detail: format!("residual became {residual}"),
            });
        }
        if residual <= tol {
            return Ok(b);
        }
        let stiff = basis
            .to_nodal(&b)
            .iter()
            .map(|u| cfg.f.derivative(*u).abs())
            .fold(0.0, f64::max);
        let tau = 0.5 / (1.0 + stiff);
        for (((bj, l), n), g) in b.coeffs.iter_mut().zip(basis.eigenvalues()).zip(&nl.coeffs).zip(&cfg.forcing.coeffs) {
            *bj = (*bj + tau * (g - n)) / (1.0 + tau * l * (a + moment));
        }
    }
    Err(Error::Convergence {
        what: "damped steady-state iteration",
        detail: format!("no convergence to {tol:e} in {max_iter} sweeps"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_examples() {
        let c = envelope_constants(1.0, 5.0422, 1.0, 0.5, 1.0).unwrap();
        assert!((c.k1 - 16.1266).abs() < 1e-12);
        assert!((c.k2 - 6.0).abs() < 1e-12);
        assert!((c.k5 - 3.25).abs() < 1e-12);
        let c = envelope_constants(1.0, 5.0, 0.0, 0.5, 1.0).unwrap();
        assert_eq!(c.k2, 0.0);
        assert!(envelope_constants(1.0, 5.0, 1.0, 1.0, 1.0).is_err());
        assert!(envelope_constants(0.0, 5.0, 1.0, 0.5, 1.0).is_err());
        let c = envelope_constants(2.0, 0.0, 1.0, 0.5, f64::INFINITY).unwrap();
        assert!(c.k5.is_infinite());
        assert_eq!(c.k1, 3.0);
    }

    #[test]
    fn decay_integral_matches_closed_form() {
        // g(σ) = e^{-2σ}, γ = 0.5: I(t) = (e^{-γt} - e^{-2t}) / (2 - γ)
        let (gamma, h) = (0.5, 1e-3);
        let mut acc = DecayIntegral::new(gamma, 1.0);
        let mut t = 0.0;
        for _ in 0..2000 {
            t += h;
            acc.step(h, libm::exp(-2.0 * t));
        }
        let expect = (libm::exp(-gamma * t) - libm::exp(-2.0 * t)) / (2.0 - gamma);
        assert!((acc.value() - expect).abs() < 1e-6 * expect);
    }

    #[test]
    fn direct_x_norm_matches_closed_form() {
        let gamma = 0.5;
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 2e-3).collect();
        let hsq: Vec<f64> = times.iter().map(|t| libm::exp(-2.0 * t)).collect();
        let vsq: Vec<f64> = times.iter().map(|t| libm::exp(-2.0 * t)).collect();
        let x = x_norm_direct(&times, &hsq, &vsq, 0.0, gamma);
        let t = times[1000];
        let expect = libm::exp(-2.0 * t) + (libm::exp(-gamma * t) - libm::exp(-2.0 * t)) / (2.0 - gamma);
        // linear interpolation of e^{-2σ} on h = 2e-3 costs about h²/3 relative
        assert!((x[1000] - expect).abs() < 1e-5 * expect, "{} vs {expect}", x[1000]);
        assert_eq!(x[0], 1.0);
    }

    #[test]
    fn envelope_and_ball_examples() {
        let c = envelope_constants(1.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let zeros = vec![0.0; times.len()];
        let rep = envelope_check(&times, &zeros, &c, 0.0, 1e-3);
        assert!(rep.pass);
        assert!((rep.min_margin - c.k2).abs() < 1e-12);
        let ball = absorbing_entry(&times, &zeros, &c, 0.0, 1e-3);
        assert_eq!(ball.status, AbsorbingStatus::Entered { time: 0.0, persistent: true });

        let c0 = envelope_constants(1.0, 1.0, 0.0, 0.5, 1.0).unwrap();
        let ball = absorbing_entry(&times, &zeros, &c0, 1.0, 1e-3);
        assert!(matches!(ball.status, AbsorbingStatus::Inconclusive { .. }));

        let big = vec![1e9; times.len()];
        let rep = envelope_check(&times, &big, &c, 1.0, 1e-3);
        assert!(!rep.pass);
        assert_eq!(rep.violations, times.len());
    }

    #[test]
    fn rate_fit_recovers_exponent() {
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let ys: Vec<f64> = times.iter().map(|t| 3.0 * libm::exp(-0.7 * t)).collect();
        assert!((fit_decay_rate(&times, &ys).unwrap() - 0.7).abs() < 1e-12);
        assert!(fit_decay_rate(&times, &vec![0.0; 200]).is_none());
    }
}
