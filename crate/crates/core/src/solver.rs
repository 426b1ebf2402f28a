//! Time integration of the Galerkin system
//!
//! ```text
//! db_j/dt = -λ_j a(l(u)) b_j + F_j(η) - [P_n f(u)]_j + ĝ_j,
//! ∂_t η = u - ∂_s η,   η(0) = 0,
//! ```
//!
//! plus a reference integrator for the original convolution form that never
//! builds `η` at all.

use crate::diagnostics::{dissipation_k0, envelope_constants, DecayIntegral, DiagnosticsRecord, EnvelopeConstants};
use crate::error::{Error, Result};
use crate::history::{
    advance, direct_memory, history_norm_mu, lift, lv2_norm, memory_force, HistoryField, HistoryTape, PastTrajectory,
    SampledPast, TapePoint,
};
use crate::kernel::{
    build_quadrature_with, default_s_max, gamma_select, k_mu_bound, KernelFamily, MemoryKernel, QuadratureOptions,
    WeightedQuadrature,
};
use crate::spectral::{
    check_dealiasing, nonlinear_galerkin, nonlocal_value, Nonlinearity, NonlocalCoefficient, SpatialBasis,
    SpectralField,
};
use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Scheme {
    /// linearly implicit Euler: diffusion implicit with `a` frozen per step
    Imex,
    /// classical explicit Runge–Kutta, for validation
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum HistoryTransport {
    /// `η^t(s_i) = U(t) - U(t - s_i)` from the running integral of `u`
    Characteristic,
    /// shift the previous field by monotone cubic interpolation
    Interpolated,
}

/// How `γ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaChoice {
    /// `γ = safety · min(m λ₁, δ)`
    Safety(f64),
    Fixed(f64),
}

/// Everything needed to assemble a [`ProblemConfig`]; fields left at their
/// defaults are filled by [`ProblemSetup::build`].
#[derive(Debug, Clone)]
pub struct ProblemSetup {
    pub basis: SpatialBasis,
    pub kernel: Option<MemoryKernel>,
    pub n_nodes: usize,
    pub s_max: Option<f64>,
    pub points_per_cell: Option<usize>,
    pub f: Nonlinearity,
    pub a: NonlocalCoefficient,
    pub forcing: Option<SpectralField>,
    pub gamma: GammaChoice,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub transport: HistoryTransport,
    pub k1_override: Option<f64>,
    pub k2_override: Option<f64>,
}

impl ProblemSetup {
    pub fn new(basis: SpatialBasis, f: Nonlinearity, a: NonlocalCoefficient) -> Self {
        ProblemSetup {
            basis,
            kernel: None,
            n_nodes: 64,
            s_max: None,
            points_per_cell: None,
            f,
            a,
            forcing: None,
            gamma: GammaChoice::Safety(0.5),
            dt: 1e-3,
            horizon: 1.0,
            scheme: Scheme::Imex,
            transport: HistoryTransport::Characteristic,
            k1_override: None,
            k2_override: None,
        }
    }

    pub fn build(self) -> Result<ProblemConfig> {
        let n = self.basis.n_modes();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("time.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::param("time.horizon", format!("must be non-negative, got {}", self.horizon)));
        }
        check_dealiasing(&self.basis, &self.f)?;
        let forcing = self.forcing.unwrap_or_else(|| SpectralField::zeros(n));
        if forcing.len() != n || !forcing.is_finite() {
            return Err(Error::param("g.forcing", format!("need {n} finite modal coefficients")));
        }
        if self.a.l_weight().len() != n {
            return Err(Error::param("l.weight", format!("need {n} modal coefficients")));
        }
        if self.transport == HistoryTransport::Interpolated && self.scheme == Scheme::Rk4 {
            return Err(Error::param("time.transport", "interpolated transport is only available with the imex scheme"));
        }
        let rule = match &self.kernel {
            Some(k) => {
                let mut opts = QuadratureOptions::new(self.n_nodes, self.s_max.unwrap_or_else(|| default_s_max(k)));
                opts.points_per_cell = self.points_per_cell;
                build_quadrature_with(k, opts)?
            }
            None => WeightedQuadrature::empty(),
        };
        let delta = self.kernel.as_ref().map_or(f64::INFINITY, |k| k.delta());
        let m = self.a.lower();
        let lambda1 = self.basis.lambda1();
        let gamma = match self.gamma {
            GammaChoice::Safety(s) => gamma_select(m, lambda1, delta, s)?,
            GammaChoice::Fixed(g) => {
                if !(g > 0.0 && g <= m * lambda1 && g < delta) {
                    return Err(Error::param(
                        "kernel.gamma",
                        format!("need 0 < gamma <= m lambda1 = {} and gamma < delta = {delta}, got {g}", m * lambda1),
                    ));
                }
                g
            }
        };
        let k_mu = match &self.kernel {
            Some(k) => k_mu_bound(k, gamma, delta)?,
            None => 0.0,
        };
        let k0 = dissipation_k0(self.f.constants().a0, self.basis.length(), m, lambda1, forcing.norm_h_sq());
        let mut constants = envelope_constants(m, k_mu, k0, gamma, delta)?;
        if let Some(k1) = self.k1_override {
            constants.k1 = k1;
        }
        if let Some(k2) = self.k2_override {
            constants.k2 = k2;
        }
        Ok(ProblemConfig {
            basis: self.basis,
            kernel: self.kernel,
            rule: Arc::new(rule),
            f: self.f,
            a: self.a,
            forcing,
            gamma,
            dt: self.dt,
            horizon: self.horizon,
            scheme: self.scheme,
            transport: self.transport,
            constants,
        })
    }
}

/// A validated problem: discretization, data and derived constants.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub basis: SpatialBasis,
    pub kernel: Option<MemoryKernel>,
    pub rule: Arc<WeightedQuadrature>,
    pub f: Nonlinearity,
    pub a: NonlocalCoefficient,
    pub forcing: SpectralField,
    pub gamma: f64,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub transport: HistoryTransport,
    pub constants: EnvelopeConstants,
}

impl ProblemConfig {
    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    pub fn kernel_family(&self) -> Option<KernelFamily> {
        self.kernel.as_ref().map(|k| k.family())
    }

    /// Relative accuracy of the history rule (zero without memory).
    pub fn quadrature_tolerance(&self) -> f64 {
        if self.rule.is_empty() {
            0.0
        } else {
            self.rule.tolerance
        }
    }

    /// Step sizes covering `[0, horizon]`: uniform `dt`, with a shorter
    /// final step when the horizon is not a multiple of `dt`.
    pub fn step_times(&self) -> Vec<f64> {
        let n = libm::ceil(self.horizon / self.dt - 1e-9).max(0.0) as usize;
        let mut times: Vec<f64> = (0..=n).map(|k| (k as f64 * self.dt).min(self.horizon)).collect();
        if n > 0 {
            times[n] = self.horizon;
        }
        times.dedup();
        times
    }
}

/// `z = (u, η)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub u: SpectralField,
    pub eta: HistoryField,
}

/// Modal coefficients at every accepted step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    n_modes: usize,
    times: Vec<f64>,
    coeffs: Vec<f64>,
    /// `∫_{t_k}^{t_{k+1}} b_j`, one row per step
    increments: Vec<f64>,
}

impl Trajectory {
    pub fn new(n_modes: usize) -> Self {
        Trajectory {
            n_modes,
            ..Default::default()
        }
    }

    fn push(&mut self, t: f64, b: &[f64]) {
        self.times.push(t);
        self.coeffs.extend_from_slice(b);
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.coeffs[k * self.n_modes..(k + 1) * self.n_modes]
    }

    pub fn field(&self, k: usize) -> SpectralField {
        SpectralField::from_coeffs(self.state(k).to_vec())
    }

    pub fn last_field(&self) -> SpectralField {
        self.field(self.len() - 1)
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// The stored run as a past trajectory ending at its last time, with
    /// `phi` behind it: `u_T(r) = u(T + r)`.
    pub fn as_past(&self, phi: &PastTrajectory) -> Result<PastTrajectory> {
        let end = *self
            .times
            .last()
            .ok_or_else(|| Error::structure("cannot restart from an empty trajectory"))?;
        if self.times.len() < 2 {
            return Ok(phi.clone());
        }
        let times: Vec<f64> = self.times.iter().map(|t| t - end).collect();
        let recent = SampledPast::new(times, self.coeffs.clone(), self.n_modes)?;
        Ok(PastTrajectory::splice(recent, phi.clone()))
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub final_state: SystemState,
    pub records: Vec<DiagnosticsRecord>,
    pub constants: EnvelopeConstants,
    /// `‖(u₀, φ)‖²_X`
    pub x0: f64,
}

impl RunOutput {
    pub fn x_norm_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.x_norm).collect()
    }

    pub fn dissipation_violations(&self) -> usize {
        self.records.iter().filter(|r| r.dissipation_violated()).count()
    }
}

/// A failed run: the cause, plus the last finite state when there is one.
#[derive(Debug, Clone)]
pub struct SolveError {
    pub error: Error,
    pub last_state: Option<Box<SystemState>>,
}

impl From<Error> for SolveError {
    fn from(error: Error) -> Self {
        SolveError { error, last_state: None }
    }
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.error)?;
        if let Some(s) = &self.last_state {
            write!(f, " (last finite state at t = {})", s.t)?;
        }
        Ok(())
    }
}

impl core::error::Error for SolveError {}

/// `db/dt` for a given state.
pub fn rhs(state: &SystemState, cfg: &ProblemConfig) -> Result<SpectralField> {
    let force = if cfg.rule.is_empty() {
        SpectralField::zeros(cfg.n_modes())
    } else {
        memory_force(&state.eta, &cfg.basis)?
    };
    let nl = nonlinear_galerkin(&state.u, &cfg.f, &cfg.basis)?;
    Ok(assemble_rhs(&state.u, &force, &nl, cfg))
}

fn assemble_rhs(u: &SpectralField, force: &SpectralField, nl: &SpectralField, cfg: &ProblemConfig) -> SpectralField {
    let a = nonlocal_value(u, &cfg.a);
    let coeffs = u
        .coeffs
        .iter()
        .zip(cfg.basis.eigenvalues())
        .zip(&force.coeffs)
        .zip(&nl.coeffs)
        .zip(&cfg.forcing.coeffs)
        .map(|((((b, l), fm), n), g)| -l * a * b + fm - n + g)
        .collect();
    SpectralField { coeffs }
}

/// One linearly implicit Euler step of the modal equation with the history
/// moved by [`advance`] (the interpolating transport).
pub fn step_imex(state: &SystemState, cfg: &ProblemConfig) -> Result<SystemState> {
    step_imex_sized(state, cfg, cfg.dt)
}

fn imex_update(b: &SpectralField, force: &SpectralField, nl: &SpectralField, cfg: &ProblemConfig, h: f64) -> SpectralField {
    let a = nonlocal_value(b, &cfg.a);
    let coeffs = b
        .coeffs
        .iter()
        .zip(cfg.basis.eigenvalues())
        .zip(&force.coeffs)
        .zip(&nl.coeffs)
        .zip(&cfg.forcing.coeffs)
        .map(|((((b, l), fm), n), g)| (b + h * (fm - n + g)) / (1.0 + h * l * a))
        .collect();
    SpectralField { coeffs }
}

fn step_imex_sized(state: &SystemState, cfg: &ProblemConfig, h: f64) -> Result<SystemState> {
    let force = if cfg.rule.is_empty() {
        SpectralField::zeros(cfg.n_modes())
    } else {
        memory_force(&state.eta, &cfg.basis)?
    };
    let nl = nonlinear_galerkin(&state.u, &cfg.f, &cfg.basis)?;
    let next = imex_update(&state.u, &force, &nl, cfg, h);
    let eta = if cfg.rule.is_empty() {
        state.eta.clone()
    } else {
        let inc = SpectralField::from_coeffs(
            state.u.coeffs.iter().zip(&next.coeffs).map(|(x, y)| 0.5 * h * (x + y)).collect(),
        );
        advance(&state.eta, &inc, h, &next)?
    };
    Ok(SystemState {
        t: state.t + h,
        u: next,
        eta,
    })
}

/// Per-step quantities that both the stepper and the diagnostics need.
struct Snapshot {
    force: SpectralField,
    nl: SpectralField,
    energy: f64,
    eta_sq: f64,
    u_v_sq: f64,
    coupling: f64,
}

struct Engine<'a> {
    cfg: &'a ProblemConfig,
    phi: &'a PastTrajectory,
    tape: HistoryTape,
    cumulative: Vec<f64>,
    state: SystemState,
}

impl<'a> Engine<'a> {
    fn snapshot(&self, u: &SpectralField, eta: &HistoryField) -> Result<Snapshot> {
        let cfg = self.cfg;
        let force = if cfg.rule.is_empty() {
            SpectralField::zeros(cfg.n_modes())
        } else {
            memory_force(eta, &cfg.basis)?
        };
        let nl = nonlinear_galerkin(u, &cfg.f, &cfg.basis)?;
        let eta_sq = if cfg.rule.is_empty() { 0.0 } else { history_norm_mu(eta, &cfg.basis) };
        Ok(Snapshot {
            coupling: force.dot(u),
            energy: u.norm_h_sq() + eta_sq,
            u_v_sq: u.norm_v_sq(&cfg.basis),
            eta_sq,
            force,
            nl,
        })
    }

    /// Rebuilds `η` at the provisional point `(τ, Y, b)` from the tape.
    fn history_at(&self, t: f64, cumulative: &[f64], slope: &[f64]) -> HistoryField {
        let mut eta = HistoryField::zeros(self.cfg.n_modes(), self.cfg.rule.clone());
        if !self.cfg.rule.is_empty() {
            let now = TapePoint { t, cumulative, slope };
            self.tape.fill(self.phi, now, &mut eta);
        }
        eta
    }

    fn step(&mut self, h: f64, snap: &Snapshot) -> Result<()> {
        let cfg = self.cfg;
        let b = &self.state.u;
        let t = self.state.t;
        match (cfg.scheme, cfg.transport) {
            (Scheme::Imex, HistoryTransport::Interpolated) => {
                let next = step_imex_sized(&self.state, cfg, h)?;
                for (y, (x0, x1)) in self.cumulative.iter_mut().zip(b.coeffs.iter().zip(&next.u.coeffs)) {
                    *y += 0.5 * h * (x0 + x1);
                }
                self.state = next;
            }
            (Scheme::Imex, HistoryTransport::Characteristic) => {
                let next = imex_update(b, &snap.force, &snap.nl, cfg, h);
                let cum: Vec<f64> = self
                    .cumulative
                    .iter()
                    .zip(b.coeffs.iter().zip(&next.coeffs))
                    .map(|(y, (x0, x1))| y + 0.5 * h * (x0 + x1))
                    .collect();
                self.tape.push(t + h, &cum, &next.coeffs)?;
                let eta = self.history_at(t + h, &cum, &next.coeffs);
                self.cumulative = cum;
                self.state = SystemState { t: t + h, u: next, eta };
            }
            (Scheme::Rk4, _) => {
                let k1 = assemble_rhs(b, &snap.force, &snap.nl, cfg);
                let stage = |eng: &Engine<'_>, tau: f64, bs: &SpectralField, ys: &[f64]| -> Result<SpectralField> {
                    let eta = eng.history_at(tau, ys, &bs.coeffs);
                    rhs(&SystemState { t: tau, u: bs.clone(), eta }, cfg)
                };
                let axpy = |x: &SpectralField, c: f64, d: &SpectralField| SpectralField {
                    coeffs: x.coeffs.iter().zip(&d.coeffs).map(|(x, d)| x + c * d).collect(),
                };
                let y_axpy =
                    |c: f64, d: &SpectralField| -> Vec<f64> { self.cumulative.iter().zip(&d.coeffs).map(|(y, d)| y + c * d).collect() };
                let b2 = axpy(b, 0.5 * h, &k1);
                let y2 = y_axpy(0.5 * h, b);
                let k2 = stage(self, t + 0.5 * h, &b2, &y2)?;
                let b3 = axpy(b, 0.5 * h, &k2);
                let y3 = y_axpy(0.5 * h, &b2);
                let k3 = stage(self, t + 0.5 * h, &b3, &y3)?;
                let b4 = axpy(b, h, &k3);
                let y4 = y_axpy(h, &b3);
                let k4 = stage(self, t + h, &b4, &y4)?;
                let next = SpectralField {
                    coeffs: (0..b.len())
                        .map(|j| {
                            b.coeffs[j] + h / 6.0 * (k1.coeffs[j] + 2.0 * k2.coeffs[j] + 2.0 * k3.coeffs[j] + k4.coeffs[j])
                        })
                        .collect(),
                };
                let cum: Vec<f64> = (0..b.len())
                    .map(|j| {
                        self.cumulative[j]
                            + h / 6.0 * (b.coeffs[j] + 2.0 * b2.coeffs[j] + 2.0 * b3.coeffs[j] + b4.coeffs[j])
                    })
                    .collect();
                self.tape.push(t + h, &cum, &next.coeffs)?;
                let eta = self.history_at(t + h, &cum, &next.coeffs);
                self.cumulative = cum;
                self.state = SystemState { t: t + h, u: next, eta };
            }
        }
        Ok(())
    }
}

fn diff_norm(a: &SpectralField, b: &SpectralField) -> f64 {
    libm::sqrt(a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Integrates from `(u₀, φ)` to the configured horizon.
///
/// Every step emits a [`DiagnosticsRecord`]. The dissipation residual
/// `R_k = (E^{k+1} - E^k)/h + γE^{k+1} + (m/2)‖u^{k+1}‖² + f₀|u^{k+1}|^{2p}_{2p} - K₀`
/// is paired with the allowance
/// `2|b^{k+1}|(|ΔF| + |ΔN|) + 2|Δ(F·b)| + γ|Δ‖η‖²_μ| + 10 tol_q (E^{k+1} + K₀)`.
/// The first two terms are what the explicit treatment of the memory force
/// and nonlinearity costs against the continuous estimate. The next two
/// bound the replacement of step averages by end-of-step values. The last
/// covers the history quadrature.
pub fn solve(cfg: &ProblemConfig, u0: &SpectralField, phi: &PastTrajectory) -> core::result::Result<RunOutput, SolveError> {
    let n = cfg.n_modes();
    if u0.len() != n || !u0.is_finite() {
        return Err(Error::param("initial.u0", format!("need {n} finite modal coefficients")).into());
    }
    let eta0 = lift(phi, &cfg.rule, &cfg.basis, cfg.gamma)?;
    let phi_lv2 = lv2_norm(phi, &cfg.basis, cfg.gamma);
    let consts = cfg.constants;
    let m = cfg.a.lower();
    let f0 = cfg.f.constants().f0;
    let p2 = 2 * cfg.f.p() as i32;
    let tol_q = cfg.quadrature_tolerance();
    let basis = &cfg.basis;

    let mut engine = Engine {
        cfg,
        phi,
        tape: HistoryTape::new(u0),
        cumulative: vec![0.0; n],
        state: SystemState {
            t: 0.0,
            u: u0.clone(),
            eta: eta0,
        },
    };
    let mut snap = engine.snapshot(&engine.state.u, &engine.state.eta)?;
    let x0 = u0.norm_h_sq() + phi_lv2;
    let mut integral = DecayIntegral::new(cfg.gamma, snap.u_v_sq);
    let mut trajectory = Trajectory::new(n);
    trajectory.push(0.0, &u0.coeffs);
    let record = |t: f64, u: &SpectralField, s: &Snapshot, lv2: f64, residual: f64, allowance: f64| {
        let x_norm = u.norm_h_sq() + lv2;
        DiagnosticsRecord {
            t,
            energy: s.energy,
            x_norm,
            u_h: libm::sqrt(u.norm_h_sq()),
            u_v: libm::sqrt(s.u_v_sq),
            eta_mu: libm::sqrt(s.eta_sq),
            lv2,
            dissipation_residual: residual,
            dissipation_allowance: allowance,
            envelope_margin: consts.envelope(x0, t) - x_norm,
            memory_force: s.force.coeffs.iter().map(|f| f.abs()).collect(),
        }
    };
    let mut records = vec![record(0.0, u0, &snap, phi_lv2, 0.0, 0.0)];

    let times = cfg.step_times();
    for (k, w) in times.windows(2).enumerate() {
        let h = w[1] - w[0];
        let before = engine.state.clone();
        engine.step(h, &snap)?;
        let u = &engine.state.u;
        let fail = |reason: String| SolveError {
            error: Error::Divergence {
                step: k + 1,
                t: w[1],
                reason,
            },
            last_state: Some(Box::new(before.clone())),
        };
        if !u.is_finite() || !engine.state.eta.is_finite() {
            return Err(fail(format!("non-finite state; try a time step below {h:e}")));
        }
        let next = engine.snapshot(u, &engine.state.eta)?;
        if next.energy > 1e6 * snap.energy && next.energy > 1.0 {
            return Err(fail(format!(
                "energy grew from {:e} to {:e} in one step; try a time step below {h:e}",
                snap.energy, next.energy
            )));
        }
        let lp = if f0 > 0.0 { basis.lp_norm_pow(u, p2) } else { 0.0 };
        let residual =
            (next.energy - snap.energy) / h + cfg.gamma * next.energy + 0.5 * m * next.u_v_sq + f0 * lp - consts.k0;
        let allowance = 2.0 * libm::sqrt(u.norm_h_sq()) * (diff_norm(&next.force, &snap.force) + diff_norm(&next.nl, &snap.nl))
            + 2.0 * (next.coupling - snap.coupling).abs()
            + cfg.gamma * (next.eta_sq - snap.eta_sq).abs()
            + 10.0 * tol_q * (next.energy + consts.k0);
        integral.step(h, next.u_v_sq);
        let lv2 = libm::exp(-cfg.gamma * w[1]) * phi_lv2 + integral.value();
        records.push(record(w[1], u, &next, lv2, residual, allowance));
        trajectory.push(w[1], &u.coeffs);
        trajectory
            .increments
            .extend(before.u.coeffs.iter().zip(&u.coeffs).map(|(x, y)| 0.5 * h * (x + y)));
        snap = next;
    }
    Ok(RunOutput {
        trajectory,
        final_state: engine.state,
        records,
        constants: consts,
        x0,
    })
}

/// Hard cap on stored steps for [`solve_reference`], which keeps the whole
/// run and costs `O(steps²)`.
pub const MAX_REFERENCE_STEPS: usize = 200_000;

/// Integrates the original convolution form
/// `db_j/dt = -λ_j a b_j - λ_j ∫_{-∞}^t k(t-r) b_j(r) dr - [P f]_j + ĝ_j`
/// with Heun's method. The stored part of the convolution uses the
/// trapezoid rule on the step grid; the part from the past trajectory is in
/// closed form for an exponential kernel against an exponential mix and by
/// adaptive quadrature otherwise.
pub fn solve_reference(cfg: &ProblemConfig, u0: &SpectralField, phi: &PastTrajectory) -> Result<Trajectory> {
    let n = cfg.n_modes();
    if u0.len() != n {
        return Err(Error::param("initial.u0", format!("need {n} modal coefficients")));
    }
    phi.validate(n, cfg.gamma)?;
    let steps = libm::ceil(cfg.horizon / cfg.dt - 1e-9).max(0.0) as usize;
    if steps > MAX_REFERENCE_STEPS {
        return Err(Error::param(
            "time.dt",
            format!("reference run needs {steps} stored steps, the limit is {MAX_REFERENCE_STEPS}"),
        ));
    }
    let h = if steps == 0 { 0.0 } else { cfg.horizon / steps as f64 };
    let lambdas = cfg.basis.eigenvalues();
    let kernel = cfg.kernel.as_ref();
    let kvals: Vec<f64> = match kernel {
        Some(k) => (0..=steps + 1).map(|m| k.k(m as f64 * h)).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    // past contribution ∫_0^∞ k(t + s) φ̂_j(-s) ds at every grid time
    let tail: Vec<f64> = match kernel {
        None => Vec::new(),
        Some(k) => {
            let mut out = vec![0.0; (steps + 1) * n];
            for step in 0..=steps {
                let t = step as f64 * h;
                for j in 0..n {
                    out[step * n + j] = past_memory(k, phi, j, t)?;
                }
            }
            out
        }
    };
    let mut traj = Trajectory::new(n);
    traj.push(0.0, &u0.coeffs);
    let mut hist: Vec<f64> = u0.coeffs.clone();
    // -λ_j (tail + trapezoid over hist[0..=now]) with hist's last row at `now`
    let memory = |hist: &[f64], now: usize, j: usize| -> f64 {
        if kernel.is_none() {
            return 0.0;
        }
        let mut acc = 0.0;
        if now > 0 {
            acc += 0.5 * kvals[now] * hist[j] + 0.5 * kvals[0] * hist[now * n + j];
            for m in 1..now {
                acc += kvals[now - m] * hist[m * n + j];
            }
        }
        -lambdas[j] * (tail[now * n + j] + h * acc)
    };
    let deriv = |b: &SpectralField, hist: &[f64], now: usize| -> Result<SpectralField> {
        let nl = nonlinear_galerkin(b, &cfg.f, &cfg.basis)?;
        let force = SpectralField::from_coeffs((0..n).map(|j| memory(hist, now, j)).collect());
        Ok(assemble_rhs(b, &force, &nl, cfg))
    };
    let mut b = u0.clone();
    for step in 0..steps {
        let k1 = deriv(&b, &hist, step)?;
        let pred = SpectralField::from_coeffs(b.coeffs.iter().zip(&k1.coeffs).map(|(x, d)| x + h * d).collect());
        hist.extend_from_slice(&pred.coeffs);
        let k2 = deriv(&pred, &hist, step + 1)?;
        b = SpectralField::from_coeffs(
            (0..n)
                .map(|j| b.coeffs[j] + 0.5 * h * (k1.coeffs[j] + k2.coeffs[j]))
                .collect(),
        );
        if !b.is_finite() {
            return Err(Error::Divergence {
                step: step + 1,
                t: (step + 1) as f64 * h,
                reason: String::from("reference integrator produced a non-finite state"),
            });
        }
        let row = (step + 1) * n;
        hist[row..row + n].copy_from_slice(&b.coeffs);
        traj.push((step + 1) as f64 * h, &b.coeffs);
    }
    Ok(traj)
}

fn past_memory(k: &MemoryKernel, phi: &PastTrajectory, j: usize, t: f64) -> Result<f64> {
    if let (KernelFamily::Exponential { c, delta }, PastTrajectory::ExponentialMix { terms }) = (k.family(), phi) {
        let sum: f64 = terms
            .get(j)
            .map(|l| l.iter().map(|&(amp, beta)| amp / (delta + beta)).sum())
            .unwrap_or(0.0);
        return Ok(c / delta * libm::exp(-delta * t) * sum);
    }
    direct_memory(k, phi, j, t)
}
