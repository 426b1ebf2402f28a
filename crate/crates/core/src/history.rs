//! The integrated past history `η^t(s) = ∫_{t-s}^t u(r) dr`.
//!
//! `η` is stored nodally: one value per spatial mode and per node `s_i` of
//! the weighted rule for `μ(s) ds`. Two ways of moving it forward in time
//! are provided. [`advance`] shifts the old field along characteristics with
//! monotone cubic interpolation. [`HistoryTape`] keeps the running integral
//! `U(t) = ∫_0^t u` and rebuilds `η^t(s_i) = U(t) - U(t - s_i)` directly,
//! which avoids accumulating interpolation error step after step.

use crate::error::{Error, Result};
use crate::integrate::{adaptive, adaptive_semi_infinite, gauss_legendre};
use crate::kernel::{MemoryKernel, WeightedQuadrature};
use crate::spectral::{SpatialBasis, SpectralField};
use alloc::boxed::Box;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

/// Nodal values `e[j][i]` of `η` for mode `j` and history node `s_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryField {
    values: Vec<f64>,
    n_modes: usize,
    rule: Arc<WeightedQuadrature>,
}

impl HistoryField {
    pub fn zeros(n_modes: usize, rule: Arc<WeightedQuadrature>) -> Self {
        HistoryField {
            values: vec![0.0; n_modes * rule.len()],
            n_modes,
            rule,
        }
    }

    /// Builds a field from row-major values (`n_modes` rows of `rule.len()`).
    pub fn from_values(n_modes: usize, rule: Arc<WeightedQuadrature>, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_modes * rule.len() {
            return Err(Error::structure(format!(
                "history field needs {} x {} values, got {}",
                n_modes,
                rule.len(),
                values.len()
            )));
        }
        Ok(HistoryField { values, n_modes, rule })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_nodes(&self) -> usize {
        self.rule.len()
    }

    pub fn rule(&self) -> &Arc<WeightedQuadrature> {
        &self.rule
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.rule.len();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.rule.len();
        &mut self.values[j * n..(j + 1) * n]
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.rule.len() + i]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sub(&self, other: &HistoryField) -> Result<HistoryField> {
        self.check_same(other)?;
        Ok(HistoryField {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            n_modes: self.n_modes,
            rule: self.rule.clone(),
        })
    }

    fn check_same(&self, other: &HistoryField) -> Result<()> {
        if self.n_modes != other.n_modes || *self.rule != *other.rule {
            return Err(Error::structure("history fields live on different rules"));
        }
        Ok(())
    }
}

/// A past trajectory `φ: (-∞, 0] → span{w_1..w_n}`, in modal coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum PastTrajectory {
    Zero,
    /// `φ̂_j(r) = Σ_p c_p e^{β_p r}`, one term list per mode
    ExponentialMix { terms: Vec<Vec<(f64, f64)>> },
    /// piecewise linear samples on `[times[0], 0]`, zero before
    Sampled(SampledPast),
    /// `recent` on `[-span, 0]`, then `older` shifted back by `span`
    Spliced { recent: SampledPast, older: Box<PastTrajectory> },
}

/// Piecewise-linear past samples ending at `r = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPast {
    times: Vec<f64>,
    /// row-major by sample time
    values: Vec<f64>,
    n_modes: usize,
    /// `∫_{times[k]}^0 φ̂_j`, row-major by sample time
    cumulative: Vec<f64>,
}

impl SampledPast {
    /// `times` must be strictly increasing and end at `0`; `values` holds
    /// `n_modes` coefficients per time.
    pub fn new(times: Vec<f64>, values: Vec<f64>, n_modes: usize) -> Result<Self> {
        if times.is_empty() || values.len() != times.len() * n_modes {
            return Err(Error::param(
                "initial.phi_csv",
                format!("{} samples with {} values for {} modes", times.len(), values.len(), n_modes),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::param("initial.phi_csv", "sample times must be strictly increasing"));
        }
        let last = times[times.len() - 1];
        if last.abs() > 1e-9 * (1.0 + times[0].abs()) {
            return Err(Error::param("initial.phi_csv", format!("samples must end at r = 0, last is {last}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("initial.phi_csv", "sample values must be finite"));
        }
        let m = times.len();
        let mut cumulative = vec![0.0; m * n_modes];
        for k in (0..m - 1).rev() {
            let h = times[k + 1] - times[k];
            for j in 0..n_modes {
                cumulative[k * n_modes + j] = cumulative[(k + 1) * n_modes + j]
                    + 0.5 * h * (values[k * n_modes + j] + values[(k + 1) * n_modes + j]);
            }
        }
        Ok(SampledPast {
            times,
            values,
            n_modes,
            cumulative,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Length of the sampled window.
    pub fn span(&self) -> f64 {
        -self.times[0]
    }

    /// Index `k` with `times[k] ≤ r ≤ times[k+1]`, for `r` inside the window.
    fn segment(&self, r: f64) -> usize {
        let k = self.times.partition_point(|&t| t <= r);
        k.saturating_sub(1).min(self.times.len().saturating_sub(2))
    }

    fn value(&self, j: usize, r: f64) -> f64 {
        if j >= self.n_modes || r < self.times[0] || r > 0.0 || self.times.len() < 2 {
            return if self.times.len() == 1 && r == 0.0 && j < self.n_modes {
                self.values[j]
            } else {
                0.0
            };
        }
        let k = self.segment(r);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let (v0, v1) = (self.values[k * self.n_modes + j], self.values[(k + 1) * self.n_modes + j]);
        v0 + (v1 - v0) * (r - t0) / (t1 - t0)
    }

    /// `∫_{-s}^0 φ̂_j`.
    fn integral(&self, j: usize, s: f64) -> f64 {
        if j >= self.n_modes || s <= 0.0 || self.times.len() < 2 {
            return 0.0;
        }
        let r = -s;
        if r <= self.times[0] {
            return self.cumulative[j];
        }
        let k = self.segment(r);
        let t1 = self.times[k + 1];
        let v1 = self.values[(k + 1) * self.n_modes + j];
        let vr = self.value(j, r);
        self.cumulative[(k + 1) * self.n_modes + j] + 0.5 * (t1 - r) * (vr + v1)
    }

    fn lv2(&self, basis: &SpatialBasis, gamma: f64) -> f64 {
        let (gx, gw) = gauss_legendre(8);
        let mut total = 0.0;
        for (j, lambda) in basis.eigenvalues().iter().enumerate().take(self.n_modes) {
            let mut acc = 0.0;
            for k in 0..self.times.len().saturating_sub(1) {
                let (t0, t1) = (self.times[k], self.times[k + 1]);
                let (v0, v1) = (self.values[k * self.n_modes + j], self.values[(k + 1) * self.n_modes + j]);
                let half = 0.5 * (t1 - t0);
                for (x, w) in gx.iter().zip(&gw) {
                    let r = t0 + half * (x + 1.0);
                    let v = v0 + (v1 - v0) * (r - t0) / (t1 - t0);
                    acc += w * half * libm::exp(gamma * r) * v * v;
                }
            }
            total += lambda * acc;
        }
        total
    }
}

impl PastTrajectory {
    pub fn exponential_mix(terms: Vec<Vec<(f64, f64)>>) -> Self {
        PastTrajectory::ExponentialMix { terms }
    }

    /// `φ̂_j(r) = amp · e^{rate r}` on a single mode (1-based `j`).
    pub fn single_exponential(j: usize, amp: f64, rate: f64) -> Self {
        let mut terms = vec![Vec::new(); j];
        terms[j - 1].push((amp, rate));
        PastTrajectory::ExponentialMix { terms }
    }

    /// Highest mode count the representation refers to.
    pub fn n_modes(&self) -> usize {
        match self {
            PastTrajectory::Zero => 0,
            PastTrajectory::ExponentialMix { terms } => terms.len(),
            PastTrajectory::Sampled(s) => s.n_modes,
            PastTrajectory::Spliced { recent, older } => recent.n_modes.max(older.n_modes()),
        }
    }

    /// Checks that `φ ∈ L_V²` for weight `e^{γ r}` and that it fits the basis.
    pub fn validate(&self, n_modes: usize, gamma: f64) -> Result<()> {
        if self.n_modes() > n_modes {
            return Err(Error::param(
                "initial.phi",
                format!("past trajectory uses {} modes, basis has {n_modes}", self.n_modes()),
            ));
        }
        match self {
            PastTrajectory::ExponentialMix { terms } => {
                for (j, list) in terms.iter().enumerate() {
                    for &(c, beta) in list {
                        if !c.is_finite() || !beta.is_finite() {
                            return Err(Error::param("initial.phi", format!("mode {}: non-finite term", j + 1)));
                        }
                        if beta <= -0.5 * gamma {
                            return Err(Error::param(
                                "initial.phi",
                                format!(
                                    "mode {}: rate {beta} <= -gamma/2 = {}, not square integrable against e^(gamma r)",
                                    j + 1,
                                    -0.5 * gamma
                                ),
                            ));
                        }
                    }
                }
                Ok(())
            }
            PastTrajectory::Spliced { older, .. } => older.validate(n_modes, gamma),
            _ => Ok(()),
        }
    }

    /// `φ̂_j(r)` for `r ≤ 0` (0-based mode index).
    pub fn value(&self, j: usize, r: f64) -> f64 {
        match self {
            PastTrajectory::Zero => 0.0,
            PastTrajectory::ExponentialMix { terms } => terms
                .get(j)
                .map(|l| l.iter().map(|&(c, b)| c * libm::exp(b * r)).sum())
                .unwrap_or(0.0),
            PastTrajectory::Sampled(s) => s.value(j, r),
            PastTrajectory::Spliced { recent, older } => {
                let span = recent.span();
                if r >= -span {
                    recent.value(j, r)
                } else {
                    older.value(j, r + span)
                }
            }
        }
    }

    /// `∫_{-s}^0 φ̂_j(r) dr` (0-based mode index).
    pub fn integral(&self, j: usize, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            PastTrajectory::Zero => 0.0,
            PastTrajectory::ExponentialMix { terms } => terms
                .get(j)
                .map(|l| {
                    l.iter()
                        .map(|&(c, b)| {
                            if b == 0.0 {
                                c * s
                            } else {
                                -c * libm::expm1(-b * s) / b
                            }
                        })
                        .sum()
                })
                .unwrap_or(0.0),
            PastTrajectory::Sampled(p) => p.integral(j, s),
            PastTrajectory::Spliced { recent, older } => {
                let span = recent.span();
                if s <= span {
                    recent.integral(j, s)
                } else {
                    recent.integral(j, span) + older.integral(j, s - span)
                }
            }
        }
    }

    /// Splits the past into `(r_lo, r_hi)` pieces on which it is smooth,
    /// ordered from `r = 0` backwards; the last piece is unbounded.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            PastTrajectory::Zero | PastTrajectory::ExponentialMix { .. } => Vec::new(),
            PastTrajectory::Sampled(p) => p.times.iter().rev().skip(1).map(|t| -t).collect(),
            PastTrajectory::Spliced { recent, older } => {
                let span = recent.span();
                let mut b: Vec<f64> = recent.times.iter().rev().skip(1).map(|t| -t).collect();
                b.extend(older.breakpoints().into_iter().map(|s| s + span));
                b
            }
        }
    }

    /// `‖φ‖²_{L_V²} = Σ_j λ_j ∫_{-∞}^0 e^{γ r} φ̂_j(r)² dr`.
    pub fn lv2_norm(&self, basis: &SpatialBasis, gamma: f64) -> f64 {
        match self {
            PastTrajectory::Zero => 0.0,
            PastTrajectory::ExponentialMix { terms } => terms
                .iter()
                .zip(basis.eigenvalues())
                .map(|(list, lambda)| {
                    let mut acc = 0.0;
                    for &(cp, bp) in list {
                        for &(cq, bq) in list {
                            acc += cp * cq / (gamma + bp + bq);
                        }
                    }
                    lambda * acc
                })
                .sum(),
            PastTrajectory::Sampled(p) => p.lv2(basis, gamma),
            PastTrajectory::Spliced { recent, older } => {
                recent.lv2(basis, gamma) + libm::exp(-gamma * recent.span()) * older.lv2_norm(basis, gamma)
            }
        }
    }

    /// Puts a sampled recent window in front of an older past, which is
    /// shifted back by the window length.
    pub fn splice(recent: SampledPast, older: PastTrajectory) -> PastTrajectory {
        PastTrajectory::Spliced {
            recent,
            older: Box::new(older),
        }
    }
}

/// `‖φ_a - φ_b‖²_{L_V²}`. Closed form when both are exponential mixes,
/// otherwise adaptive quadrature of the pointwise difference.
pub fn lv2_distance(a: &PastTrajectory, b: &PastTrajectory, basis: &SpatialBasis, gamma: f64) -> Result<f64> {
    let as_terms = |p: &PastTrajectory| -> Option<Vec<Vec<(f64, f64)>>> {
        match p {
            PastTrajectory::Zero => Some(Vec::new()),
            PastTrajectory::ExponentialMix { terms } => Some(terms.clone()),
            _ => None,
        }
    };
    if let (Some(ta), Some(tb)) = (as_terms(a), as_terms(b)) {
        let n = ta.len().max(tb.len());
        let merged = (0..n)
            .map(|j| {
                let mut list: Vec<(f64, f64)> = ta.get(j).cloned().unwrap_or_default();
                list.extend(tb.get(j).into_iter().flatten().map(|&(c, r)| (-c, r)));
                list
            })
            .collect();
        return Ok(PastTrajectory::ExponentialMix { terms: merged }.lv2_norm(basis, gamma));
    }
    let mut knots = a.breakpoints();
    knots.extend(b.breakpoints());
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut total = 0.0;
    for (j, lambda) in basis.eigenvalues().iter().enumerate() {
        let integrand = |s: f64| {
            let d = a.value(j, -s) - b.value(j, -s);
            libm::exp(-gamma * s) * d * d
        };
        let mut lo = 0.0;
        let mut acc = 0.0;
        for &k in &knots {
            if k > lo {
                acc += adaptive(integrand, lo, k, 1e-15, 1e-10)?.value;
                lo = k;
            }
        }
        acc += adaptive_semi_infinite(integrand, lo, 1e-15, 1e-10)?.value;
        total += lambda * acc;
    }
    Ok(total)
}

/// `𝒥φ`: the history field `e[j][i] = ∫_{-s_i}^0 φ̂_j(r) dr`.
///
/// Exact for every representation (the sampled one is piecewise linear, so
/// its cumulative trapezoid is exact).
pub fn lift(
    phi: &PastTrajectory,
    rule: &Arc<WeightedQuadrature>,
    basis: &SpatialBasis,
    gamma: f64,
) -> Result<HistoryField> {
    phi.validate(basis.n_modes(), gamma)?;
    let mut eta = HistoryField::zeros(basis.n_modes(), rule.clone());
    for j in 0..basis.n_modes() {
        let row = eta.row_mut(j);
        for (e, s) in row.iter_mut().zip(&rule.nodes) {
            *e = phi.integral(j, *s);
        }
    }
    Ok(eta)
}

fn check_basis(eta: &HistoryField, basis: &SpatialBasis) -> Result<()> {
    if eta.n_modes() != basis.n_modes() {
        return Err(Error::structure(format!(
            "history field has {} modes, basis has {}",
            eta.n_modes(),
            basis.n_modes()
        )));
    }
    Ok(())
}

/// `F_j = -λ_j Σ_i ω_i e[j][i]`, the Galerkin image of `∫ μ(s) Δη(s) ds`.
pub fn memory_force(eta: &HistoryField, basis: &SpatialBasis) -> Result<SpectralField> {
    check_basis(eta, basis)?;
    let w = &eta.rule().weights;
    let coeffs = basis
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(j, lambda)| -lambda * eta.row(j).iter().zip(w).map(|(e, w)| e * w).sum::<f64>())
        .collect();
    Ok(SpectralField { coeffs })
}

/// `‖η‖²_μ = Σ_j λ_j Σ_i ω_i e[j][i]²`.
pub fn history_norm_mu(eta: &HistoryField, basis: &SpatialBasis) -> f64 {
    let w = &eta.rule().weights;
    basis
        .eigenvalues()
        .iter()
        .enumerate()
        .take(eta.n_modes())
        .map(|(j, lambda)| lambda * eta.row(j).iter().zip(w).map(|(e, w)| w * e * e).sum::<f64>())
        .sum()
}

/// `‖φ‖²_{L_V²}`.
pub fn lv2_norm(phi: &PastTrajectory, basis: &SpatialBasis, gamma: f64) -> f64 {
    phi.lv2_norm(basis, gamma)
}

/// Shifts `η` forward by `dt` along characteristics.
///
/// Nodes with `s_i > dt` take the monotone cubic interpolant of the old
/// field at `s_i - dt` plus `increment_j = ∫_t^{t+dt} b_j`. Nodes with
/// `s_i ≤ dt` are filled from the definition, using `u_end` and the mean
/// value `increment / dt` to fix a linear-in-time model of `b` on the step.
pub fn advance(eta: &HistoryField, increment: &SpectralField, dt: f64, u_end: &SpectralField) -> Result<HistoryField> {
    if !(dt > 0.0) {
        return Err(Error::param("time.dt", format!("must be positive, got {dt}")));
    }
    let n = eta.n_modes();
    if increment.len() != n || u_end.len() != n {
        return Err(Error::structure("advance: increment and endpoint must match the field's modes"));
    }
    let nodes = &eta.rule().nodes;
    let mut out = eta.clone();
    let mut xs = Vec::with_capacity(nodes.len() + 1);
    xs.push(0.0);
    xs.extend_from_slice(nodes);
    let mut ys = vec![0.0; xs.len()];
    for j in 0..n {
        ys[1..].copy_from_slice(eta.row(j));
        let spline = MonotoneCubic::new(&xs, &ys);
        let inc = increment.coeffs[j];
        let b_end = u_end.coeffs[j];
        // b(t + dt - r) ≈ b_end - slope r on the step
        let slope = 2.0 * (b_end - inc / dt) / dt;
        for (e, s) in out.row_mut(j).iter_mut().zip(nodes) {
            *e = if *s > dt {
                spline.eval(s - dt) + inc
            } else {
                s * b_end - 0.5 * slope * s * s
            };
        }
    }
    Ok(out)
}

/// Fritsch–Carlson monotone piecewise cubic Hermite interpolant.
#[derive(Debug, Clone)]
pub struct MonotoneCubic<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    slopes: Vec<f64>,
}

impl<'a> MonotoneCubic<'a> {
    pub fn new(xs: &'a [f64], ys: &'a [f64]) -> Self {
        let n = xs.len();
        let mut slopes = vec![0.0; n];
        if n < 2 {
            return MonotoneCubic { xs, ys, slopes };
        }
        let secants: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])).collect();
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for k in 1..n - 1 {
            slopes[k] = if secants[k - 1] * secants[k] <= 0.0 {
                0.0
            } else {
                // three-point slope, second order on uneven spacing
                let h0 = xs[k] - xs[k - 1];
                let h1 = xs[k + 1] - xs[k];
                (h1 * secants[k - 1] + h0 * secants[k]) / (h0 + h1)
            };
        }
        for k in 0..n - 1 {
            let d = secants[k];
            if d == 0.0 {
                slopes[k] = 0.0;
                slopes[k + 1] = 0.0;
                continue;
            }
            let a = slopes[k] / d;
            let b = slopes[k + 1] / d;
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / libm::sqrt(r);
                slopes[k] = tau * a * d;
                slopes[k + 1] = tau * b * d;
            }
        }
        MonotoneCubic { xs, ys, slopes }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 0 {
            return 0.0;
        }
        if n == 1 || x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.xs.partition_point(|&v| v <= x) - 1;
        hermite(
            self.xs[k],
            self.xs[k + 1],
            self.ys[k],
            self.ys[k + 1],
            self.slopes[k],
            self.slopes[k + 1],
            x,
        )
    }
}

/// Cubic Hermite interpolation on `[x0, x1]`.
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * m1
}

/// Running integral `U(t) = ∫_0^t u` at every accepted step, with the slopes
/// `u(t_k)` used for cubic Hermite reconstruction between steps.
///
/// For `r < 0` the tape falls back on the past trajectory,
/// `U(r) = -∫_r^0 φ`.
#[derive(Debug, Clone)]
pub struct HistoryTape {
    n_modes: usize,
    times: Vec<f64>,
    cumulative: Vec<f64>,
    slopes: Vec<f64>,
}

/// A point of the running integral that need not be on the tape yet.
#[derive(Debug, Clone, Copy)]
pub struct TapePoint<'a> {
    pub t: f64,
    pub cumulative: &'a [f64],
    pub slope: &'a [f64],
}

impl HistoryTape {
    pub fn new(u0: &SpectralField) -> Self {
        HistoryTape {
            n_modes: u0.len(),
            times: vec![0.0],
            cumulative: vec![0.0; u0.len()],
            slopes: u0.coeffs.clone(),
        }
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

    pub fn last(&self) -> TapePoint<'_> {
        let k = self.times.len() - 1;
        let n = self.n_modes;
        TapePoint {
            t: self.times[k],
            cumulative: &self.cumulative[k * n..(k + 1) * n],
            slope: &self.slopes[k * n..(k + 1) * n],
        }
    }

    pub fn push(&mut self, t: f64, cumulative: &[f64], slope: &[f64]) -> Result<()> {
        if !(t > self.last().t) || cumulative.len() != self.n_modes || slope.len() != self.n_modes {
            return Err(Error::structure(format!("tape push at t = {t} is out of order or mis-sized")));
        }
        self.times.push(t);
        self.cumulative.extend_from_slice(cumulative);
        self.slopes.extend_from_slice(slope);
        Ok(())
    }

    /// `U_j(r)` for `r` on the recorded range or in the past.
    fn cumulative_at(&self, phi: &PastTrajectory, j: usize, r: f64, k: usize) -> f64 {
        if r <= 0.0 {
            return -phi.integral(j, -r);
        }
        let n = self.n_modes;
        hermite(
            self.times[k],
            self.times[k + 1],
            self.cumulative[k * n + j],
            self.cumulative[(k + 1) * n + j],
            self.slopes[k * n + j],
            self.slopes[(k + 1) * n + j],
            r,
        )
    }

    /// Writes `η^τ(s_i) = U(τ) - U(τ - s_i)` into `eta`, where the state at
    /// `τ ≥ last().t` is given by `now`. Between the last tape entry and `τ`
    /// the running integral is the cubic Hermite through both ends.
    pub fn fill(&self, phi: &PastTrajectory, now: TapePoint<'_>, eta: &mut HistoryField) {
        let last = self.last();
        let n = self.n_modes;
        let nodes = eta.rule().nodes.clone();
        let n_nodes = nodes.len();
        for (i, s) in nodes.iter().enumerate() {
            let r = now.t - s;
            if r > last.t {
                for j in 0..n {
                    let u = hermite(last.t, now.t, last.cumulative[j], now.cumulative[j], last.slope[j], now.slope[j], r);
                    eta.values[j * n_nodes + i] = now.cumulative[j] - u;
                }
            } else {
                let k = if r <= 0.0 {
                    0
                } else {
                    (self.times.partition_point(|&t| t <= r).max(1) - 1).min(self.times.len() - 2)
                };
                for j in 0..n {
                    eta.values[j * n_nodes + i] = now.cumulative[j] - self.cumulative_at(phi, j, r, k);
                }
            }
        }
    }
}

/// Largest per-mode relative gap between `memory_force(η)` and the direct
/// convolution `-λ_j ∫_0^∞ k(s) φ̂_j(-s) ds`, the latter by adaptive
/// quadrature. Modes where the direct value vanishes use the absolute gap.
pub fn equivalence_residual(
    eta: &HistoryField,
    phi: &PastTrajectory,
    kernel: &MemoryKernel,
    basis: &SpatialBasis,
) -> Result<f64> {
    let force = memory_force(eta, basis)?;
    let mut worst: f64 = 0.0;
    for (j, lambda) in basis.eigenvalues().iter().enumerate() {
        let direct = -lambda * direct_memory(kernel, phi, j, 0.0)?;
        let gap = (force.coeffs[j] - direct).abs();
        let rel = if direct != 0.0 { gap / direct.abs() } else { gap };
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// `∫_0^∞ k(t + s) φ̂_j(-s) ds`: the past's contribution to the memory
/// convolution at time `t ≥ 0`, by adaptive quadrature split at the
/// representation's kinks.
pub fn direct_memory(kernel: &MemoryKernel, phi: &PastTrajectory, j: usize, t: f64) -> Result<f64> {
    if matches!(phi, PastTrajectory::Zero) {
        return Ok(0.0);
    }
    let integrand = |s: f64| {
        let v = phi.value(j, -s);
        if v == 0.0 {
            0.0
        } else {
            kernel.k(t + s).unwrap_or(0.0) * v
        }
    };
    let (abs_tol, rel_tol) = (1e-15, 1e-12);
    let mut total = 0.0;
    let mut lo = 0.0;
    for b in phi.breakpoints() {
        if b > lo {
            total += adaptive(integrand, lo, b, abs_tol, rel_tol)?.value;
            lo = b;
        }
    }
    let tail_needed = match phi {
        PastTrajectory::Sampled(_) => false,
        _ => true,
    };
    if tail_needed {
        total += adaptive_semi_infinite(integrand, lo, abs_tol, rel_tol)?.value;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_quadrature;

    fn rule(kernel: &MemoryKernel, n: usize) -> Arc<WeightedQuadrature> {
        Arc::new(build_quadrature(kernel, n, crate::kernel::default_s_max(kernel)).unwrap())
    }

    #[test]
    fn lift_examples() {
        let k = MemoryKernel::exponential(1.0, 1.0).unwrap();
        let q = rule(&k, 32);
        let basis = crate::spectral::eigenbasis(1.0, 2, 3).unwrap();
        let eta = lift(&PastTrajectory::single_exponential(1, 1.0, 1.0), &q, &basis, 0.5).unwrap();
        for (e, s) in eta.row(0).iter().zip(&q.nodes) {
            assert!((e - (1.0 - libm::exp(-s))).abs() < 1e-14);
        }
        assert!(eta.row(1).iter().all(|e| *e == 0.0));

        let zero = lift(&PastTrajectory::Zero, &q, &basis, 0.5).unwrap();
        assert!(zero.values().iter().all(|e| *e == 0.0));

        let boxcar = SampledPast::new(vec![-1.0, 0.0], vec![1.0, 0.0, 1.0, 0.0], 2).unwrap();
        let eta = lift(&PastTrajectory::Sampled(boxcar), &q, &basis, 0.5).unwrap();
        for (e, s) in eta.row(0).iter().zip(&q.nodes) {
            assert!((e - s.min(1.0)).abs() < 1e-14);
        }

        let bad = PastTrajectory::single_exponential(1, 1.0, -0.25);
        assert!(lift(&bad, &q, &basis, 0.5).is_err());
    }

    #[test]
    fn memory_force_examples() {
        let k = MemoryKernel::exponential(1.0, 1.0).unwrap();
        let q = rule(&k, 64);
        let basis = crate::spectral::eigenbasis(1.0, 1, 2).unwrap();
        let eta = lift(&PastTrajectory::single_exponential(1, 1.0, 1.0), &q, &basis, 0.5).unwrap();
        let f = memory_force(&eta, &basis).unwrap();
        assert!((f.coeffs[0] + basis.lambda1() / 2.0).abs() < 1e-9 * basis.lambda1());

        let c = 0.3;
        let flat = HistoryField::from_values(1, q.clone(), vec![c; q.len()]).unwrap();
        let f = memory_force(&flat, &basis).unwrap();
        assert!((f.coeffs[0] + basis.lambda1() * c * q.mass).abs() < 1e-12);

        let zero = HistoryField::zeros(1, q.clone());
        assert_eq!(memory_force(&zero, &basis).unwrap().coeffs, vec![0.0]);
        let wrong = crate::spectral::eigenbasis(1.0, 2, 3).unwrap();
        assert!(memory_force(&zero, &wrong).is_err());
    }

    #[test]
    fn norm_examples() {
        let k = MemoryKernel::exponential(1.0, 1.0).unwrap();
        let q = rule(&k, 16);
        let basis = crate::spectral::eigenbasis(1.0, 1, 2).unwrap();
        assert_eq!(history_norm_mu(&HistoryField::zeros(1, q.clone()), &basis), 0.0);
        let ones = HistoryField::from_values(1, q.clone(), vec![1.0; q.len()]).unwrap();
        assert!((history_norm_mu(&ones, &basis) - basis.lambda1()).abs() < 1e-12 * basis.lambda1());
        let phi = PastTrajectory::single_exponential(1, 1.0, 1.0);
        assert!((lv2_norm(&phi, &basis, 0.5) - 0.4 * basis.lambda1()).abs() < 1e-12);
    }

    #[test]
    fn sampled_lv2_matches_closed_form() {
        let basis = crate::spectral::eigenbasis(1.0, 1, 2).unwrap();
        let times: Vec<f64> = (0..=4000).map(|k| -20.0 + k as f64 * 0.005).collect();
        let values: Vec<f64> = times.iter().map(|r| libm::exp(*r)).collect();
        let p = PastTrajectory::Sampled(SampledPast::new(times, values, 1).unwrap());
        let got = p.lv2_norm(&basis, 0.5);
        assert!((got - 0.4 * basis.lambda1()).abs() < 1e-5 * basis.lambda1());
    }

    #[test]
    fn splice_is_consistent() {
        // e^r sampled on [-1, 0] followed by e^{r}·e^{-1} tail
        let times: Vec<f64> = (0..=1000).map(|k| -1.0 + k as f64 * 0.001).collect();
        let values: Vec<f64> = times.iter().map(|r| libm::exp(*r)).collect();
        let recent = SampledPast::new(times, values, 1).unwrap();
        let older = PastTrajectory::single_exponential(1, libm::exp(-1.0), 1.0);
        let p = PastTrajectory::splice(recent, older);
        for s in [0.5, 1.0, 2.0, 7.0] {
            assert!((p.integral(0, s) - (1.0 - libm::exp(-s))).abs() < 1e-6);
            assert!((p.value(0, -s) - libm::exp(-s)).abs() < 1e-6);
        }
    }

    #[test]
    fn advance_examples() {
        let k = MemoryKernel::exponential(1.0, 1.0).unwrap();
        let q = rule(&k, 64);
        let basis = crate::spectral::eigenbasis(1.0, 1, 2).unwrap();
        let dt = 0.01;

        let boxcar = SampledPast::new(vec![-1.0, 0.0], vec![1.0, 1.0], 1).unwrap();
        let eta = lift(&PastTrajectory::Sampled(boxcar), &q, &basis, 0.5).unwrap();
        let next = advance(&eta, &SpectralField::zeros(1), dt, &SpectralField::zeros(1)).unwrap();
        for (e, s) in next.row(0).iter().zip(&q.nodes) {
            let expect = if *s > dt { (s - dt).min(1.0) } else { 0.0 };
            // exact on linear stretches, the kink at s = 1 gets smoothed
            let tol = if (s - 1.0).abs() < 0.2 { 1e-2 } else { 1e-12 };
            assert!((e - expect).abs() < tol, "s = {s}: {e} vs {expect}");
        }

        let mut eta = HistoryField::zeros(1, q.clone());
        let one = SpectralField::from_coeffs(vec![1.0]);
        let inc = SpectralField::from_coeffs(vec![dt]);
        for step in 1..=30 {
            eta = advance(&eta, &inc, dt, &one).unwrap();
            let t = step as f64 * dt;
            for (e, s) in eta.row(0).iter().zip(&q.nodes) {
                let tol = if (s - t).abs() < 0.3 { 1e-2 } else { 1e-12 };
                assert!((e - s.min(t)).abs() < tol, "s = {s}, t = {t}: {e}");
            }
        }
        assert!(advance(&eta, &inc, 0.0, &one).is_err());
    }

    #[test]
    fn advance_tracks_exponential_history() {
        // u(r) = e^{-r} for all r; η(t, s) = ∫_{t-s}^t e^{-r} dr = e^{-t}(e^s - 1).
        // Re-interpolating every step costs about dt·h² per step on nodes of
        // spacing h, so the drift after 200 steps is at the percent level.
        let k = MemoryKernel::exponential(1.0, 1.0).unwrap();
        let q = Arc::new(build_quadrature(&k, 64, 10.0).unwrap());
        let basis = crate::spectral::eigenbasis(1.0, 1, 2).unwrap();
        let phi = PastTrajectory::single_exponential(1, 1.0, -1.0);
        let mut eta = lift(&phi, &q, &basis, 4.0).unwrap();
        let dt = 1e-3;
        let steps = 200;
        for step in 0..steps {
            let t0 = step as f64 * dt;
            let inc = SpectralField::from_coeffs(vec![libm::exp(-t0) - libm::exp(-t0 - dt)]);
            let end = SpectralField::from_coeffs(vec![libm::exp(-t0 - dt)]);
            eta = advance(&eta, &inc, dt, &end).unwrap();
        }
        let t = steps as f64 * dt;
        for (e, s) in eta.row(0).iter().zip(&q.nodes).filter(|(_, s)| **s <= 1.0) {
            let expect = libm::exp(-t) * libm::expm1(*s);
            assert!((e - expect).abs() <= 5e-3 * expect.abs().max(1e-3), "s = {s}: {e} vs {expect}");
        }
    }

    #[test]
    fn tape_reproduces_definition() {
        let k = MemoryKernel::exponential(1.0, 1.0).unwrap();
        let q = Arc::new(build_quadrature(&k, 64, 10.0).unwrap());
        let phi = PastTrajectory::single_exponential(1, 1.0, -1.0);
        let mut tape = HistoryTape::new(&SpectralField::from_coeffs(vec![1.0]));
        let dt = 1e-2;
        for step in 1..=100 {
            let t = step as f64 * dt;
            tape.push(t, &[1.0 - libm::exp(-t)], &[libm::exp(-t)]).unwrap();
        }
        let mut eta = HistoryField::zeros(1, q.clone());
        tape.fill(&phi, tape.last(), &mut eta);
        let t = 1.0;
        for (e, s) in eta.row(0).iter().zip(&q.nodes) {
            let expect = libm::exp(-t) * libm::expm1(*s);
            assert!((e - expect).abs() <= 1e-10, "s = {s}: {e} vs {expect}");
        }
    }

    #[test]
    fn equivalence_examples() {
        let k = MemoryKernel::exponential(1.0, 1.0).unwrap();
        let q = rule(&k, 128);
        let basis = crate::spectral::eigenbasis(1.0, 2, 3).unwrap();
        for rate in [1.0, 2.0] {
            let phi = PastTrajectory::single_exponential(1, 1.0, rate);
            let eta = lift(&phi, &q, &basis, 0.5).unwrap();
            let r = equivalence_residual(&eta, &phi, &k, &basis).unwrap();
            assert!(r <= 1e-6, "rate {rate}: residual {r}");
            let f = memory_force(&eta, &basis).unwrap();
            let expect = -basis.lambda1() / (1.0 + rate);
            assert!((f.coeffs[0] - expect).abs() <= 1e-6 * expect.abs());
        }
        let zero = lift(&PastTrajectory::Zero, &q, &basis, 0.5).unwrap();
        assert_eq!(equivalence_residual(&zero, &PastTrajectory::Zero, &k, &basis).unwrap(), 0.0);
    }
}
