//! Memory kernels `μ`, the induced flux kernel `k(t) = ∫_t^∞ μ`, hypothesis
//! checks and the product-integration rule for `∫_0^∞ μ(s) g(s) ds`.

use crate::error::{Error, Result};
use crate::integrate::gauss_legendre;
use crate::linalg::tridiagonal_eigen;
use crate::special::{gamma, gamma_pq};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

/// The two supported kernel families.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum KernelFamily {
    /// `μ(s) = c e^{-δ s}`
    Exponential { c: f64, delta: f64 },
    /// `μ(s) = e^{-δ s} s^{-α}`
    SingularExp { delta: f64, alpha: f64 },
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Exponential { c, delta } => write!(f, "exp({c:?},{delta:?})"),
            KernelFamily::SingularExp { delta, alpha } => write!(f, "singular({delta:?},{alpha:?})"),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    /// Parses `exp(c,delta)` or `singular(delta,alpha)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::param("kernel", format!("cannot parse kernel spec `{s}`"));
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let name = s[..open].trim();
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<core::result::Result<_, _>>()
            .map_err(|_| bad())?;
        match (name, args.as_slice()) {
            ("exp", &[c, delta]) => Ok(KernelFamily::Exponential { c, delta }),
            ("singular", &[delta, alpha]) => Ok(KernelFamily::SingularExp { delta, alpha }),
            _ => Err(bad()),
        }
    }
}

/// A validated memory kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MemoryKernel {
    family: KernelFamily,
}

/// Builds a kernel after checking `δ > 0`, `c > 0` and `α ∈ [0, 1)`.
pub fn make_kernel(family: KernelFamily) -> Result<MemoryKernel> {
    match family {
        KernelFamily::Exponential { c, delta } => {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::param("c", format!("must be positive, got {c}")));
            }
            check_delta(delta)?;
        }
        KernelFamily::SingularExp { delta, alpha } => {
            check_delta(delta)?;
            if !(0.0..1.0).contains(&alpha) {
                return Err(Error::param("alpha", format!("must lie in [0, 1), got {alpha}")));
            }
        }
    }
    Ok(MemoryKernel { family })
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::param("delta", format!("must be positive, got {delta}")))
    }
}

impl MemoryKernel {
    pub fn exponential(c: f64, delta: f64) -> Result<Self> {
        make_kernel(KernelFamily::Exponential { c, delta })
    }

    pub fn singular(delta: f64, alpha: f64) -> Result<Self> {
        make_kernel(KernelFamily::SingularExp { delta, alpha })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn delta(&self) -> f64 {
        match self.family {
            KernelFamily::Exponential { delta, .. } | KernelFamily::SingularExp { delta, .. } => delta,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self.family {
            KernelFamily::Exponential { .. } => 0.0,
            KernelFamily::SingularExp { alpha, .. } => alpha,
        }
    }

    /// `μ(s)`. Negative `s`, and `s = 0` on a singular kernel, are domain errors.
    pub fn mu(&self, s: f64) -> Result<f64> {
        self.check_arg(s)?;
        Ok(self.mu_unchecked(s))
    }

    /// `μ'(s)` in closed form.
    pub fn mu_prime(&self, s: f64) -> Result<f64> {
        self.check_arg(s)?;
        Ok(match self.family {
            KernelFamily::Exponential { delta, .. } => -delta * self.mu_unchecked(s),
            KernelFamily::SingularExp { delta, alpha } => -self.mu_unchecked(s) * (delta + alpha / s),
        })
    }

    fn check_arg(&self, s: f64) -> Result<()> {
        let singular_at_zero = matches!(self.family, KernelFamily::SingularExp { alpha, .. } if alpha > 0.0);
        if s < 0.0 || s.is_nan() || (s == 0.0 && singular_at_zero) {
            return Err(Error::Domain { what: "memory kernel", value: s });
        }
        Ok(())
    }

    pub(crate) fn mu_unchecked(&self, s: f64) -> f64 {
        match self.family {
            KernelFamily::Exponential { c, delta } => c * libm::exp(-delta * s),
            KernelFamily::SingularExp { delta, alpha } => {
                libm::exp(-delta * s) * libm::pow(s, -alpha)
            }
        }
    }

    /// `k(t) = ∫_t^∞ μ(s) ds`; see [`k_of`].
    pub fn k(&self, t: f64) -> Result<f64> {
        k_of(self, t)
    }

    /// `k(0) = ∫_0^∞ μ`, the total mass of the memory weight.
    pub fn k0(&self) -> f64 {
        match self.family {
            KernelFamily::Exponential { c, delta } => c / delta,
            KernelFamily::SingularExp { delta, alpha } => {
                libm::pow(delta, alpha - 1.0) * gamma(1.0 - alpha)
            }
        }
    }

    /// `∫_0^∞ μ(s) e^{-β s} ds` in closed form (`β > -δ`).
    pub fn laplace(&self, beta: f64) -> f64 {
        match self.family {
            KernelFamily::Exponential { c, delta } => c / (delta + beta),
            KernelFamily::SingularExp { delta, alpha } => {
                gamma(1.0 - alpha) * libm::pow(delta + beta, alpha - 1.0)
            }
        }
    }

    /// `∫_a^b μ(s) ds` for `0 ≤ a ≤ b`.
    pub fn mass_between(&self, a: f64, b: f64) -> Result<f64> {
        if !(0.0 <= a && a <= b) {
            return Err(Error::param("interval", format!("need 0 <= a <= b, got [{a}, {b}]")));
        }
        match self.family {
            KernelFamily::Exponential { c, delta } => {
                Ok(c / delta * libm::exp(-delta * a) * -libm::expm1(-delta * (b - a)))
            }
            KernelFamily::SingularExp { delta, alpha } => {
                let scale = libm::pow(delta, alpha - 1.0) * gamma(1.0 - alpha);
                let (pa, qa) = gamma_pq(1.0 - alpha, delta * a)?;
                let (pb, qb) = gamma_pq(1.0 - alpha, if b.is_infinite() { f64::INFINITY } else { delta * b })?;
                // difference of whichever ratio is not close to one
                Ok(scale * if qa > 0.5 { pb - pa } else { qa - qb })
            }
        }
    }

    /// Samples the kernel hypotheses on `grid`; see [`HypothesisReport`].
    pub fn validate_hypotheses(&self, grid: &[f64], delta_test: f64) -> HypothesisReport {
        validate_hypotheses(self, grid, delta_test)
    }
}

/// `k(t) = ∫_t^∞ μ(s) ds`.
///
/// Closed form on the exponential family; the singular family goes through
/// the regularized upper incomplete gamma function,
/// `k(t) = δ^{α-1} Γ(1-α) Q(1-α, δ t)`.
pub fn k_of(kernel: &MemoryKernel, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain { what: "k(t)", value: t });
    }
    let k = match kernel.family {
        KernelFamily::Exponential { c, delta } => c / delta * libm::exp(-delta * t),
        KernelFamily::SingularExp { delta, alpha } => {
            let (_, q) = gamma_pq(1.0 - alpha, delta * t)?;
            libm::pow(delta, alpha - 1.0) * gamma(1.0 - alpha) * q
        }
    };
    debug_assert!(t == 0.0 || k <= kernel.mu_unchecked(t) / kernel.delta() * (1.0 + 1e-12) + 1e-300);
    Ok(k)
}

/// Outcome of sampling the kernel hypotheses.
///
/// `h2_margin` is `min_s [-μ'(s) - δ_test μ(s)]` over the grid; the decay
/// hypothesis passes iff it is non-negative.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypothesisReport {
    pub h1_nonneg: bool,
    pub h1_monotone: bool,
    pub h1_integrable: bool,
    pub h2_pass: bool,
    pub h2_margin: f64,
    pub worst_s: f64,
    pub delta_test: f64,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.h1_nonneg && self.h1_monotone && self.h1_integrable && self.h2_pass
    }
}

pub fn validate_hypotheses(kernel: &MemoryKernel, grid: &[f64], delta_test: f64) -> HypothesisReport {
    let mut report = HypothesisReport {
        h1_nonneg: true,
        h1_monotone: true,
        h1_integrable: kernel.k0().is_finite() && kernel.k0() >= 0.0,
        h2_pass: true,
        h2_margin: f64::INFINITY,
        worst_s: f64::NAN,
        delta_test,
    };
    if grid.is_empty() {
        report.h2_pass = false;
        report.h2_margin = f64::NAN;
        return report;
    }
    for &s in grid {
        let (Ok(mu), Ok(dmu)) = (kernel.mu(s), kernel.mu_prime(s)) else {
            report.h1_nonneg = false;
            report.h2_pass = false;
            continue;
        };
        report.h1_nonneg &= mu >= 0.0;
        report.h1_monotone &= dmu <= 0.0;
        let margin = -dmu - delta_test * mu;
        if margin < report.h2_margin {
            report.h2_margin = margin;
            report.worst_s = s;
        }
    }
    report.h2_pass &= report.h2_margin >= 0.0;
    report
}

/// Picks `γ = safety · min{m λ₁, δ}` with `safety ∈ (0, 1)`.
pub fn gamma_select(m: f64, lambda1: f64, delta: f64, safety: f64) -> Result<f64> {
    if !(m > 0.0 && lambda1 > 0.0 && delta > 0.0) {
        return Err(Error::param("gamma_select", "m, λ₁ and δ must be positive"));
    }
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::param("safety", format!("must lie strictly inside (0, 1), got {safety}")));
    }
    Ok(safety * (m * lambda1).min(delta))
}

/// `K_μ = e^γ ∫_0^1 μ(s) ds + μ(1) e^δ (γ - δ)^{-2}`, the bound of the lift
/// operator from the weighted past-history space into history space.
pub fn k_mu_bound(kernel: &MemoryKernel, gamma: f64, delta: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < delta) {
        return Err(Error::param("gamma", format!("need 0 < γ < δ, got γ = {gamma}, δ = {delta}")));
    }
    let head = kernel.mass_between(0.0, 1.0)?;
    let mu1 = kernel.mu_unchecked(1.0);
    Ok(libm::exp(gamma) * head + mu1 * libm::exp(delta) / ((gamma - delta) * (gamma - delta)))
}

/// Product-integration rule for the measure `μ(s) ds` on `(0, ∞)`.
///
/// The half line is cut at `s_max` into geometric cells clustered at the
/// origin. Each cell carries a small Gauss rule with respect to `μ`
/// restricted to that cell, rescaled so the cell weights sum to the exact
/// cell mass `k(a) - k(b)`. The tail mass `k(s_max)` is lumped onto the last
/// node, so the weights telescope to `k(0)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightedQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub mass: f64,
    pub k0: f64,
    pub s_max: f64,
    pub points_per_cell: usize,
    /// Relative accuracy estimate: the worst of the mass defect and the
    /// errors on the probe integrands `1 - e^{-β s}`.
    pub tolerance: f64,
}

/// Geometric grid parameters for [`build_quadrature_with`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub n_nodes: usize,
    pub s_max: f64,
    /// Gauss points per cell; `None` picks 4, 2 or 1 from `n_nodes`.
    pub points_per_cell: Option<usize>,
    /// First cell boundary as a fraction of `s_max`.
    pub first_fraction: f64,
}

impl QuadratureOptions {
    pub fn new(n_nodes: usize, s_max: f64) -> Self {
        QuadratureOptions {
            n_nodes,
            s_max,
            points_per_cell: None,
            first_fraction: 1e-4,
        }
    }
}

/// Default truncation horizon `40 / δ`.
pub fn default_s_max(kernel: &MemoryKernel) -> f64 {
    40.0 / kernel.delta()
}

pub fn build_quadrature(kernel: &MemoryKernel, n_nodes: usize, s_max: f64) -> Result<WeightedQuadrature> {
    build_quadrature_with(kernel, QuadratureOptions::new(n_nodes, s_max))
}

fn default_points_per_cell(n: usize) -> usize {
    if n % 4 == 0 && n >= 32 {
        4
    } else if n % 2 == 0 && n >= 8 {
        2
    } else {
        1
    }
}

const CELL_RESOLUTION: usize = 40;

pub fn build_quadrature_with(kernel: &MemoryKernel, opts: QuadratureOptions) -> Result<WeightedQuadrature> {
    let n = opts.n_nodes;
    if n < 2 {
        return Err(Error::param("n_nodes", format!("need at least 2 nodes, got {n}")));
    }
    if !(opts.s_max > 0.0 && opts.s_max.is_finite()) {
        return Err(Error::param("s_max", format!("must be positive, got {}", opts.s_max)));
    }
    let q = opts.points_per_cell.unwrap_or_else(|| default_points_per_cell(n));
    if q == 0 || n % q != 0 {
        return Err(Error::param(
            "points_per_cell",
            format!("{q} does not divide n_nodes = {n}"),
        ));
    }
    if !(opts.first_fraction > 0.0 && opts.first_fraction < 1.0) {
        return Err(Error::param("first_fraction", "must lie in (0, 1)"));
    }
    let n_cells = n / q;
    let mut bounds = Vec::with_capacity(n_cells + 1);
    bounds.push(0.0);
    if n_cells == 1 {
        bounds.push(opts.s_max);
    } else {
        let first = opts.first_fraction * opts.s_max;
        let ratio = libm::pow(1.0 / opts.first_fraction, 1.0 / (n_cells - 1) as f64);
        for i in 0..n_cells {
            bounds.push(first * libm::pow(ratio, i as f64));
        }
        bounds[n_cells] = opts.s_max;
    }
    let kvals: Vec<f64> = bounds.iter().map(|&b| k_of(kernel, b)).collect::<Result<_>>()?;
    let (gl_x, gl_w) = gauss_legendre(CELL_RESOLUTION);

    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for c in 0..n_cells {
        let (a, b) = (bounds[c], bounds[c + 1]);
        let cell_mass = kvals[c] - kvals[c + 1];
        let (xs, ws) = cell_gauss_rule(kernel, a, b, q, &gl_x, &gl_w)?;
        let raw: f64 = ws.iter().sum();
        for (x, w) in xs.into_iter().zip(ws) {
            nodes.push(a + (b - a) * x);
            weights.push(w * cell_mass / raw);
        }
    }
    let tail = kvals[n_cells];
    *weights.last_mut().expect("n >= 2") += tail;

    let k0 = kernel.k0();
    let mass: f64 = weights.iter().sum();
    let mut rule = WeightedQuadrature {
        nodes,
        weights,
        mass,
        k0,
        s_max: opts.s_max,
        points_per_cell: q,
        tolerance: 0.0,
    };
    if rule.weights.iter().any(|w| !(*w >= 0.0)) || rule.nodes.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(Error::Convergence {
            what: "quadrature construction",
            detail: String::from("non-positive weight or unsorted nodes"),
        });
    }
    let mut tol = ((mass - k0) / k0).abs();
    let delta = kernel.delta();
    for beta in [0.1 * delta, delta, 10.0 * delta] {
        let exact = k0 - kernel.laplace(beta);
        let approx = rule.integrate(|s| -libm::expm1(-beta * s));
        tol = tol.max(((approx - exact) / exact).abs());
    }
    rule.tolerance = tol.max(1e-15);
    Ok(rule)
}

/// q-point Gauss rule for `μ` restricted to `[a, b]`, in the local
/// coordinate `x = (s - a) / (b - a)`, via the discretized Stieltjes
/// procedure on a fine Gauss–Legendre sampling of the cell.
fn cell_gauss_rule(
    kernel: &MemoryKernel,
    a: f64,
    b: f64,
    q: usize,
    gl_x: &[f64],
    gl_w: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let width = b - a;
    let alpha = kernel.alpha();
    let mut xs = Vec::with_capacity(gl_x.len());
    let mut ws = Vec::with_capacity(gl_x.len());
    if a == 0.0 && alpha > 0.0 {
        // s = b y^{1/(1-α)} absorbs the s^{-α} factor: μ ds = b^{1-α}/(1-α) e^{-δ s} dy
        let expo = 1.0 / (1.0 - alpha);
        let scale = libm::pow(b, 1.0 - alpha) / (1.0 - alpha);
        for (&t, &w) in gl_x.iter().zip(gl_w) {
            let y = 0.5 * (t + 1.0);
            let s = b * libm::pow(y, expo);
            xs.push(s / b);
            ws.push(0.5 * w * scale * libm::exp(-kernel.delta() * s));
        }
    } else {
        for (&t, &w) in gl_x.iter().zip(gl_w) {
            let x = 0.5 * (t + 1.0);
            xs.push(x);
            ws.push(0.5 * w * width * kernel.mu_unchecked(a + width * x));
        }
    }
    if q == 1 {
        let m0: f64 = ws.iter().sum();
        let m1: f64 = xs.iter().zip(&ws).map(|(x, w)| x * w).sum();
        return Ok((alloc::vec![m1 / m0], alloc::vec![m0]));
    }
    // Stieltjes: recurrence coefficients of the monic orthogonal polynomials
    let mut diag = Vec::with_capacity(q);
    let mut off = Vec::with_capacity(q);
    let mut p_prev = alloc::vec![0.0; xs.len()];
    let mut p_cur = alloc::vec![1.0; xs.len()];
    let mut norm_prev = 1.0;
    let mut beta0 = 0.0;
    for j in 0..q {
        let norm: f64 = ws.iter().zip(&p_cur).map(|(w, p)| w * p * p).sum();
        let xnorm: f64 = ws.iter().zip(&p_cur).zip(&xs).map(|((w, p), x)| w * x * p * p).sum();
        let alpha_j = xnorm / norm;
        let beta_j = if j == 0 { norm } else { norm / norm_prev };
        if j == 0 {
            beta0 = norm;
        } else {
            off.push(libm::sqrt(beta_j));
        }
        diag.push(alpha_j);
        let next: Vec<f64> = xs
            .iter()
            .zip(&p_cur)
            .zip(&p_prev)
            .map(|((x, pc), pp)| (x - alpha_j) * pc - if j == 0 { 0.0 } else { beta_j * pp })
            .collect();
        p_prev = core::mem::replace(&mut p_cur, next);
        norm_prev = norm;
    }
    let (nodes, first_sq) = tridiagonal_eigen(&diag, &off);
    let weights = first_sq.iter().map(|z| z * beta0).collect();
    Ok((nodes, weights))
}

impl WeightedQuadrature {
    /// A rule with no nodes, used when the memory term is switched off.
    pub fn empty() -> Self {
        WeightedQuadrature {
            nodes: Vec::new(),
            weights: Vec::new(),
            mass: 0.0,
            k0: 0.0,
            s_max: 0.0,
            points_per_cell: 1,
            tolerance: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ ω_i g(s_i)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(s, w)| w * g(*s)).sum()
    }

    /// First moment `Σ ω_i s_i ≈ ∫ μ(s) s ds`.
    pub fn first_moment(&self) -> f64 {
        self.integrate(|s| s)
    }
}
